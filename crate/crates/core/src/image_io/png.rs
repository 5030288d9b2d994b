//! PNG decoding restricted to non-interlaced, 8-bit truecolour (type 2) and
//! truecolour-with-alpha (type 6) images. Alpha is discarded.

use super::RasterImage;
use crate::error::{Error, Result};

pub const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

// Larger images are rejected before any allocation proportional to them.
const MAX_PIXELS: usize = 1 << 28;

fn err(msg: impl Into<String>) -> Error {
    Error::Decode(format!("png: {}", msg.into()))
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

struct Header {
    width: usize,
    height: usize,
    channels: usize,
}

fn parse_header(data: &[u8]) -> Result<Header> {
    if data.len() != 13 {
        return Err(err("IHDR must be 13 bytes"));
    }
    let width = be_u32(&data[0..4]) as usize;
    let height = be_u32(&data[4..8]) as usize;
    let (depth, color, compression, filter, interlace) = (data[8], data[9], data[10], data[11], data[12]);
    if width == 0 || height == 0 || width > i32::MAX as usize || height > i32::MAX as usize {
        return Err(err(format!("invalid dimensions {width}x{height}")));
    }
    if width.checked_mul(height).map_or(true, |p| p > MAX_PIXELS) {
        return Err(err("image too large"));
    }
    if depth != 8 {
        return Err(err(format!("unsupported bit depth {depth}")));
    }
    let channels = match color {
        2 => 3,
        6 => 4,
        other => return Err(err(format!("unsupported color type {other}"))),
    };
    if compression != 0 || filter != 0 {
        return Err(err("unknown compression or filter method"));
    }
    if interlace != 0 {
        return Err(err("interlaced images are not supported"));
    }
    Ok(Header { width, height, channels })
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = a as i16 + b as i16 - c as i16;
    let pa = (p - a as i16).abs();
    let pb = (p - b as i16).abs();
    let pc = (p - c as i16).abs();
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

/// Reverses per-scanline filtering in place; returns the packed pixel rows.
fn unfilter(raw: &[u8], h: &Header) -> Result<Vec<u8>> {
    let bpp = h.channels;
    let stride = h.width * bpp;
    let mut out = vec![0u8; stride * h.height];
    for y in 0..h.height {
        let line = &raw[y * (stride + 1)..(y + 1) * (stride + 1)];
        let (kind, src) = (line[0], &line[1..]);
        let (prev, cur) = out.split_at_mut(y * stride);
        let prev = if y == 0 { None } else { Some(&prev[(y - 1) * stride..]) };
        let cur = &mut cur[..stride];
        for x in 0..stride {
            let a = if x >= bpp { cur[x - bpp] } else { 0 };
            let b = prev.map_or(0, |p| p[x]);
            let c = if x >= bpp { prev.map_or(0, |p| p[x - bpp]) } else { 0 };
            let pred = match kind {
                0 => 0,
                1 => a,
                2 => b,
                3 => ((a as u16 + b as u16) / 2) as u8,
                4 => paeth(a, b, c),
                other => return Err(err(format!("invalid filter type {other} on row {y}"))),
            };
            cur[x] = src[x].wrapping_add(pred);
        }
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<RasterImage> {
    if bytes.len() < 8 || bytes[..8] != SIGNATURE {
        return Err(err("missing signature"));
    }
    let mut pos = 8;
    let mut header: Option<Header> = None;
    let mut idat = Vec::new();
    let mut seen_end = false;
    while pos < bytes.len() {
        if bytes.len() - pos < 12 {
            return Err(err("truncated chunk"));
        }
        let len = be_u32(&bytes[pos..]) as usize;
        if len > i32::MAX as usize || bytes.len() - pos - 12 < len {
            return Err(err("truncated chunk"));
        }
        let kind = &bytes[pos + 4..pos + 8];
        let data = &bytes[pos + 8..pos + 8 + len];
        let crc = be_u32(&bytes[pos + 8 + len..]);
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(kind);
        hasher.update(data);
        if hasher.finalize() != crc {
            return Err(err(format!("CRC mismatch in {} chunk", String::from_utf8_lossy(kind))));
        }
        pos += 12 + len;
        match kind {
            b"IHDR" => {
                if header.is_some() {
                    return Err(err("duplicate IHDR"));
                }
                header = Some(parse_header(data)?);
            }
            _ if header.is_none() => return Err(err("first chunk must be IHDR")),
            b"IDAT" => idat.extend_from_slice(data),
            b"IEND" => {
                seen_end = true;
                break;
            }
            // PLTE is optional for truecolour; ancillary chunks are ignored.
            b"PLTE" => {}
            _ if kind[0].is_ascii_lowercase() => {}
            _ => return Err(err(format!("unknown critical chunk {}", String::from_utf8_lossy(kind)))),
        }
    }
    let header = header.ok_or_else(|| err("missing IHDR"))?;
    if !seen_end {
        return Err(err("truncated stream (no IEND)"));
    }
    let expected = (header.width * header.channels + 1) * header.height;
    let raw = miniz_oxide::inflate::decompress_to_vec_zlib_with_limit(&idat, expected)
        .map_err(|e| err(format!("corrupt image data: {:?}", e.status)))?;
    if raw.len() != expected {
        return Err(err(format!("truncated image data ({} of {expected} bytes)", raw.len())));
    }
    let packed = unfilter(&raw, &header)?;
    let pixels = if header.channels == 3 {
        packed
    } else {
        packed.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()
    };
    RasterImage::new(header.height, header.width, pixels)
}
