//! Binary PPM (`P6`) with `maxval` 255.

use super::RasterImage;
use crate::error::{Error, Result};

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(pos) {
                    pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            _ => return pos,
        }
    }
}

fn read_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    *pos = skip_whitespace_and_comments(bytes, *pos);
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Decode(format!("ppm: missing {what}")));
    }
    // Ten digits already exceed any extent we accept.
    if *pos - start > 9 {
        return Err(Error::Decode(format!("ppm: {what} too large")));
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("ascii digits");
    Ok(text.parse().expect("at most nine digits"))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Decode("ppm: missing P6 magic".into()));
    }
    let mut pos = 2;
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::Decode("ppm: malformed header".into()));
    }
    let width = read_number(bytes, &mut pos, "width")?;
    let height = read_number(bytes, &mut pos, "height")?;
    let maxval = read_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Decode(format!("ppm: unsupported bit depth (maxval {maxval})")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Decode("ppm: expected whitespace after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(Error::Decode(format!("ppm: empty image {width}x{height}")));
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::Decode("ppm: dimensions overflow".into()))?;
    let body = &bytes[pos..];
    if body.len() < n {
        return Err(Error::Decode(format!("ppm: truncated stream ({} of {n} bytes)", body.len())));
    }
    RasterImage::new(height, width, body[..n].to_vec())
}

pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}
