//! Replays the fuzz corpus through every parser, with truncated and
//! bit-flipped variants, and cross-checks PNG decoding against the `png` crate.

use std::fs;
use std::path::{Path, PathBuf};

use hedonic_core::dino::TrainingLog;
use hedonic_core::features::{parse_exclusions, FeatureCache};
use hedonic_core::hedonic::{parse_alpha_grid, EvalReport};
use hedonic_core::image_io::{decode_image, decode_png, decode_ppm};
use hedonic_core::tabular::{describe, parse_manifest, SplitRatios, WinsorizeSpec};
use hedonic_core::vit::WeightStore;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let b = fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

fn run(target: &str, bytes: &[u8]) {
    let text = std::str::from_utf8(bytes).ok();
    match target {
        "ppm" => {
            let _ = decode_ppm(bytes);
            let _ = decode_image(bytes);
        }
        "png" => {
            let _ = decode_png(bytes);
        }
        "vhw1" => {
            if let Ok(w) = WeightStore::from_bytes(bytes) {
                assert_eq!(WeightStore::from_bytes(&w.to_bytes()).unwrap().to_bytes(), w.to_bytes());
            }
        }
        "vhfc1" => {
            if let Some(t) = text {
                if let Ok(c) = FeatureCache::parse(t) {
                    assert_eq!(FeatureCache::parse(&c.to_text()).unwrap(), c);
                }
                let _ = parse_exclusions(t);
            }
        }
        "manifest" => {
            if let Some(Ok(r)) = text.map(parse_manifest) {
                let _ = describe(&r);
            }
        }
        "alpha_grid" => {
            let _ = text.map(parse_alpha_grid);
        }
        "training_log" => {
            if let Some(Ok(log)) = text.map(TrainingLog::parse) {
                let _ = log.summary(20);
            }
        }
        "report_csv" => {
            if let Some(Ok(r)) = text.map(EvalReport::parse_csv) {
                let _ = r.render();
            }
        }
        "options" => {
            if let Some((&k, rest)) = bytes.split_first() {
                if let Ok(t) = std::str::from_utf8(rest) {
                    if k == b's' {
                        let _ = SplitRatios::parse(t);
                    } else {
                        let _ = WinsorizeSpec::parse(t);
                    }
                }
            }
        }
        other => panic!("unknown target {other}"),
    }
}

const TARGETS: [&str; 9] = ["ppm", "png", "vhw1", "vhfc1", "manifest", "alpha_grid", "training_log", "report_csv", "options"];

#[test]
fn seeds_parse() {
    let ok = |target: &str, b: &[u8]| -> bool {
        let t = std::str::from_utf8(b).ok();
        match target {
            "ppm" => decode_ppm(b).is_ok(),
            "png" => decode_png(b).is_ok(),
            "vhw1" => WeightStore::from_bytes(b).is_ok(),
            "vhfc1" => FeatureCache::parse(t.unwrap()).is_ok(),
            "manifest" => parse_manifest(t.unwrap()).is_ok(),
            "alpha_grid" => parse_alpha_grid(t.unwrap()).is_ok(),
            "training_log" => TrainingLog::parse(t.unwrap()).is_ok(),
            "report_csv" => EvalReport::parse_csv(t.unwrap()).is_ok(),
            "options" => {
                let s = std::str::from_utf8(&b[1..]).unwrap();
                if b[0] == b's' { SplitRatios::parse(s).is_ok() } else { WinsorizeSpec::parse(s).is_ok() }
            }
            _ => unreachable!(),
        }
    };
    for target in TARGETS {
        for (path, bytes) in corpus(target) {
            // Seeds named `reject_*` hold inputs outside the supported formats.
            let expect = !path.file_name().unwrap().to_str().unwrap().starts_with("reject_");
            assert_eq!(ok(target, &bytes), expect, "seed {}", path.display());
        }
    }
}

#[test]
fn truncated_and_flipped_seeds_never_panic() {
    for target in TARGETS {
        for (_, bytes) in corpus(target) {
            for cut in 0..bytes.len().min(400) {
                run(target, &bytes[..cut]);
            }
            for i in (0..bytes.len()).step_by((bytes.len() / 64).max(1)) {
                for bit in [0x01u8, 0x10, 0x80] {
                    let mut m = bytes.clone();
                    m[i] ^= bit;
                    run(target, &m);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_splices_never_panic(t in 0usize..TARGETS.len(), at in any::<prop::sample::Index>(), junk in prop::collection::vec(any::<u8>(), 0..32)) {
        let target = TARGETS[t];
        for (_, bytes) in corpus(target) {
            let i = at.index(bytes.len() + 1);
            let mut m = bytes[..i].to_vec();
            m.extend_from_slice(&junk);
            m.extend_from_slice(&bytes[i..]);
            run(target, &m);
        }
    }
}

fn encode(w: u32, h: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    encode_filtered(w, h, color, depth, png::Filter::Adaptive, data)
}

fn encode_filtered(w: u32, h: u32, color: png::ColorType, depth: png::BitDepth, filter: png::Filter, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut e = png::Encoder::new(&mut out, w, h);
    e.set_color(color);
    e.set_depth(depth);
    e.set_filter(filter);
    e.write_header().unwrap().write_image_data(data).unwrap();
    out
}

/// RGB8 pixels decoded by the `png` crate with alpha dropped.
fn reference_rgb(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut r = dec.read_info().unwrap();
    let mut buf = vec![0; r.output_buffer_size().unwrap()];
    let info = r.next_frame(&mut buf).unwrap();
    let (w, h) = (info.width as usize, info.height as usize);
    let ch = info.color_type.samples();
    let mut rgb = Vec::with_capacity(w * h * 3);
    for px in buf[..info.buffer_size()].chunks(ch) {
        rgb.extend_from_slice(&px[..3]);
    }
    (w, h, rgb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn png_decoding_matches_reference(
        w in 1u32..24,
        h in 1u32..24,
        kind in 0usize..2,
        filter in 0usize..6,
        seed in any::<u64>(),
    ) {
        let (color, depth) = [
            (png::ColorType::Rgb, png::BitDepth::Eight),
            (png::ColorType::Rgba, png::BitDepth::Eight),
        ][kind];
        let bytes_per_px = color.samples();
        let mut state = seed | 1;
        let data: Vec<u8> = (0..(w * h) as usize * bytes_per_px)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            })
            .collect();
        let filter = [
            png::Filter::NoFilter,
            png::Filter::Sub,
            png::Filter::Up,
            png::Filter::Avg,
            png::Filter::Paeth,
            png::Filter::Adaptive,
        ][filter];
        let file = encode_filtered(w, h, color, depth, filter, &data);
        let ours = decode_png(&file).unwrap();
        let (rw, rh, rgb) = reference_rgb(&file);
        prop_assert_eq!((ours.width(), ours.height()), (rw, rh));
        prop_assert_eq!(ours.pixels(), &rgb[..]);
    }
}

#[test]
fn unsupported_png_layouts_are_errors() {
    let cases = [
        (png::ColorType::Grayscale, png::BitDepth::Eight),
        (png::ColorType::GrayscaleAlpha, png::BitDepth::Eight),
        (png::ColorType::Rgb, png::BitDepth::Sixteen),
        (png::ColorType::Rgba, png::BitDepth::Sixteen),
        (png::ColorType::Grayscale, png::BitDepth::One),
    ];
    for (color, depth) in cases {
        let bits = color.samples() * depth as usize;
        let row = (3 * bits).div_ceil(8);
        let file = encode(3, 2, color, depth, &vec![0x5a; row * 2]);
        assert!(decode_png(&file).is_err(), "{color:?} {depth:?}");
    }
}
