#![no_main]

use hedonic_core::image_io::decode_png;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_png(data) {
        assert_eq!(img.pixels().len(), img.width() * img.height() * 3);
    }
});
