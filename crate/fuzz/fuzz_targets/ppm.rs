#![no_main]

use hedonic_core::image_io::{decode_image, decode_ppm, encode_ppm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_ppm(data) {
        assert_eq!(img.pixels().len(), img.width() * img.height() * 3);
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }
    let _ = decode_image(data);
});
