#![no_main]

use hedonic_core::hedonic::parse_alpha_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_alpha_grid(text) {
        assert!(!grid.is_empty());
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid.iter().all(|a| a.is_finite() && *a >= 0.0));
    }
});
