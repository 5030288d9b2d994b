#![no_main]

use hedonic_core::tabular::{SplitRatios, WinsorizeSpec};
use libfuzzer_sys::fuzz_target;

// First byte picks the parser: `s` split ratios, anything else winsorize limits.
fuzz_target!(|data: &[u8]| {
    let Some((&kind, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if kind == b's' {
        if let Ok(r) = SplitRatios::parse(text) {
            let _ = r.validate();
        }
    } else if let Ok(w) = WinsorizeSpec::parse(text) {
        let _ = w.validate();
    }
});
