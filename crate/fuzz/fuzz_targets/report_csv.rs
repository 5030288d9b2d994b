#![no_main]

use hedonic_core::hedonic::EvalReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = EvalReport::parse_csv(text) {
        let _ = r.render();
    }
});
