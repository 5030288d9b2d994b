#![no_main]

use hedonic_core::dino::TrainingLog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = TrainingLog::parse(text) {
        let _ = log.summary(20).map(|s| s.render(None));
    }
});
