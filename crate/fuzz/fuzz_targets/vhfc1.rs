#![no_main]

use hedonic_core::features::{parse_exclusions, FeatureCache};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = FeatureCache::parse(text) {
        assert_eq!(FeatureCache::parse(&c.to_text()).unwrap(), c);
    }
    let _ = parse_exclusions(text);
});
