#![no_main]

use hedonic_core::vit::WeightStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = WeightStore::from_bytes(data) {
        let again = WeightStore::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(again.to_bytes(), w.to_bytes());
    }
});
