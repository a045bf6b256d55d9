#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::codec::Vocabulary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Vocabulary::from_manifest_json(text) {
        let again = Vocabulary::from_manifest_json(&v.manifest_json()).expect("manifest round-trips");
        assert_eq!(again.size(), v.size());
    }
});
