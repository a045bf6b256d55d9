#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::dataset::{building_from_bytes, building_to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = building_from_bytes(data) {
        let bytes = building_to_bytes(&b);
        building_from_bytes(&bytes).expect("re-encoded building parses");
    }
});
