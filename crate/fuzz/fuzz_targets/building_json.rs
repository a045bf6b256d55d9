#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::codec::Codec;
use procinv_core::schema::BuildingAbstraction;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(b) = BuildingAbstraction::from_json(text) else { return };
    let _ = BuildingAbstraction::from_json(&b.to_json()).expect("serialized building parses");
    let _ = Codec::for_catalog(64).encode(&b);
});
