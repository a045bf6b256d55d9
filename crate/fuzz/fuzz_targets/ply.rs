#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::render::{read_ply, write_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(pc) = read_ply(data) {
        let back = read_ply(&write_ply(&pc)).expect("written cloud parses");
        assert_eq!(back.len(), pc.len());
    }
});
