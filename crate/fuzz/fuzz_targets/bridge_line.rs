#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::decode::bridge::{BridgeRequest, BridgeResponse};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(req) = BridgeRequest::parse(line) {
        assert_eq!(BridgeRequest::parse(&req.to_line()).expect("request round-trips"), req);
    }
    for vocab_size in [0, 4, 3436] {
        if let Ok(scores) = BridgeResponse::parse(line, 0, vocab_size) {
            assert_eq!(scores.len(), vocab_size);
        }
    }
});
