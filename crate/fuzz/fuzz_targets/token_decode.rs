#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::codec::{Codec, TokenSequence};

fuzz_target!(|data: &[u8]| {
    let codec = Codec::for_catalog(64);
    let Ok(tokens) = TokenSequence::from_bytes(data) else { return };
    if let Ok(b) = codec.decode(&tokens) {
        // Anything the decoder accepts must be encodable and stable from there on.
        let again = codec.encode(&b).expect("decoded building re-encodes");
        assert_eq!(codec.decode(&again).expect("re-encoded tokens decode"), b);
    }
});
