#![no_main]

use libfuzzer_sys::fuzz_target;
use procinv_core::dataset::shard::{check_header, decode_footer, unframe, RecordPayload};

fuzz_target!(|data: &[u8]| {
    let _ = check_header(data, 0);
    let _ = decode_footer(data);
    if let Ok((payload, used)) = unframe(data) {
        assert!(used <= data.len());
        if let Ok(record) = RecordPayload::from_bytes(payload) {
            assert_eq!(RecordPayload::from_bytes(&record.to_bytes()).expect("re-encoded record parses"), record);
        }
    }
    let _ = RecordPayload::from_bytes(data);
});
