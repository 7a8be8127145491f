#![no_main]

use corrner::retriever::{decode_postings, encode_postings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = decode_postings(data) {
        let bytes = encode_postings(&file);
        assert_eq!(decode_postings(&bytes).expect("re-encoded postings decode"), file);
    }
});
