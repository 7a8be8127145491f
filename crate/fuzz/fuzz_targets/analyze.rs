#![no_main]

use corrner::retriever::{analyze, is_cjk};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for term in analyze(text) {
        assert!(!term.is_empty());
        let mut chars = term.chars();
        let first = chars.next().unwrap();
        if is_cjk(first) {
            assert!(chars.next().is_none());
        } else {
            assert!(term.chars().all(|c| c.is_ascii_alphanumeric() && !c.is_ascii_uppercase()));
        }
    }
});
