#![no_main]

use corrner::retriever::IndexMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(meta) = serde_json::from_slice::<IndexMeta>(data) {
        let text = serde_json::to_string(&meta).expect("meta serializes");
        let _ = serde_json::from_str::<IndexMeta>(&text).expect("written meta parses");
    }
});
