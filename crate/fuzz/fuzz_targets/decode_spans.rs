#![no_main]

use corrner::corpus::{decode_spans, encode_tags, DecodeMode, Scheme};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let tags: Vec<&str> = text.lines().collect();
    let tokens: Vec<String> = (0..tags.len()).map(|i| format!("t{i}")).collect();
    for scheme in [Scheme::Bio, Scheme::Bioes] {
        if let Ok(spans) = decode_spans(&tokens, &tags, scheme, DecodeMode::Strict) {
            let back = encode_tags(&spans, tags.len(), scheme).expect("decoded spans encode");
            assert_eq!(back, tags);
        }
        if let Ok(spans) = decode_spans(&tokens, &tags, scheme, DecodeMode::Lenient) {
            assert!(spans.windows(2).all(|w| w[0].end <= w[1].start));
            let back = encode_tags(&spans, tags.len(), scheme).expect("decoded spans encode");
            let again = decode_spans(&tokens, &back, scheme, DecodeMode::Strict).expect("encoded tags are well formed");
            assert_eq!(again, spans);
        }
    }
});
