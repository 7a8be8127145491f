#![no_main]

use corrner::corpus::{parse_conll, to_conll_string, ConllOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for opts in [ConllOptions::default(), ConllOptions::gold()] {
        if let Ok(sentences) = parse_conll(text, &opts) {
            let again = parse_conll(&to_conll_string(&sentences), &opts).expect("written CoNLL parses");
            assert_eq!(again.len(), sentences.len());
            for (a, b) in again.iter().zip(&sentences) {
                assert_eq!(a.sentence.tokens, b.sentence.tokens);
                assert_eq!(a.tags, b.tags);
            }
        }
    }
});
