#![no_main]

use corrner::corpus::Sentence;
use corrner::tagger::CrfModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = CrfModel::from_json(text) {
        let again = CrfModel::from_json(&model.to_json()).expect("written model loads");
        assert_eq!(again.weights(), model.weights());
        let tagged = model.predict(&Sentence::from_text("f", "吉林省白城市"), None);
        assert_eq!(tagged.tags.len(), 6);
    }
});
