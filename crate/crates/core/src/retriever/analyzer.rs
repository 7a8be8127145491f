/// Bumped whenever [`analyze`] changes its output for any input.
pub const ANALYZER_VERSION: &str = "corrner-standard-1";

/// Splits text into index terms.
///
/// Every CJK code point is its own term, maximal runs of ASCII alphanumerics
/// become one lowercased term, and everything else separates terms.
pub fn analyze(text: &str) -> Vec<String> {
    let mut terms = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            word.push(c.to_ascii_lowercase());
            continue;
        }
        if !word.is_empty() {
            terms.push(std::mem::take(&mut word));
        }
        if is_cjk(c) {
            terms.push(c.to_string());
        }
    }
    if !word.is_empty() {
        terms.push(word);
    }
    terms
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x309F       // Hiragana
        | 0x30A0..=0x30FF     // Katakana
        | 0x3400..=0x4DBF     // CJK Extension A
        | 0x4E00..=0x9FFF     // CJK Unified Ideographs
        | 0xAC00..=0xD7AF     // Hangul syllables
        | 0xF900..=0xFAFF     // CJK compatibility ideographs
        | 0x20000..=0x2FA1F   // Extensions B-F, compatibility supplement
        | 0x30000..=0x323AF   // Extensions G-H
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(analyze("吉林省A1路"), ["吉", "林", "省", "a1", "路"]);
        assert!(analyze("").is_empty());
        assert_eq!(analyze("Nike-Air 运动鞋"), ["nike", "air", "运", "动", "鞋"]);
    }

    #[test]
    fn punctuation_and_other_scripts_separate() {
        assert_eq!(analyze("（12号）,abc"), ["12", "号", "abc"]);
        assert_eq!(analyze("café"), ["caf"]);
        assert_eq!(analyze("ＡＢ"), Vec::<String>::new());
    }
}
