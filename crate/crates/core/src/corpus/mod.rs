//! Sentences, tag schemes, entity spans and the CoNLL column format.

mod conll;
mod scheme;
mod spans;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conll::{parse_conll, read_conll, read_pool, to_conll_string, write_conll, ConllOptions};
pub use scheme::{LabelSet, Prefix, Scheme, Tag};
pub use spans::{decode_spans, encode_tags, DecodeMode};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed tag sequence at position {position} ({tag}): {reason}")]
    MalformedTags {
        position: usize,
        tag: String,
        reason: &'static str,
    },
    #[error("invalid spans: {0}")]
    InvalidSpans(String),
    #[error("bad tag {0:?}")]
    BadTag(String),
    #[error("tag {tag:?} is not part of the {scheme} scheme")]
    TagOutsideScheme { tag: String, scheme: Scheme },
    #[error("bad entity type {0:?}")]
    BadType(String),
    #[error("duplicate entity type {0:?}")]
    DuplicateType(String),
    #[error("unknown tag scheme {0:?}")]
    UnknownScheme(String),
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("bad token {0:?}: tokens must be non-empty and free of tabs and newlines")]
    BadToken(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A tokenized unit of text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Sentence, CorpusError> {
        for t in &tokens {
            check_token(t)?;
        }
        Ok(Sentence {
            id: id.into(),
            tokens,
        })
    }

    /// One token per code point; whitespace is dropped.
    pub fn from_text(id: impl Into<String>, text: &str) -> Sentence {
        Sentence {
            id: id.into(),
            tokens: tokenize_chars(text),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.concat()
    }

    pub fn surface(&self, start: usize, end: usize) -> String {
        self.tokens[start..end].concat()
    }
}

pub fn tokenize_chars(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(String::from)
        .collect()
}

fn check_token(t: &str) -> Result<(), CorpusError> {
    if t.is_empty() || t.contains(['\t', '\n', '\r']) {
        Err(CorpusError::BadToken(t.to_string()))
    } else {
        Ok(())
    }
}

/// Half-open `[start, end)` token span with its entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub label: String,
    pub surface: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>, tokens: &[String]) -> EntitySpan {
        EntitySpan {
            start,
            end,
            label: label.into(),
            surface: tokens[start..end].concat(),
        }
    }

    pub fn key(&self) -> (usize, usize, &str) {
        (self.start, self.end, &self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub tags: Vec<String>,
}

impl LabeledSentence {
    pub fn new(sentence: Sentence, tags: Vec<String>) -> Result<LabeledSentence, CorpusError> {
        if sentence.len() != tags.len() {
            return Err(CorpusError::LengthMismatch {
                tokens: sentence.len(),
                tags: tags.len(),
            });
        }
        Ok(LabeledSentence { sentence, tags })
    }

    pub fn from_spans(
        sentence: Sentence,
        spans: &[EntitySpan],
        scheme: Scheme,
    ) -> Result<LabeledSentence, CorpusError> {
        let tags = encode_tags(spans, sentence.len(), scheme)?;
        Ok(LabeledSentence { sentence, tags })
    }

    pub fn spans(&self, scheme: Scheme, mode: DecodeMode) -> Result<Vec<EntitySpan>, CorpusError> {
        decode_spans(&self.sentence.tokens, &self.tags, scheme, mode)
    }

    /// Re-encodes the tags under `to`, decoding strictly under `from`.
    pub fn convert(&self, from: Scheme, to: Scheme) -> Result<LabeledSentence, CorpusError> {
        let spans = self.spans(from, DecodeMode::Strict)?;
        LabeledSentence::from_spans(self.sentence.clone(), &spans, to)
    }
}

/// Guesses the scheme of a tagged corpus: BIOES if any `E-`/`S-` tag occurs.
pub fn detect_scheme<'a>(sentences: impl IntoIterator<Item = &'a LabeledSentence>) -> Scheme {
    for s in sentences {
        for t in &s.tags {
            if t.starts_with("E-") || t.starts_with("S-") {
                return Scheme::Bioes;
            }
        }
    }
    Scheme::Bio
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_text_splits_code_points() {
        let s = Sentence::from_text("q", "吉林 省A1");
        assert_eq!(s.tokens, ["吉", "林", "省", "A", "1"]);
        assert_eq!(s.text(), "吉林省A1");
    }

    #[test]
    fn rejects_bad_tokens() {
        assert!(Sentence::new("x", vec!["a\tb".into()]).is_err());
        assert!(Sentence::new("x", vec!["".into()]).is_err());
        assert!(Sentence::new("x", vec!["ab".into(), "c".into()]).is_ok());
    }

    #[test]
    fn convert_bio_to_bioes() {
        let s = Sentence::from_text("x", "吉林白城市");
        let tags = ["B-PROV", "I-PROV", "B-CITY", "I-CITY", "I-CITY"]
            .map(String::from)
            .to_vec();
        let ls = LabeledSentence::new(s, tags).unwrap();
        let conv = ls.convert(Scheme::Bio, Scheme::Bioes).unwrap();
        assert_eq!(conv.tags, ["B-PROV", "E-PROV", "B-CITY", "I-CITY", "E-CITY"]);
        assert_eq!(detect_scheme([&ls]), Scheme::Bio);
        assert_eq!(detect_scheme([&conv]), Scheme::Bioes);
    }
}
