use serde::{Deserialize, Serialize};

use super::TaggerError;
use crate::correlator::{Channel, CorrelationFeatures};
use crate::corpus::Sentence;
use crate::retriever::is_cjk;

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureTemplate {
    /// The token itself: `U0=林`.
    TokenUnigram,
    /// A neighbouring token: `U-1=吉`, `<BOS>`/`<EOS>` past the edges.
    TokenWindow { offset: i32 },
    /// Tokens at `offset` and `offset + 1`: `B-1=吉|林`.
    TokenBigram { offset: i32 },
    /// Coarse character class of the token at `offset`: `T0=han`.
    CharType { offset: i32 },
    /// A correlator channel: `CORR:ngram=2+`, `CORR:vote=PROV:1`.
    Correlation { channel: Channel },
}

impl FeatureTemplate {
    pub fn validate(&self) -> Result<(), TaggerError> {
        let ok = match *self {
            FeatureTemplate::TokenUnigram | FeatureTemplate::Correlation { .. } => true,
            FeatureTemplate::TokenWindow { offset } | FeatureTemplate::CharType { offset } => {
                (-2..=2).contains(&offset)
            }
            FeatureTemplate::TokenBigram { offset } => (-2..=1).contains(&offset),
        };
        if ok {
            Ok(())
        } else {
            Err(TaggerError::BadTemplate(format!("{self:?}: offset out of range")))
        }
    }
}

pub fn default_templates() -> Vec<FeatureTemplate> {
    use FeatureTemplate::*;
    vec![
        TokenUnigram,
        TokenWindow { offset: -2 },
        TokenWindow { offset: -1 },
        TokenWindow { offset: 1 },
        TokenWindow { offset: 2 },
        TokenBigram { offset: -1 },
        TokenBigram { offset: 0 },
        CharType { offset: 0 },
    ]
}

/// Templates plus one correlation template per channel.
pub fn with_correlation(mut templates: Vec<FeatureTemplate>, channels: &[Channel]) -> Vec<FeatureTemplate> {
    for &channel in channels {
        let t = FeatureTemplate::Correlation { channel };
        if !templates.contains(&t) {
            templates.push(t);
        }
    }
    templates
}

fn token_at(sentence: &Sentence, pos: i64) -> &str {
    if pos < 0 {
        BOS
    } else if pos as usize >= sentence.len() {
        EOS
    } else {
        &sentence.tokens[pos as usize]
    }
}

pub fn char_class(token: &str) -> &'static str {
    match token {
        BOS => return "bos",
        EOS => return "eos",
        _ => {}
    }
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if is_cjk(c) => "han",
        Some(c) if c.is_ascii_digit() => "digit",
        Some(c) if c.is_alphabetic() => "alpha",
        Some(c) if c.is_ascii_punctuation() || !c.is_alphanumeric() => "punct",
        _ => "other",
    }
}

/// Feature strings active at `position`.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
    templates: &[FeatureTemplate],
    correlation: Option<&CorrelationFeatures>,
) -> Vec<String> {
    let pos = position as i64;
    let mut out = Vec::with_capacity(templates.len());
    for t in templates {
        match *t {
            FeatureTemplate::TokenUnigram => out.push(format!("U0={}", token_at(sentence, pos))),
            FeatureTemplate::TokenWindow { offset } => {
                out.push(format!("U{offset}={}", token_at(sentence, pos + offset as i64)))
            }
            FeatureTemplate::TokenBigram { offset } => {
                let p = pos + offset as i64;
                out.push(format!("B{offset}={}|{}", token_at(sentence, p), token_at(sentence, p + 1)))
            }
            FeatureTemplate::CharType { offset } => {
                out.push(format!("T{offset}={}", char_class(token_at(sentence, pos + offset as i64))))
            }
            FeatureTemplate::Correlation { channel } => {
                if let Some(c) = correlation {
                    out.extend(c.features(position, channel));
                }
            }
        }
    }
    out
}
