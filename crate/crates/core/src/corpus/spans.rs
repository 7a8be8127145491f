use serde::{Deserialize, Serialize};

use super::scheme::{Prefix, Scheme, Tag};
use super::{CorpusError, EntitySpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Reject ill-formed sequences.
    Strict,
    /// Repair ill-formed sequences: a dangling `I-`/`E-` opens a new span.
    #[default]
    Lenient,
}

/// Extracts entity spans from a tag sequence.
///
/// Output spans are sorted by start and never overlap.
pub fn decode_spans<S: AsRef<str>>(
    tokens: &[String],
    tags: &[S],
    scheme: Scheme,
    mode: DecodeMode,
) -> Result<Vec<EntitySpan>, CorpusError> {
    if tokens.len() != tags.len() {
        return Err(CorpusError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    let strict = mode == DecodeMode::Strict;
    let mut spans = Vec::new();
    // (start, type) of the span currently open
    let mut open: Option<(usize, String)> = None;

    let malformed = |position: usize, tag: &str, reason: &'static str| CorpusError::MalformedTags {
        position,
        tag: tag.to_string(),
        reason,
    };

    for (i, raw) in tags.iter().enumerate() {
        let raw = raw.as_ref();
        let tag = Tag::parse(raw)?;
        if !tag.fits(scheme) {
            return Err(CorpusError::TagOutsideScheme {
                tag: raw.to_string(),
                scheme,
            });
        }
        // In BIOES an open span must be closed by E-; in BIO anything but I- closes it.
        let must_be_closed = scheme == Scheme::Bioes;
        match tag {
            Tag::Outside => {
                if strict && must_be_closed && open.is_some() {
                    return Err(malformed(i, raw, "span left open"));
                }
                close(&mut open, i, tokens, &mut spans);
            }
            Tag::Entity(Prefix::Begin, ty) => {
                if strict && must_be_closed && open.is_some() {
                    return Err(malformed(i, raw, "span left open"));
                }
                close(&mut open, i, tokens, &mut spans);
                open = Some((i, ty));
            }
            Tag::Entity(Prefix::Single, ty) => {
                if strict && open.is_some() {
                    return Err(malformed(i, raw, "span left open"));
                }
                close(&mut open, i, tokens, &mut spans);
                spans.push(EntitySpan::new(i, i + 1, ty, tokens));
            }
            Tag::Entity(p @ (Prefix::Inside | Prefix::End), ty) => {
                let continues = matches!(&open, Some((_, open_ty)) if *open_ty == ty);
                if !continues {
                    if strict {
                        return Err(malformed(i, raw, "continuation without a matching begin"));
                    }
                    close(&mut open, i, tokens, &mut spans);
                    open = Some((i, ty));
                } else if p == Prefix::End {
                    close(&mut open, i + 1, tokens, &mut spans);
                }
            }
        }
    }
    if strict && scheme == Scheme::Bioes && open.is_some() {
        let last = tags.len() - 1;
        return Err(malformed(last, tags[last].as_ref(), "span left open at end of sentence"));
    }
    close(&mut open, tags.len(), tokens, &mut spans);
    Ok(spans)
}

fn close(
    open: &mut Option<(usize, String)>,
    end: usize,
    tokens: &[String],
    spans: &mut Vec<EntitySpan>,
) {
    if let Some((start, ty)) = open.take() {
        spans.push(EntitySpan::new(start, end, ty, tokens));
    }
}

/// Renders spans as a tag sequence of `length` tags.
pub fn encode_tags(
    spans: &[EntitySpan],
    length: usize,
    scheme: Scheme,
) -> Result<Vec<String>, CorpusError> {
    let mut order: Vec<&EntitySpan> = spans.iter().collect();
    order.sort_by_key(|s| (s.start, s.end));
    let mut tags = vec!["O".to_string(); length];
    let mut cursor = 0;
    for s in order {
        if s.start >= s.end || s.end > length {
            return Err(CorpusError::InvalidSpans(format!(
                "span [{}, {}) out of bounds for length {length}",
                s.start, s.end
            )));
        }
        if s.start < cursor {
            return Err(CorpusError::InvalidSpans(format!(
                "span [{}, {}) overlaps a preceding span",
                s.start, s.end
            )));
        }
        if s.label.is_empty() || s.label == "O" {
            return Err(CorpusError::BadType(s.label.clone()));
        }
        let ty = &s.label;
        match scheme {
            Scheme::Bio => {
                tags[s.start] = format!("B-{ty}");
                for t in &mut tags[s.start + 1..s.end] {
                    *t = format!("I-{ty}");
                }
            }
            Scheme::Bioes if s.end - s.start == 1 => tags[s.start] = format!("S-{ty}"),
            Scheme::Bioes => {
                tags[s.start] = format!("B-{ty}");
                for t in &mut tags[s.start + 1..s.end - 1] {
                    *t = format!("I-{ty}");
                }
                tags[s.end - 1] = format!("E-{ty}");
            }
        }
        cursor = s.end;
    }
    Ok(tags)
}
