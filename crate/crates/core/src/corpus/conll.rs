use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::scheme::{LabelSet, Tag};
use super::spans::{decode_spans, DecodeMode};
use super::{check_token, detect_scheme, CorpusError, LabeledSentence, Sentence};

/// Reader options for two-column CoNLL files.
///
/// No filter is applied by default.
#[derive(Debug, Clone, Default)]
pub struct ConllOptions<'a> {
    /// Reject tags outside this label set (and its scheme).
    pub label_set: Option<&'a LabelSet>,
    /// Validate every sentence with strict decoding.
    pub strict: bool,
    /// Drop sentences longer than this many tokens.
    pub max_len: Option<usize>,
    /// Drop sentences without any entity tag.
    pub require_entity: bool,
    /// Prefix for generated sentence ids (`{prefix}{index}`).
    pub id_prefix: String,
}

impl ConllOptions<'_> {
    pub fn gold() -> Self {
        ConllOptions {
            strict: true,
            ..Default::default()
        }
    }
}

pub fn read_conll(path: &Path, opts: &ConllOptions<'_>) -> Result<Vec<LabeledSentence>, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_conll(&text, opts)
}

/// Parses `token<TAB>tag` lines with blank lines between sentences.
pub fn parse_conll(text: &str, opts: &ConllOptions<'_>) -> Result<Vec<LabeledSentence>, CorpusError> {
    // (first line number, tokens, tags)
    let mut blocks: Vec<(usize, Vec<String>, Vec<String>)> = Vec::new();
    let mut cur: Option<(usize, Vec<String>, Vec<String>)> = None;

    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            if let Some(b) = cur.take() {
                blocks.push(b);
            }
            continue;
        }
        let mut cols = line.split('\t');
        let (token, tag) = match (cols.next(), cols.next(), cols.next()) {
            (Some(tok), Some(tag), None) => (tok, tag),
            (_, None, _) => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: "expected token<TAB>tag".into(),
                })
            }
            _ => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: "ragged line: more than two columns".into(),
                })
            }
        };
        check_token(token).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let parsed = Tag::parse(tag).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if let Some(ls) = opts.label_set {
            if ls.tag_index(tag).is_none() {
                let message = if parsed.fits(ls.scheme())
                    || parsed.entity_type().is_some_and(|t| !ls.has_type(t))
                {
                    format!("unknown tag {tag:?}")
                } else {
                    format!("tag {tag:?} does not belong to the {} scheme", ls.scheme())
                };
                return Err(CorpusError::Parse { line: lineno, message });
            }
        }
        let b = cur.get_or_insert_with(|| (lineno, Vec::new(), Vec::new()));
        b.1.push(token.to_string());
        b.2.push(tag.to_string());
    }
    if let Some(b) = cur.take() {
        blocks.push(b);
    }

    let mut sentences = Vec::with_capacity(blocks.len());
    let mut first_lines = Vec::with_capacity(blocks.len());
    for (idx, (first, tokens, tags)) in blocks.into_iter().enumerate() {
        let sentence = Sentence {
            id: format!("{}{idx}", opts.id_prefix),
            tokens,
        };
        sentences.push(LabeledSentence { sentence, tags });
        first_lines.push(first);
    }

    let scheme = match opts.label_set {
        Some(ls) => ls.scheme(),
        None => detect_scheme(&sentences),
    };
    if opts.strict {
        for (s, first) in sentences.iter().zip(&first_lines) {
            if let Err(e) = decode_spans(&s.sentence.tokens, &s.tags, scheme, DecodeMode::Strict) {
                let (line, message) = match e {
                    CorpusError::MalformedTags { position, tag, reason } => (
                        first + position,
                        format!("tag {tag:?} invalid under {scheme} ({reason}); mixed or malformed schemes"),
                    ),
                    other => (*first, other.to_string()),
                };
                return Err(CorpusError::Parse { line, message });
            }
        }
    }

    Ok(sentences
        .into_iter()
        .filter(|s| opts.max_len.is_none_or(|m| s.sentence.len() <= m))
        .filter(|s| !opts.require_entity || s.tags.iter().any(|t| t != "O"))
        .collect())
}

pub fn write_conll(sentences: &[LabeledSentence], path: &Path) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_to(sentences, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn to_conll_string(sentences: &[LabeledSentence]) -> String {
    let mut buf = Vec::new();
    write_to(sentences, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("tokens are UTF-8")
}

fn write_to(sentences: &[LabeledSentence], w: &mut impl Write) -> io::Result<()> {
    for s in sentences {
        for (tok, tag) in s.sentence.tokens.iter().zip(&s.tags) {
            writeln!(w, "{tok}\t{tag}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One raw text per line; a trailing `\r` is stripped.
pub fn read_pool(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut lines: Vec<String> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    if text.ends_with('\n') || text.is_empty() {
        lines.pop();
    }
    Ok(lines)
}
