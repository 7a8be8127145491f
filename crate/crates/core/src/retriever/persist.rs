//! On-disk index layout.
//!
//! ```text
//! idx/meta.json     counts, parameters, analyzer version, provenance
//! idx/postings.bin  little-endian: magic, N, doc_lens[N], T, T × (term, df, (doc, tf) × df)
//! idx/docs.txt      one document per line, doc id = line number
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Index, IndexConfig, IndexError, Posting, ANALYZER_VERSION};
use crate::provenance::Provenance;

const MAGIC: &[u8; 8] = b"CRNPOST1";
const FORMAT: u32 = 1;

pub const META_FILE: &str = "meta.json";
pub const POSTINGS_FILE: &str = "postings.bin";
pub const DOCS_FILE: &str = "docs.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexMeta {
    pub format: u32,
    pub analyzer_version: String,
    pub doc_count: usize,
    pub avg_doc_len: f64,
    pub term_count: usize,
    pub config: IndexConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Decoded contents of `postings.bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingsFile {
    pub doc_lens: Vec<u32>,
    pub terms: Vec<(String, Vec<Posting>)>,
}

pub fn save_index(index: &Index, dir: &Path, provenance: Option<&Provenance>) -> Result<(), IndexError> {
    fs::create_dir_all(dir)?;
    let meta = IndexMeta {
        format: FORMAT,
        analyzer_version: index.analyzer_version.clone(),
        doc_count: index.doc_count(),
        avg_doc_len: index.avg_doc_len,
        term_count: index.term_count(),
        config: index.config,
        provenance: provenance.cloned(),
    };
    let mut json = serde_json::to_string_pretty(&meta).map_err(|e| IndexError::Corrupt(e.to_string()))?;
    json.push('\n');
    fs::write(dir.join(META_FILE), json)?;

    let terms: Vec<(String, Vec<Posting>)> = index
        .sorted_terms()
        .into_iter()
        .map(|(t, p)| (t.to_string(), p.to_vec()))
        .collect();
    let file = PostingsFile {
        doc_lens: index.doc_lens.clone(),
        terms,
    };
    fs::write(dir.join(POSTINGS_FILE), encode_postings(&file))?;

    let mut w = BufWriter::new(fs::File::create(dir.join(DOCS_FILE))?);
    for d in &index.docs {
        w.write_all(d.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_index(dir: &Path) -> Result<Index, IndexError> {
    let read = |name: &str| -> Result<Vec<u8>, IndexError> {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => IndexError::MissingFile(path.display().to_string()),
            _ => IndexError::Io(e),
        })
    };
    let meta: IndexMeta = serde_json::from_slice(&read(META_FILE)?)
        .map_err(|e| IndexError::Corrupt(format!("{META_FILE}: {e}")))?;
    if meta.analyzer_version != ANALYZER_VERSION {
        return Err(IndexError::VersionMismatch {
            found: meta.analyzer_version,
            expected: ANALYZER_VERSION.to_string(),
        });
    }
    if meta.format != FORMAT {
        return Err(IndexError::Corrupt(format!("unsupported format {}", meta.format)));
    }
    meta.config.params.validate()?;
    let postings = decode_postings(&read(POSTINGS_FILE)?)?;
    let docs_raw = String::from_utf8(read(DOCS_FILE)?)
        .map_err(|_| IndexError::Corrupt(format!("{DOCS_FILE} is not UTF-8")))?;
    let mut docs: Vec<String> = docs_raw.split('\n').map(str::to_string).collect();
    if docs.pop().is_some_and(|last| !last.is_empty()) {
        return Err(IndexError::Corrupt(format!("{DOCS_FILE} lacks a final newline")));
    }

    if docs.len() != meta.doc_count || postings.doc_lens.len() != meta.doc_count {
        return Err(IndexError::Corrupt(format!(
            "document count mismatch: meta {}, postings {}, docs {}",
            meta.doc_count,
            postings.doc_lens.len(),
            docs.len()
        )));
    }
    if postings.terms.len() != meta.term_count {
        return Err(IndexError::Corrupt("term count mismatch".into()));
    }
    let index = Index::from_parts(
        meta.config,
        meta.analyzer_version,
        postings.terms,
        postings.doc_lens,
        docs,
    );
    let tol = 1e-9 * index.avg_doc_len.abs().max(1.0);
    if (index.avg_doc_len - meta.avg_doc_len).abs() > tol {
        return Err(IndexError::Corrupt("average document length mismatch".into()));
    }
    Ok(index)
}

pub fn encode_postings(file: &PostingsFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put(&mut out, file.doc_lens.len() as u32);
    for &l in &file.doc_lens {
        put(&mut out, l);
    }
    put(&mut out, file.terms.len() as u32);
    for (term, postings) in &file.terms {
        put(&mut out, term.len() as u32);
        out.extend_from_slice(term.as_bytes());
        put(&mut out, postings.len() as u32);
        for p in postings {
            put(&mut out, p.doc);
            put(&mut out, p.tf);
        }
    }
    out
}

fn put(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        if self.buf.len() < n {
            return Err(IndexError::Corrupt("postings file truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// A count of items that each occupy at least `item_size` bytes.
    fn count(&mut self, item_size: usize) -> Result<usize, IndexError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_size) > self.buf.len() {
            return Err(IndexError::Corrupt("count exceeds remaining data".into()));
        }
        Ok(n)
    }
}

/// Parses and validates `postings.bin`.
///
/// Checks the invariants scoring relies on: terms strictly increasing and
/// non-empty, posting lists strictly increasing by doc id with `tf >= 1`,
/// doc ids in range, and per-document term totals equal to `doc_lens`.
pub fn decode_postings(bytes: &[u8]) -> Result<PostingsFile, IndexError> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(IndexError::Corrupt("bad magic".into()));
    }
    let n_docs = r.count(4)?;
    let mut doc_lens = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        doc_lens.push(r.u32()?);
    }
    let n_terms = r.count(8)?;
    let mut terms: Vec<(String, Vec<Posting>)> = Vec::with_capacity(n_terms);
    let mut totals = vec![0u64; n_docs];
    for _ in 0..n_terms {
        let len = r.count(1)?;
        let term = std::str::from_utf8(r.take(len)?)
            .map_err(|_| IndexError::Corrupt("term is not UTF-8".into()))?
            .to_string();
        if term.is_empty() {
            return Err(IndexError::Corrupt("empty term".into()));
        }
        if terms.last().is_some_and(|(prev, _)| *prev >= term) {
            return Err(IndexError::Corrupt(format!("term {term:?} out of order")));
        }
        let df = r.count(8)?;
        if df == 0 || df > n_docs {
            return Err(IndexError::Corrupt(format!("term {term:?} has df {df} with {n_docs} docs")));
        }
        let mut postings = Vec::with_capacity(df);
        for _ in 0..df {
            let doc = r.u32()?;
            let tf = r.u32()?;
            if doc as usize >= n_docs || tf == 0 {
                return Err(IndexError::Corrupt(format!("bad posting ({doc}, {tf})")));
            }
            if postings.last().is_some_and(|p: &Posting| p.doc >= doc) {
                return Err(IndexError::Corrupt(format!("postings of {term:?} not sorted")));
            }
            totals[doc as usize] += tf as u64;
            postings.push(Posting { doc, tf });
        }
        terms.push((term, postings));
    }
    if !r.buf.is_empty() {
        return Err(IndexError::Corrupt("trailing bytes in postings file".into()));
    }
    if totals.iter().zip(&doc_lens).any(|(&t, &l)| t != l as u64) {
        return Err(IndexError::Corrupt("document lengths disagree with postings".into()));
    }
    Ok(PostingsFile { doc_lens, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::build_index;

    fn fixture() -> Index {
        build_index(
            ["吉林省白城市洮北区", "吉林省长春市", "Nike Air 运动鞋", "", "白城市 12号"],
            IndexConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_retrieval() {
        let dir = tempfile::tempdir().unwrap();
        let idx = fixture();
        save_index(&idx, dir.path(), None).unwrap();
        let back = load_index(dir.path()).unwrap();
        assert_eq!(back, idx);
        for query in ["吉林", "白城市", "nike", "12"] {
            assert_eq!(back.retrieve_topk(query, 3), idx.retrieve_topk(query, 3));
        }
    }

    #[test]
    fn resave_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let idx = fixture();
        save_index(&idx, a.path(), None).unwrap();
        save_index(&load_index(a.path()).unwrap(), b.path(), None).unwrap();
        for f in [META_FILE, POSTINGS_FILE, DOCS_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn missing_postings_is_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&fixture(), dir.path(), None).unwrap();
        fs::remove_file(dir.path().join(POSTINGS_FILE)).unwrap();
        match load_index(dir.path()) {
            Err(IndexError::MissingFile(p)) => assert!(p.ends_with(POSTINGS_FILE)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn analyzer_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&fixture(), dir.path(), None).unwrap();
        let meta = fs::read_to_string(dir.path().join(META_FILE)).unwrap();
        fs::write(dir.path().join(META_FILE), meta.replace(ANALYZER_VERSION, "other-0")).unwrap();
        assert!(matches!(load_index(dir.path()), Err(IndexError::VersionMismatch { .. })));
    }

    #[test]
    fn corrupt_postings_rejected() {
        let idx = fixture();
        let file = PostingsFile {
            doc_lens: idx.doc_lens.clone(),
            terms: idx
                .sorted_terms()
                .into_iter()
                .map(|(t, p)| (t.to_string(), p.to_vec()))
                .collect(),
        };
        let bytes = encode_postings(&file);
        assert_eq!(decode_postings(&bytes).unwrap(), file);
        for cut in [0, 7, 12, bytes.len() - 1] {
            assert!(decode_postings(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_postings(&extra).is_err());
        let mut wrong_len = file.clone();
        wrong_len.doc_lens[0] += 1;
        assert!(decode_postings(&encode_postings(&wrong_len)).is_err());
        let mut unsorted = file.clone();
        unsorted.terms.swap(0, 1);
        assert!(decode_postings(&encode_postings(&unsorted)).is_err());
        // huge counts must not allocate
        let mut huge = MAGIC.to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_postings(&huge).is_err());
    }

    #[test]
    fn provenance_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new("abc123");
        save_index(&fixture(), dir.path(), Some(&prov)).unwrap();
        let meta: IndexMeta = serde_json::from_slice(&fs::read(dir.path().join(META_FILE)).unwrap()).unwrap();
        assert_eq!(meta.provenance, Some(prov));
    }
}
