//! BM25 retrieval over an in-memory inverted index.
//!
//! ```text
//! score(D, Q) = Σ_{t ∈ unique(Q)} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! The `ln(1 + …)` form keeps every idf positive, so a document scores above
//! zero exactly when it shares at least one term with the query.

mod analyzer;
mod persist;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analyzer::{analyze, is_cjk, ANALYZER_VERSION};
pub use persist::{decode_postings, encode_postings, load_index, save_index, IndexMeta, PostingsFile};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid BM25 parameters: {0}")]
    BadParams(String),
    #[error("unknown document id {0}")]
    UnknownDoc(u32),
    #[error("missing index file {0}")]
    MissingFile(String),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("analyzer version mismatch: index built with {found:?}, this build uses {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("too many documents for a 32-bit document id")]
    TooManyDocs,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(IndexError::BadParams(format!("k1 = {} must be >= 0", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::BadParams(format!("b = {} must lie in [0, 1]", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub params: Bm25Params,
    /// Documents are truncated to this many code points.
    pub max_doc_len: usize,
    /// Collapse exact duplicate texts at build time.
    pub dedup: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            params: Bm25Params::default(),
            max_doc_len: 512,
            dedup: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Inverted index with everything BM25 needs plus the raw texts.
///
/// Term ids follow the lexicographic order of the term strings, so two
/// indexes over the same documents are field-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    config: IndexConfig,
    analyzer_version: String,
    terms: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_lens: Vec<u32>,
    docs: Vec<String>,
    avg_doc_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: u32,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

pub fn build_index<I, S>(texts: I, config: IndexConfig) -> Result<Index, IndexError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    build_index_fallible(texts.into_iter().map(Ok::<S, IndexError>), config)
}

/// Streams one document per line.
pub fn build_index_from_reader(reader: impl BufRead, config: IndexConfig) -> Result<Index, IndexError> {
    build_index_fallible(
        reader.lines().map(|l| {
            l.map(|s| s.strip_suffix('\r').map(str::to_string).unwrap_or(s))
                .map_err(IndexError::from)
        }),
        config,
    )
}

fn build_index_fallible<I, S>(texts: I, config: IndexConfig) -> Result<Index, IndexError>
where
    I: Iterator<Item = Result<S, IndexError>>,
    S: AsRef<str>,
{
    config.params.validate()?;
    let mut seen = HashSet::new();
    let mut raw_terms: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lens = Vec::new();
    let mut docs = Vec::new();
    for text in texts {
        let text = text?;
        let text = sanitize(text.as_ref(), config.max_doc_len);
        if config.dedup && !seen.insert(text.clone()) {
            continue;
        }
        let doc = u32::try_from(docs.len()).map_err(|_| IndexError::TooManyDocs)?;
        let terms = analyze(&text);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &terms {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        for (t, n) in tf {
            // docs arrive in id order, so each posting list stays sorted
            raw_terms.entry(t.to_string()).or_default().push(Posting { doc, tf: n });
        }
        doc_lens.push(terms.len() as u32);
        docs.push(text);
    }
    let mut sorted: Vec<(String, Vec<Posting>)> = raw_terms.into_iter().collect();
    sorted.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(Index::from_parts(config, ANALYZER_VERSION.to_string(), sorted, doc_lens, docs))
}

fn sanitize(text: &str, max_len: usize) -> String {
    text.chars()
        .take(max_len)
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect()
}

impl Index {
    /// `terms` must be sorted by term string.
    fn from_parts(
        config: IndexConfig,
        analyzer_version: String,
        terms: Vec<(String, Vec<Posting>)>,
        doc_lens: Vec<u32>,
        docs: Vec<String>,
    ) -> Index {
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avg_doc_len = if doc_lens.is_empty() {
            0.0
        } else {
            total as f64 / doc_lens.len() as f64
        };
        let mut term_ids = HashMap::with_capacity(terms.len());
        let mut postings = Vec::with_capacity(terms.len());
        for (i, (t, p)) in terms.into_iter().enumerate() {
            term_ids.insert(t, i as u32);
            postings.push(p);
        }
        Index {
            config,
            analyzer_version,
            terms: term_ids,
            postings,
            doc_lens,
            docs,
            avg_doc_len,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.config.params
    }

    pub fn config(&self) -> IndexConfig {
        self.config
    }

    pub fn analyzer_version(&self) -> &str {
        &self.analyzer_version
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_text(&self, doc: u32) -> Option<&str> {
        self.docs.get(doc as usize).map(String::as_str)
    }

    pub fn doc_len(&self, doc: u32) -> Option<u32> {
        self.doc_lens.get(doc as usize).copied()
    }

    pub fn docs(&self) -> &[String] {
        &self.docs
    }

    /// Document frequency of `term` (0 when absent).
    pub fn df(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.terms.get(term).map(|&id| self.postings[id as usize].as_slice())
    }

    /// Terms with their posting lists, in term order.
    pub fn sorted_terms(&self) -> Vec<(&str, &[Posting])> {
        let mut out: Vec<(&str, &[Posting])> = self
            .terms
            .iter()
            .map(|(t, &id)| (t.as_str(), self.postings[id as usize].as_slice()))
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(b.0));
        out
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.config.params;
        let tf = tf as f64;
        let rel_len = if self.avg_doc_len > 0.0 {
            doc_len as f64 / self.avg_doc_len
        } else {
            0.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * rel_len))
    }

    /// BM25 score of one document; repeated query terms count once.
    pub fn bm25_score(&self, query_terms: &[String], doc: u32) -> Result<f64, IndexError> {
        let doc_len = self.doc_len(doc).ok_or(IndexError::UnknownDoc(doc))?;
        let mut score = 0.0;
        for postings in self.unique_postings(query_terms) {
            if let Ok(pos) = postings.binary_search_by_key(&doc, |p| p.doc) {
                score += self.term_score(self.idf(postings.len()), postings[pos].tf, doc_len);
            }
        }
        Ok(score)
    }

    /// Posting lists of the distinct in-vocabulary query terms, in first-occurrence order.
    fn unique_postings<'a>(&'a self, query_terms: &'a [String]) -> Vec<&'a [Posting]> {
        let mut seen = HashSet::new();
        query_terms
            .iter()
            .filter(|t| seen.insert(t.as_str()))
            .filter_map(|t| self.postings(t))
            .collect()
    }

    pub fn retrieve_topk(&self, query_text: &str, k: usize) -> RetrievalResult {
        self.retrieve_topk_filtered(query_text, k, |_| true)
    }

    /// Top-`k` documents by score, ties broken by ascending doc id.
    /// Documents rejected by `keep` are skipped without consuming a slot.
    pub fn retrieve_topk_filtered(
        &self,
        query_text: &str,
        k: usize,
        keep: impl Fn(u32) -> bool,
    ) -> RetrievalResult {
        let mut result = RetrievalResult::default();
        if k == 0 {
            return result;
        }
        let terms = analyze(query_text);
        let lists = self.unique_postings(&terms);
        let idfs: Vec<f64> = lists.iter().map(|p| self.idf(p.len())).collect();
        // term-at-a-time into a dense accumulator; each document still sums
        // its term scores in query-term order
        let mut acc = vec![0.0f64; self.doc_count()];
        let mut touched: Vec<u32> = Vec::new();
        for (list, &idf) in lists.iter().zip(&idfs) {
            for p in list.iter() {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_score(idf, p.tf, self.doc_lens[p.doc as usize]);
            }
        }
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for doc in touched {
            let score = acc[doc as usize];
            if score <= 0.0 {
                continue;
            }
            let cand = Ranked { score, doc };
            if heap.len() == k && heap.peek().is_some_and(|Reverse(worst)| cand < *worst) {
                continue;
            }
            if !keep(doc) {
                continue;
            }
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }

        let mut ranked: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
        ranked.sort_unstable_by(|a, b| b.cmp(a));
        result.hits = ranked
            .into_iter()
            .map(|r| Hit {
                doc_id: r.doc,
                score: r.score,
                text: self.docs[r.doc as usize].clone(),
            })
            .collect();
        result
    }

    /// Index restricted to the documents selected by `keep`, renumbered densely.
    pub fn subset(&self, keep: impl Fn(u32) -> bool) -> Index {
        let texts = (0..self.doc_count() as u32)
            .filter(|&d| keep(d))
            .map(|d| self.docs[d as usize].as_str());
        build_index(texts, self.config).expect("parameters already validated")
    }
}

/// Ordered so that "greater" means "ranks higher".
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    score: f64,
    doc: u32,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.doc.cmp(&self.doc))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Vec<String> {
        analyze(s)
    }

    #[test]
    fn empty_index() {
        let idx = build_index(Vec::<String>::new(), IndexConfig::default()).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.avg_doc_len(), 0.0);
        assert!(idx.retrieve_topk("吉林", 10).hits.is_empty());
    }

    #[test]
    fn hand_counted_fixture() {
        let idx = build_index(["a b", "a"], IndexConfig::default()).unwrap();
        assert_eq!(idx.df("a"), 2);
        assert_eq!(idx.df("b"), 1);
        assert_eq!(idx.avg_doc_len(), 1.5);
        assert_eq!(idx.postings("a").unwrap(), [Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 1 }]);
    }

    #[test]
    fn build_is_idempotent() {
        let texts = ["吉林省白城市", "吉林省", "镇赉县火车站", "吉林"];
        let a = build_index(texts, IndexConfig::default()).unwrap();
        let b = build_index(texts, IndexConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_doc_worked_value() {
        // N = 1, len = avg = 3, tf = 2: 2·2.2/(2 + 1.2) · ln(4/3)
        let idx = build_index(["a b a"], IndexConfig::default()).unwrap();
        let s = idx.bm25_score(&q("a"), 0).unwrap();
        let expected = 2.0 * 2.2 / 3.2 * (4.0f64 / 3.0).ln();
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.3956).abs() < 1e-4, "{s}");
    }

    #[test]
    fn duplicate_query_terms_count_once() {
        let idx = build_index(["a b a", "b c"], IndexConfig::default()).unwrap();
        let once = idx.bm25_score(&q("a"), 0).unwrap();
        let twice = idx.bm25_score(&q("a a"), 0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_for_disjoint_query_and_unknown_doc() {
        let idx = build_index(["a b", "c"], IndexConfig::default()).unwrap();
        assert_eq!(idx.bm25_score(&q("c"), 0).unwrap(), 0.0);
        assert!(matches!(idx.bm25_score(&q("c"), 7), Err(IndexError::UnknownDoc(7))));
    }

    #[test]
    fn topk_basics() {
        let idx = build_index(["吉林省白城市", "吉林省", "北京", "吉林"], IndexConfig::default()).unwrap();
        assert!(idx.retrieve_topk("吉林", 0).hits.is_empty());
        assert!(idx.retrieve_topk("xyz 上海", 5).hits.is_empty());
        let r = idx.retrieve_topk("吉林", 10);
        assert_eq!(r.hits.len(), 3);
        assert_eq!(r.hits[0].doc_id, 3);
        for w in r.hits.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        let r = idx.retrieve_topk_filtered("吉林", 10, |d| d != 3);
        assert_eq!(r.hits.iter().map(|h| h.doc_id).collect::<Vec<_>>(), [1, 0]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let idx = build_index(["x a", "a x", "a", "x a"], IndexConfig::default()).unwrap();
        let r = idx.retrieve_topk("a", 4);
        let ids: Vec<u32> = r.hits.iter().map(|h| h.doc_id).collect();
        assert_eq!(ids, [2, 0, 1, 3]);
        let r = idx.retrieve_topk("a", 2);
        assert_eq!(r.hits.iter().map(|h| h.doc_id).collect::<Vec<_>>(), [2, 0]);
    }

    #[test]
    fn zero_term_docs_stored_not_retrievable() {
        let idx = build_index(["", "---", "a"], IndexConfig::default()).unwrap();
        assert_eq!(idx.doc_count(), 3);
        assert_eq!(idx.doc_text(1), Some("---"));
        assert_eq!(idx.retrieve_topk("a ---", 10).hits.len(), 1);
    }

    #[test]
    fn truncation_and_dedup() {
        let cfg = IndexConfig {
            max_doc_len: 3,
            dedup: true,
            ..Default::default()
        };
        let idx = build_index(["abcdef", "abc", "xyz", "x\ny"], cfg).unwrap();
        assert_eq!(idx.docs(), ["abc", "xyz", "x y"]);
        assert_eq!(idx.doc_len(0), Some(1));
    }

    #[test]
    fn params_validated() {
        let bad = IndexConfig {
            params: Bm25Params { k1: 1.2, b: 1.5 },
            ..Default::default()
        };
        assert!(matches!(build_index(["a"], bad), Err(IndexError::BadParams(_))));
        let bad = IndexConfig {
            params: Bm25Params { k1: -1.0, b: 0.5 },
            ..Default::default()
        };
        assert!(build_index(["a"], bad).is_err());
    }

    #[test]
    fn b_zero_removes_length_dependence() {
        let cfg = IndexConfig {
            params: Bm25Params { k1: 1.2, b: 0.0 },
            ..Default::default()
        };
        let idx = build_index(["a x", "a x y z w v"], cfg).unwrap();
        let query = q("a");
        assert_eq!(idx.bm25_score(&query, 0).unwrap(), idx.bm25_score(&query, 1).unwrap());
        let idx = build_index(["a x", "a x y z w v"], IndexConfig::default()).unwrap();
        assert!(idx.bm25_score(&query, 0).unwrap() > idx.bm25_score(&query, 1).unwrap());
    }

    #[test]
    fn monotone_in_tf_and_antimonotone_in_df() {
        let base = ["a x y z", "p q", "r s"];
        let more_tf = ["a a y z", "p q", "r s"];
        let more_df = ["a x y z", "a q", "r s"];
        let query = q("a");
        let s0 = build_index(base, IndexConfig::default()).unwrap().bm25_score(&query, 0).unwrap();
        let s_tf = build_index(more_tf, IndexConfig::default()).unwrap().bm25_score(&query, 0).unwrap();
        let s_df = build_index(more_df, IndexConfig::default()).unwrap().bm25_score(&query, 0).unwrap();
        assert!(s_tf > s0);
        assert!(s_df < s0);
    }

    #[test]
    fn reader_build_matches_iterator_build() {
        let text = "吉林省\r\n白城市\n\n镇赉县\n";
        let a = build_index_from_reader(text.as_bytes(), IndexConfig::default()).unwrap();
        let b = build_index(["吉林省", "白城市", "", "镇赉县"], IndexConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
