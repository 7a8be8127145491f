//! Turns a group of retrieved correlated samples into per-token CRF features.
//!
//! Two channels are produced:
//!
//! * `ngram-support`: for each token, the largest number of group samples
//!   containing an n-gram of the sentence that covers the token.
//! * `entity-vote`: for substrings of the sentence that a base model predicted
//!   as entities inside the group, the binned vote count per entity type.
//!
//! Counts are binned (`0`, `1`, `2+` by default) and zero bins emit no
//! feature, so an empty group leaves the tagger's feature set untouched.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrator::MatchMode;
use crate::corpus::{tokenize_chars, EntitySpan, Sentence};
use crate::retriever::{Index, RetrievalResult};
use crate::tagger::{CrfModel, PoolTagger};

#[derive(Debug, Error)]
pub enum CorrelatorError {
    #[error("invalid correlator config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    NgramSupport,
    EntityVote,
}

impl Channel {
    pub fn feature_prefix(self) -> &'static str {
        match self {
            Channel::NgramSupport => "CORR:ngram",
            Channel::EntityVote => "CORR:vote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelatorConfig {
    pub max_samples: usize,
    /// Budget in code points for query + samples + one separator per sample.
    pub max_total_length: usize,
    pub channels: Vec<Channel>,
    pub ngram_orders: Vec<usize>,
    /// Lower bin edges; the first must be 0 and the last bin is open (`2+`).
    pub bins: Vec<u32>,
    pub vote_match: MatchMode,
    /// Longest suffix accepted by prefix-extension matching in the vote channel.
    pub max_extension: usize,
    /// Skip pool documents identical to the query text.
    pub exclude_verbatim_query: bool,
}

impl Default for CorrelatorConfig {
    fn default() -> Self {
        CorrelatorConfig {
            max_samples: 12,
            max_total_length: 256,
            channels: vec![Channel::NgramSupport, Channel::EntityVote],
            ngram_orders: vec![2, 3, 4],
            bins: vec![0, 1, 2],
            vote_match: MatchMode::PrefixExtension,
            max_extension: 1,
            exclude_verbatim_query: true,
        }
    }
}

impl CorrelatorConfig {
    pub fn validate(&self) -> Result<(), CorrelatorError> {
        if self.ngram_orders.iter().any(|&n| n < 2) {
            return Err(CorrelatorError::BadConfig("n-gram orders must be >= 2".into()));
        }
        if self.bins.first() != Some(&0) {
            return Err(CorrelatorError::BadConfig("first bin edge must be 0".into()));
        }
        if self.bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorrelatorError::BadConfig("bin edges must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn has(&self, channel: Channel) -> bool {
        self.channels.contains(&channel)
    }

    /// Label of the bin holding `count`.
    pub fn bin(&self, count: u32) -> String {
        let i = self.bins.iter().rposition(|&e| e <= count).unwrap_or(0);
        if i + 1 == self.bins.len() && self.bins.len() > 1 {
            format!("{}+", self.bins[i])
        } else {
            self.bins[i].to_string()
        }
    }
}

/// Binned channel values for one token. Zero counts are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCorrelation {
    pub ngram_support: Option<String>,
    /// (entity type, bin label), sorted by type.
    pub entity_vote: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrelationFeatures {
    pub tokens: Vec<TokenCorrelation>,
    /// Doc ids of the group samples, in rank order.
    pub provenance: Vec<u32>,
}

impl CorrelationFeatures {
    pub fn empty(len: usize) -> CorrelationFeatures {
        CorrelationFeatures {
            tokens: vec![TokenCorrelation::default(); len],
            provenance: Vec::new(),
        }
    }

    /// Feature strings of `channel` at `pos`.
    pub fn features(&self, pos: usize, channel: Channel) -> Vec<String> {
        let Some(tok) = self.tokens.get(pos) else {
            return Vec::new();
        };
        let prefix = channel.feature_prefix();
        match channel {
            Channel::NgramSupport => tok
                .ngram_support
                .iter()
                .map(|b| format!("{prefix}={b}"))
                .collect(),
            Channel::EntityVote => tok
                .entity_vote
                .iter()
                .map(|(ty, b)| format!("{prefix}={ty}:{b}"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSample {
    pub doc_id: u32,
    pub text: String,
}

/// Greedy prefix of the ranking that fits both the sample count and the length budget.
pub fn select_group(retrieval: &RetrievalResult, query_len: usize, config: &CorrelatorConfig) -> Vec<GroupSample> {
    let mut used = query_len;
    let mut group = Vec::new();
    for hit in &retrieval.hits {
        if group.len() >= config.max_samples {
            break;
        }
        let cost = hit.text.chars().count() + 1;
        if used + cost > config.max_total_length {
            break;
        }
        used += cost;
        group.push(GroupSample {
            doc_id: hit.doc_id,
            text: hit.text.clone(),
        });
    }
    group
}

const NGRAM_SEP: &str = "\u{1f}";

fn ngram_key(tokens: &[String]) -> String {
    tokens.join(NGRAM_SEP)
}

/// Per-token binned n-gram support counts.
pub fn ngram_support(sentence: &Sentence, group: &[GroupSample], config: &CorrelatorConfig) -> Vec<String> {
    ngram_counts(sentence, group, config)
        .into_iter()
        .map(|c| config.bin(c))
        .collect()
}

fn ngram_counts(sentence: &Sentence, group: &[GroupSample], config: &CorrelatorConfig) -> Vec<u32> {
    let n = sentence.len();
    let mut best = vec![0u32; n];
    if group.is_empty() {
        return best;
    }
    let sample_grams: Vec<HashSet<String>> = group
        .iter()
        .map(|g| {
            let toks = tokenize_chars(&g.text);
            let mut set = HashSet::new();
            for &order in &config.ngram_orders {
                for w in toks.windows(order) {
                    set.insert(ngram_key(w));
                }
            }
            set
        })
        .collect();
    for &order in &config.ngram_orders {
        for start in 0..n.saturating_sub(order - 1) {
            let key = ngram_key(&sentence.tokens[start..start + order]);
            let count = sample_grams.iter().filter(|s| s.contains(&key)).count() as u32;
            for b in &mut best[start..start + order] {
                *b = (*b).max(count);
            }
        }
    }
    best
}

/// Per-token (type, binned vote) features from entity predictions on the group.
///
/// Every substring of the sentence is matched against the predicted surfaces
/// (exactly, or as a stem of a longer surface under prefix-extension);
/// matches are then claimed longest first, leftmost on ties.
pub fn entity_vote_channel(
    sentence: &Sentence,
    group_predictions: &[Vec<EntitySpan>],
    config: &CorrelatorConfig,
) -> Vec<Vec<(String, String)>> {
    let n = sentence.len();
    let mut out = vec![Vec::new(); n];

    // surface (as token key) -> type -> count
    let mut tallies: HashMap<String, BTreeMap<String, u32>> = HashMap::new();
    let mut longest = 0;
    for preds in group_predictions {
        for span in preds {
            let toks = tokenize_chars(&span.surface);
            if toks.is_empty() {
                continue;
            }
            longest = longest.max(toks.len());
            let mut keys = vec![ngram_key(&toks)];
            if config.vote_match == MatchMode::PrefixExtension {
                for ext in 1..=config.max_extension {
                    if toks.len() >= ext + 2 {
                        keys.push(ngram_key(&toks[..toks.len() - ext]));
                    }
                }
            }
            for key in keys {
                *tallies.entry(key).or_default().entry(span.label.clone()).or_default() += 1;
            }
        }
    }
    if tallies.is_empty() {
        return out;
    }

    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for len in (1..=longest.min(n)).rev() {
        for start in 0..=n - len {
            if tallies.contains_key(&ngram_key(&sentence.tokens[start..start + len])) {
                candidates.push((start, start + len));
            }
        }
    }
    // already ordered longest first, then leftmost
    let mut taken = vec![false; n];
    for (start, end) in candidates {
        if taken[start..end].iter().any(|&t| t) {
            continue;
        }
        let tally = &tallies[&ngram_key(&sentence.tokens[start..end])];
        let feats: Vec<(String, String)> = tally
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(ty, &c)| (ty.clone(), config.bin(c)))
            .collect();
        for pos in start..end {
            taken[pos] = true;
            out[pos] = feats.clone();
        }
    }
    out
}

/// Assembles features from an already selected group and its predictions.
pub fn correlation_features(
    sentence: &Sentence,
    group: &[GroupSample],
    group_predictions: &[Vec<EntitySpan>],
    config: &CorrelatorConfig,
) -> CorrelationFeatures {
    let n = sentence.len();
    let mut feats = CorrelationFeatures::empty(n);
    feats.provenance = group.iter().map(|g| g.doc_id).collect();
    if config.has(Channel::NgramSupport) {
        for (tok, c) in feats.tokens.iter_mut().zip(ngram_counts(sentence, group, config)) {
            if c > 0 {
                tok.ngram_support = Some(config.bin(c));
            }
        }
    }
    if config.has(Channel::EntityVote) {
        for (tok, votes) in feats.tokens.iter_mut().zip(entity_vote_channel(sentence, group_predictions, config)) {
            tok.entity_vote = votes;
        }
    }
    feats
}

/// Retrieval plus a base model: produces correlation features for any sentence.
///
/// Predictions on pool documents are memoized by doc id.
pub struct Correlator<'a> {
    pub index: &'a Index,
    pub base: &'a CrfModel,
    pub config: CorrelatorConfig,
    pool: PoolTagger<'a>,
}

impl<'a> Correlator<'a> {
    pub fn new(index: &'a Index, base: &'a CrfModel, config: CorrelatorConfig) -> Result<Self, CorrelatorError> {
        config.validate()?;
        Ok(Correlator {
            index,
            base,
            config,
            pool: PoolTagger::new(base, index, true),
        })
    }

    pub fn group(&self, sentence: &Sentence) -> Vec<GroupSample> {
        if self.config.max_samples == 0 || self.index.doc_count() == 0 {
            return Vec::new();
        }
        let text = sentence.text();
        let retrieval = if self.config.exclude_verbatim_query {
            self.index.retrieve_topk_filtered(&text, self.config.max_samples, |d| {
                self.index.doc_text(d) != Some(text.as_str())
            })
        } else {
            self.index.retrieve_topk(&text, self.config.max_samples)
        };
        select_group(&retrieval, text.chars().count(), &self.config)
    }

    fn predictions(&self, group: &[GroupSample]) -> Vec<Vec<EntitySpan>> {
        group.iter().map(|g| self.pool.spans(g.doc_id)).collect()
    }

    pub fn features(&self, sentence: &Sentence) -> CorrelationFeatures {
        let group = self.group(sentence);
        let preds = if self.config.has(Channel::EntityVote) {
            self.predictions(&group)
        } else {
            Vec::new()
        };
        correlation_features(sentence, &group, &preds, &self.config)
    }

    /// Features for many sentences in parallel, in input order.
    pub fn features_batch(&self, sentences: &[Sentence]) -> Vec<CorrelationFeatures> {
        sentences.par_iter().map(|s| self.features(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::Hit;

    fn sample(id: u32, text: &str) -> GroupSample {
        GroupSample {
            doc_id: id,
            text: text.to_string(),
        }
    }

    fn span(text: &str, ty: &str) -> EntitySpan {
        EntitySpan {
            start: 0,
            end: text.chars().count(),
            label: ty.to_string(),
            surface: text.to_string(),
        }
    }

    fn retrieval(lens: &[usize]) -> RetrievalResult {
        RetrievalResult {
            query_id: "q".into(),
            hits: lens
                .iter()
                .enumerate()
                .map(|(i, &l)| Hit {
                    doc_id: i as u32,
                    score: 100.0 - i as f64,
                    text: "字".repeat(l),
                })
                .collect(),
        }
    }

    #[test]
    fn bins() {
        let c = CorrelatorConfig::default();
        assert_eq!(c.bin(0), "0");
        assert_eq!(c.bin(1), "1");
        assert_eq!(c.bin(2), "2+");
        assert_eq!(c.bin(3), "2+");
        let c = CorrelatorConfig {
            bins: vec![0, 2, 5],
            ..Default::default()
        };
        assert_eq!(c.bin(1), "0");
        assert_eq!(c.bin(4), "2");
        assert_eq!(c.bin(9), "5+");
    }

    #[test]
    fn config_validation() {
        assert!(CorrelatorConfig::default().validate().is_ok());
        let bad = CorrelatorConfig {
            ngram_orders: vec![1, 2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CorrelatorConfig {
            bins: vec![1, 2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn select_group_budget() {
        let cfg = CorrelatorConfig::default();
        assert!(select_group(&RetrievalResult::default(), 10, &cfg).is_empty());
        // 20 + 7·31 = 237 <= 256 < 268 = 20 + 8·31
        let g = select_group(&retrieval(&[30; 20]), 20, &cfg);
        assert_eq!(g.len(), 7);
        assert_eq!(g.iter().map(|s| s.doc_id).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
        let none = CorrelatorConfig {
            max_samples: 0,
            ..Default::default()
        };
        assert!(select_group(&retrieval(&[3; 5]), 1, &none).is_empty());
        // count cap binds before the budget
        assert_eq!(select_group(&retrieval(&[2; 40]), 1, &cfg).len(), 12);
    }

    #[test]
    fn ngram_support_examples() {
        let cfg = CorrelatorConfig::default();
        let s = Sentence::from_text("q", "吉林白城");
        assert_eq!(ngram_support(&s, &[], &cfg), ["0"; 4]);
        let group = [sample(0, "吉林省白城市"), sample(1, "吉林省")];
        let bins = ngram_support(&s, &group, &cfg);
        // 吉林 in both samples; 白城 only in the first
        assert_eq!(bins, ["2+", "2+", "1", "1"]);
        let itself = [sample(0, "吉林白城")];
        assert_eq!(ngram_support(&s, &itself, &cfg), ["1"; 4]);
        let single = Sentence::from_text("q", "吉");
        assert_eq!(ngram_support(&single, &[sample(0, "吉")], &cfg), ["0"]);
    }

    #[test]
    fn entity_vote_examples() {
        let exact = CorrelatorConfig {
            vote_match: MatchMode::ExactSurface,
            ..Default::default()
        };
        let s = Sentence::from_text("q", "吉林白城");
        assert!(entity_vote_channel(&s, &[vec![span("长春", "CITY")]], &exact)
            .iter()
            .all(Vec::is_empty));

        let preds = vec![
            vec![span("吉林", "PROV")],
            vec![span("吉林", "PROV")],
            vec![span("吉林", "PROV")],
        ];
        let v = entity_vote_channel(&s, &preds, &exact);
        let prov_many = vec![("PROV".to_string(), "2+".to_string())];
        assert_eq!(v[0], prov_many);
        assert_eq!(v[1], prov_many);
        assert!(v[2].is_empty() && v[3].is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let exact = CorrelatorConfig {
            vote_match: MatchMode::ExactSurface,
            ..Default::default()
        };
        let s = Sentence::from_text("q", "吉林省白城");
        let preds = vec![vec![span("吉林省", "PROV")], vec![span("吉林", "CITY")]];
        let v = entity_vote_channel(&s, &preds, &exact);
        let prov = vec![("PROV".to_string(), "1".to_string())];
        assert_eq!(v[0], prov);
        assert_eq!(v[1], prov);
        assert_eq!(v[2], prov);
    }

    #[test]
    fn prefix_extension_matches_stems() {
        let cfg = CorrelatorConfig::default();
        let s = Sentence::from_text("q", "吉林白城");
        let preds = vec![
            vec![span("吉林省", "PROV"), span("白城市", "CITY")],
            vec![span("白城市", "CITY")],
        ];
        let v = entity_vote_channel(&s, &preds, &cfg);
        assert_eq!(v[0], [("PROV".to_string(), "1".to_string())]);
        assert_eq!(v[2], [("CITY".to_string(), "2+".to_string())]);
        // stems shorter than two tokens never match
        let v = entity_vote_channel(&Sentence::from_text("q", "吉"), &[vec![span("吉林", "PROV")]], &cfg);
        assert!(v[0].is_empty());
    }

    #[test]
    fn features_empty_group_emit_nothing() {
        let cfg = CorrelatorConfig::default();
        let s = Sentence::from_text("q", "吉林白城");
        let f = correlation_features(&s, &[], &[], &cfg);
        assert_eq!(f, CorrelationFeatures::empty(4));
        for pos in 0..4 {
            assert!(f.features(pos, Channel::NgramSupport).is_empty());
            assert!(f.features(pos, Channel::EntityVote).is_empty());
        }
    }

    #[test]
    fn feature_strings() {
        let cfg = CorrelatorConfig::default();
        let s = Sentence::from_text("q", "吉林白城");
        let group = [sample(3, "吉林省白城市"), sample(5, "吉林省")];
        let preds = vec![vec![span("吉林省", "PROV")], vec![span("吉林省", "PROV")]];
        let f = correlation_features(&s, &group, &preds, &cfg);
        assert_eq!(f.provenance, [3, 5]);
        assert_eq!(f.features(0, Channel::NgramSupport), ["CORR:ngram=2+"]);
        assert_eq!(f.features(0, Channel::EntityVote), ["CORR:vote=PROV:2+"]);
        assert!(f.features(3, Channel::EntityVote).is_empty());
        assert!(f.features(99, Channel::EntityVote).is_empty());
    }
}
