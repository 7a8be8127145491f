//! Entity-type calibration by majority vote over retrieved samples.
//!
//! The query and its top-K retrieved pool documents are tagged by the same
//! model; each predicted query span then takes the type that a strict
//! plurality of matching retrieved spans carry. Span boundaries never change.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, EntitySpan, LabelSet, LabeledSentence, Sentence};
use crate::retriever::Index;
use crate::tagger::{CrfModel, PoolTagger, Tagged};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid vote policy: {0}")]
    BadPolicy(String),
    #[error("entity type {0:?} is not in the model's label set")]
    UnknownType(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How a retrieved span is matched to a query span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Identical surface strings.
    #[default]
    ExactSurface,
    /// Identical, or the retrieved surface extends the query surface
    /// (`白城` matches `白城市`).
    PrefixExtension,
}

impl MatchMode {
    pub fn matches(self, query: &str, retrieved: &str) -> bool {
        match self {
            MatchMode::ExactSurface => query == retrieved,
            MatchMode::PrefixExtension => retrieved.starts_with(query),
        }
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "exact-surface" => Ok(MatchMode::ExactSurface),
            "prefix" | "prefix-extension" => Ok(MatchMode::PrefixExtension),
            _ => Err(format!("unknown match mode {s:?} (expected exact or prefix)")),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::ExactSurface => "exact-surface",
            MatchMode::PrefixExtension => "prefix-extension",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VotePolicy {
    pub k: usize,
    pub match_mode: MatchMode,
    pub include_self_vote: bool,
    /// Matched retrieved occurrences needed before a span may be reassigned.
    pub min_votes: usize,
    pub exclude_verbatim_query: bool,
    pub memoize: bool,
}

impl Default for VotePolicy {
    fn default() -> Self {
        VotePolicy {
            k: 100,
            match_mode: MatchMode::ExactSurface,
            include_self_vote: true,
            min_votes: 1,
            exclude_verbatim_query: true,
            memoize: true,
        }
    }
}

impl VotePolicy {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.min_votes == 0 {
            return Err(CalibrationError::BadPolicy("min_votes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One reassigned span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub old_type: String,
    pub new_type: String,
    pub tally: BTreeMap<String, usize>,
    pub doc_ids: Vec<u32>,
}

/// Predicted spans of one retrieved document.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub doc_id: u32,
    pub spans: Vec<EntitySpan>,
}

/// Re-types `query` spans by plurality over matching neighbor spans.
///
/// Every neighbor span type must belong to `label_set`. The returned spans
/// have exactly the boundaries of `query`.
pub fn vote(
    sentence_id: &str,
    query: &[EntitySpan],
    neighbors: &[Neighbor],
    policy: &VotePolicy,
    label_set: &LabelSet,
) -> Result<(Vec<EntitySpan>, Vec<TraceEntry>), CalibrationError> {
    policy.validate()?;
    for s in neighbors.iter().flat_map(|n| &n.spans) {
        if !label_set.has_type(&s.label) {
            return Err(CalibrationError::UnknownType(s.label.clone()));
        }
    }
    let mut out = query.to_vec();
    let mut trace = Vec::new();
    for span in &mut out {
        let mut tally: BTreeMap<String, usize> = BTreeMap::new();
        let mut doc_ids = Vec::new();
        let mut matched = 0;
        for n in neighbors {
            let mut hit = false;
            for s in &n.spans {
                if policy.match_mode.matches(&span.surface, &s.surface) {
                    *tally.entry(s.label.clone()).or_default() += 1;
                    matched += 1;
                    hit = true;
                }
            }
            if hit {
                doc_ids.push(n.doc_id);
            }
        }
        if matched < policy.min_votes {
            continue;
        }
        if policy.include_self_vote {
            *tally.entry(span.label.clone()).or_default() += 1;
        }
        let Some(winner) = strict_winner(&tally).map(str::to_string) else {
            continue;
        };
        if winner != span.label {
            trace.push(TraceEntry {
                sentence_id: sentence_id.to_string(),
                start: span.start,
                end: span.end,
                surface: span.surface.clone(),
                old_type: span.label.clone(),
                new_type: winner.clone(),
                tally,
                doc_ids,
            });
            span.label = winner;
        }
    }
    Ok((out, trace))
}

fn strict_winner(tally: &BTreeMap<String, usize>) -> Option<&str> {
    let max = *tally.values().max()?;
    let mut tops = tally.iter().filter(|(_, &c)| c == max);
    let first = tops.next()?;
    if tops.next().is_some() {
        None
    } else {
        Some(first.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub base: Tagged,
    pub spans: Vec<EntitySpan>,
    pub trace: Vec<TraceEntry>,
}

impl Calibrated {
    pub fn labeled(&self, sentence: &Sentence, label_set: &LabelSet) -> Result<LabeledSentence, CorpusError> {
        LabeledSentence::from_spans(sentence.clone(), &self.spans, label_set.scheme())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub sentences: usize,
    pub spans: usize,
    pub reassigned: usize,
    pub fraction_reassigned: f64,
    /// old type -> new type -> count
    pub matrix: BTreeMap<String, BTreeMap<String, usize>>,
}

#[derive(Debug, Default)]
pub struct BatchCalibration {
    /// One entry per input sentence; failed sentences are `None`.
    pub outputs: Vec<Option<Calibrated>>,
    pub errors: Vec<(usize, String)>,
    pub stats: CalibrationStats,
}

pub struct Calibrator<'a> {
    pub model: &'a CrfModel,
    pub index: &'a Index,
    pub policy: VotePolicy,
    pool: PoolTagger<'a>,
}

impl<'a> Calibrator<'a> {
    pub fn new(model: &'a CrfModel, index: &'a Index, policy: VotePolicy) -> Result<Self, CalibrationError> {
        policy.validate()?;
        Ok(Calibrator {
            model,
            index,
            pool: PoolTagger::new(model, index, policy.memoize),
            policy,
        })
    }

    pub fn neighbors(&self, sentence: &Sentence) -> Vec<Neighbor> {
        if self.policy.k == 0 {
            return Vec::new();
        }
        let text = sentence.text();
        let hits = if self.policy.exclude_verbatim_query {
            self.index
                .retrieve_topk_filtered(&text, self.policy.k, |d| self.index.doc_text(d) != Some(text.as_str()))
        } else {
            self.index.retrieve_topk(&text, self.policy.k)
        };
        hits.hits
            .iter()
            .map(|h| Neighbor {
                doc_id: h.doc_id,
                spans: self.pool.spans(h.doc_id),
            })
            .collect()
    }

    /// Calibrates the model's own prediction for `sentence`.
    pub fn calibrate(&self, sentence: &Sentence) -> Result<Calibrated, CalibrationError> {
        let base = self.model.predict(sentence, None);
        self.calibrate_prediction(sentence, base)
    }

    /// Calibrates an existing prediction.
    pub fn calibrate_prediction(&self, sentence: &Sentence, base: Tagged) -> Result<Calibrated, CalibrationError> {
        let neighbors = if base.spans.is_empty() {
            Vec::new()
        } else {
            self.neighbors(sentence)
        };
        let (spans, trace) = vote(&sentence.id, &base.spans, &neighbors, &self.policy, self.model.label_set())?;
        Ok(Calibrated { base, spans, trace })
    }

    pub fn calibrate_batch(&self, sentences: &[Sentence]) -> BatchCalibration {
        let results: Vec<Result<Calibrated, CalibrationError>> =
            sentences.par_iter().map(|s| self.calibrate(s)).collect();
        let mut batch = BatchCalibration::default();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(c) => {
                    batch.stats.sentences += 1;
                    batch.stats.spans += c.spans.len();
                    batch.stats.reassigned += c.trace.len();
                    for t in &c.trace {
                        *batch
                            .stats
                            .matrix
                            .entry(t.old_type.clone())
                            .or_default()
                            .entry(t.new_type.clone())
                            .or_default() += 1;
                    }
                    batch.outputs.push(Some(c));
                }
                Err(e) => {
                    batch.errors.push((i, e.to_string()));
                    batch.outputs.push(None);
                }
            }
        }
        if batch.stats.spans > 0 {
            batch.stats.fraction_reassigned = batch.stats.reassigned as f64 / batch.stats.spans as f64;
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Scheme;
    use proptest::prelude::*;

    fn labels() -> LabelSet {
        LabelSet::new(["CITY", "PROV", "TOWN"], Scheme::Bioes).unwrap()
    }

    fn sp(start: usize, surface: &str, ty: &str) -> EntitySpan {
        EntitySpan {
            start,
            end: start + surface.chars().count(),
            label: ty.to_string(),
            surface: surface.to_string(),
        }
    }

    fn nb(doc_id: u32, spans: Vec<EntitySpan>) -> Neighbor {
        Neighbor { doc_id, spans }
    }

    fn fixture() -> Vec<Neighbor> {
        vec![
            nb(0, vec![sp(0, "吉林", "PROV"), sp(3, "长春", "CITY")]),
            nb(1, vec![sp(0, "吉林", "PROV")]),
            nb(2, vec![sp(0, "吉林", "PROV"), sp(3, "白城", "CITY")]),
            nb(3, vec![sp(2, "吉林", "CITY")]),
        ]
    }

    fn tally_oracle(surface: &str, neighbors: &[Neighbor], self_type: Option<&str>) -> BTreeMap<String, usize> {
        let mut t = BTreeMap::new();
        for n in neighbors {
            for s in &n.spans {
                if s.surface == surface {
                    *t.entry(s.label.clone()).or_insert(0) += 1;
                }
            }
        }
        if let Some(ty) = self_type {
            *t.entry(ty.to_string()).or_insert(0) += 1;
        }
        t
    }

    #[test]
    fn ambiguous_city_becomes_province() {
        let query = vec![sp(0, "吉林", "CITY")];
        for self_vote in [true, false] {
            let policy = VotePolicy { include_self_vote: self_vote, ..VotePolicy::default() };
            let (out, trace) = vote("q", &query, &fixture(), &policy, &labels()).unwrap();
            assert_eq!(out[0].label, "PROV");
            assert_eq!(trace.len(), 1);
            let expected = tally_oracle("吉林", &fixture(), self_vote.then_some("CITY"));
            assert_eq!(trace[0].tally, expected);
            assert_eq!(trace[0].tally["PROV"], 3);
            assert_eq!(trace[0].tally["CITY"], if self_vote { 2 } else { 1 });
            assert_eq!(trace[0].doc_ids, [0, 1, 2, 3]);
        }
    }

    #[test]
    fn no_match_and_tie_keep_original() {
        let query = vec![sp(0, "松原", "CITY")];
        let (out, trace) = vote("q", &query, &fixture(), &VotePolicy::default(), &labels()).unwrap();
        assert_eq!(out, query);
        assert!(trace.is_empty());

        let neighbors = vec![
            nb(0, vec![sp(0, "吉林", "PROV"), sp(2, "吉林", "PROV")]),
            nb(1, vec![sp(0, "吉林", "CITY"), sp(2, "吉林", "CITY")]),
        ];
        let policy = VotePolicy { include_self_vote: false, ..VotePolicy::default() };
        let query = vec![sp(0, "吉林", "TOWN")];
        let (out, trace) = vote("q", &query, &neighbors, &policy, &labels()).unwrap();
        assert_eq!(out[0].label, "TOWN");
        assert!(trace.is_empty());
    }

    #[test]
    fn prefix_extension_matches_longer_surfaces() {
        let query = vec![sp(0, "白城", "TOWN")];
        let neighbors = vec![nb(5, vec![sp(2, "白城市", "CITY")]), nb(6, vec![sp(0, "白城市", "CITY")])];
        let exact = VotePolicy::default();
        assert_eq!(vote("q", &query, &neighbors, &exact, &labels()).unwrap().0[0].label, "TOWN");
        let prefix = VotePolicy { match_mode: MatchMode::PrefixExtension, ..exact };
        assert_eq!(vote("q", &query, &neighbors, &prefix, &labels()).unwrap().0[0].label, "CITY");
    }

    #[test]
    fn min_votes_and_unknown_types() {
        let query = vec![sp(0, "吉林", "CITY")];
        let policy = VotePolicy { min_votes: 5, ..VotePolicy::default() };
        assert_eq!(vote("q", &query, &fixture(), &policy, &labels()).unwrap().0, query);
        let bad = vec![nb(0, vec![sp(0, "吉林", "COUNTRY")])];
        assert!(matches!(
            vote("q", &query, &bad, &VotePolicy::default(), &labels()),
            Err(CalibrationError::UnknownType(_))
        ));
        assert!(VotePolicy { min_votes: 0, ..VotePolicy::default() }.validate().is_err());
    }

    #[test]
    fn match_mode_parsing() {
        assert_eq!("exact".parse::<MatchMode>().unwrap(), MatchMode::ExactSurface);
        assert_eq!("prefix-extension".parse::<MatchMode>().unwrap(), MatchMode::PrefixExtension);
        assert!("fuzzy".parse::<MatchMode>().is_err());
        let json = serde_json::to_string(&VotePolicy::default()).unwrap();
        assert!(json.contains("\"exact-surface\""));
    }

    const TYPES: [&str; 3] = ["CITY", "PROV", "TOWN"];
    const SURFACES: [&str; 4] = ["吉林", "白城", "白城市", "长春"];

    fn arb_span() -> impl Strategy<Value = EntitySpan> {
        (0usize..4, 0usize..3, 0usize..10).prop_map(|(s, t, start)| sp(start, SURFACES[s], TYPES[t]))
    }

    fn arb_neighbors() -> impl Strategy<Value = Vec<Neighbor>> {
        prop::collection::vec(prop::collection::vec(arb_span(), 0..4), 0..6)
            .prop_map(|v| v.into_iter().enumerate().map(|(i, s)| nb(i as u32, s)).collect())
    }

    fn arb_policy() -> impl Strategy<Value = VotePolicy> {
        (any::<bool>(), any::<bool>(), 1usize..3).prop_map(|(prefix, self_vote, min_votes)| VotePolicy {
            match_mode: if prefix { MatchMode::PrefixExtension } else { MatchMode::ExactSurface },
            include_self_vote: self_vote,
            min_votes,
            ..VotePolicy::default()
        })
    }

    proptest! {
        #[test]
        fn boundaries_are_preserved(
            query in prop::collection::vec(arb_span(), 0..5),
            neighbors in arb_neighbors(),
            policy in arb_policy(),
        ) {
            let (out, trace) = vote("q", &query, &neighbors, &policy, &labels()).unwrap();
            prop_assert_eq!(out.len(), query.len());
            for (a, b) in out.iter().zip(&query) {
                prop_assert_eq!((a.start, a.end, &a.surface), (b.start, b.end, &b.surface));
            }
            let changed = out.iter().zip(&query).filter(|(a, b)| a.label != b.label).count();
            prop_assert_eq!(changed, trace.len());
            for t in &trace {
                let win = t.tally[&t.new_type];
                prop_assert!(t.tally.iter().all(|(ty, &c)| ty == &t.new_type || c < win));
            }
        }

        #[test]
        fn unanimous_evidence_wins(
            query in prop::collection::vec(arb_span(), 1..5),
            neighbors in arb_neighbors(),
            target in 0usize..3,
            min_votes in 1usize..3,
        ) {
            // with the self vote on, a single retrieved vote only ties the
            // query's own type, so unanimity is checked without it
            let policy = VotePolicy { include_self_vote: false, min_votes, ..VotePolicy::default() };
            let neighbors: Vec<Neighbor> = neighbors
                .into_iter()
                .map(|mut n| { for s in &mut n.spans { s.label = TYPES[target].into(); } n })
                .collect();
            let (out, _) = vote("q", &query, &neighbors, &policy, &labels()).unwrap();
            for (o, q) in out.iter().zip(&query) {
                let count = tally_oracle(&q.surface, &neighbors, None).values().sum::<usize>();
                if count >= min_votes {
                    prop_assert_eq!(&o.label, TYPES[target]);
                } else {
                    prop_assert_eq!(&o.label, &q.label);
                }
            }
        }

        #[test]
        fn exact_voting_is_idempotent(
            query in prop::collection::vec(arb_span(), 0..5),
            neighbors in arb_neighbors(),
            self_vote in any::<bool>(),
        ) {
            let policy = VotePolicy { include_self_vote: self_vote, ..VotePolicy::default() };
            let (once, _) = vote("q", &query, &neighbors, &policy, &labels()).unwrap();
            let (twice, trace) = vote("q", &once, &neighbors, &policy, &labels()).unwrap();
            prop_assert_eq!(once, twice);
            prop_assert!(trace.is_empty());
        }

        #[test]
        fn no_neighbors_is_identity(
            query in prop::collection::vec(arb_span(), 0..5),
            policy in arb_policy(),
        ) {
            let (out, trace) = vote("q", &query, &[], &policy, &labels()).unwrap();
            prop_assert_eq!(out, query);
            prop_assert!(trace.is_empty());
        }
    }
}
