use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crf::{self, Potentials, NEG_INF};
use super::features::{extract_features, FeatureTemplate};
use super::train::TrainConfig;
use super::{Tagged, TaggerError};
use crate::correlator::{CorrelationFeatures, CorrelatorConfig};
use crate::corpus::{decode_spans, DecodeMode, LabelSet, LabeledSentence, Sentence};
use crate::provenance::Provenance;

const MODEL_FORMAT: &str = "corrner-crf";
const MODEL_VERSION: u32 = 1;

/// A sentence lowered to feature ids and gold label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub features: Vec<Vec<u32>>,
    pub gold: Vec<usize>,
}

/// Linear-chain CRF with an explicit feature vocabulary.
///
/// All weights live in one flat vector laid out as
/// `[emission (F × L) | transition (L × L) | begin (L) | end (L)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    label_set: LabelSet,
    templates: Vec<FeatureTemplate>,
    constrained: bool,
    vocab: HashMap<String, u32>,
    feature_names: Vec<String>,
    weights: Vec<f64>,
    pub correlator: Option<CorrelatorConfig>,
    pub train_config: Option<TrainConfig>,
    pub provenance: Option<Provenance>,
    // 0 for allowed, NEG_INF for structurally invalid
    tr_mask: Vec<f64>,
    begin_mask: Vec<f64>,
    end_mask: Vec<f64>,
}

impl CrfModel {
    pub fn new(label_set: LabelSet, templates: Vec<FeatureTemplate>, constrained: bool) -> Result<CrfModel, TaggerError> {
        for t in &templates {
            t.validate()?;
        }
        let l = label_set.len();
        let mut tr_mask = vec![0.0; l * l];
        let mut begin_mask = vec![0.0; l];
        let mut end_mask = vec![0.0; l];
        for a in 0..l {
            if !label_set.transition_allowed(None, Some(a)) {
                begin_mask[a] = NEG_INF;
            }
            if !label_set.transition_allowed(Some(a), None) {
                end_mask[a] = NEG_INF;
            }
            for b in 0..l {
                if !label_set.transition_allowed(Some(a), Some(b)) {
                    tr_mask[a * l + b] = NEG_INF;
                }
            }
        }
        Ok(CrfModel {
            weights: vec![0.0; l * l + 2 * l],
            label_set,
            templates,
            constrained,
            vocab: HashMap::new(),
            feature_names: Vec::new(),
            correlator: None,
            train_config: None,
            provenance: None,
            tr_mask,
            begin_mask,
            end_mask,
        })
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn templates(&self) -> &[FeatureTemplate] {
        &self.templates
    }

    pub fn constrained(&self) -> bool {
        self.constrained
    }

    pub fn labels(&self) -> usize {
        self.label_set.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_id(&self, name: &str) -> Option<u32> {
        self.vocab.get(name).copied()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn emission_len(&self) -> usize {
        self.n_features() * self.labels()
    }

    pub fn transition_offset(&self) -> usize {
        self.emission_len()
    }

    pub fn begin_offset(&self) -> usize {
        self.emission_len() + self.labels() * self.labels()
    }

    pub fn end_offset(&self) -> usize {
        self.begin_offset() + self.labels()
    }

    /// Emission weight of a named feature for a label index.
    pub fn emission_weight(&self, feature: &str, label: usize) -> Option<f64> {
        self.feature_id(feature)
            .map(|f| self.weights[f as usize * self.labels() + label])
    }

    /// Registers every feature string seen in `sentences`, in first-seen order.
    pub fn build_vocab<'s>(
        &mut self,
        sentences: impl IntoIterator<Item = (&'s Sentence, Option<&'s CorrelationFeatures>)>,
    ) {
        let l = self.labels();
        let tail = self.weights.split_off(self.emission_len());
        for (sentence, correlation) in sentences {
            for pos in 0..sentence.len() {
                for name in extract_features(sentence, pos, &self.templates, correlation) {
                    if !self.vocab.contains_key(&name) {
                        self.vocab.insert(name.clone(), self.feature_names.len() as u32);
                        self.feature_names.push(name);
                        self.weights.extend(std::iter::repeat_n(0.0, l));
                    }
                }
            }
        }
        self.weights.extend(tail);
    }

    /// Known feature ids per position; unseen features are dropped.
    pub fn feature_ids(&self, sentence: &Sentence, correlation: Option<&CorrelationFeatures>) -> Vec<Vec<u32>> {
        (0..sentence.len())
            .map(|pos| {
                extract_features(sentence, pos, &self.templates, correlation)
                    .iter()
                    .filter_map(|f| self.vocab.get(f).copied())
                    .collect()
            })
            .collect()
    }

    pub fn encode(
        &self,
        sentence: &LabeledSentence,
        correlation: Option<&CorrelationFeatures>,
    ) -> Result<Encoded, TaggerError> {
        let gold = sentence
            .tags
            .iter()
            .map(|t| {
                self.label_set
                    .tag_index(t)
                    .ok_or_else(|| TaggerError::UnknownTag(t.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if gold.len() != sentence.sentence.len() {
            return Err(TaggerError::LengthMismatch);
        }
        Ok(Encoded {
            features: self.feature_ids(&sentence.sentence, correlation),
            gold,
        })
    }

    /// Log-potentials for a sentence given its feature ids.
    pub fn potentials(&self, features: &[Vec<u32>], constrained: bool) -> Potentials {
        let l = self.labels();
        let mut p = Potentials::zeros(features.len(), l);
        for (t, feats) in features.iter().enumerate() {
            let row = &mut p.emission[t * l..(t + 1) * l];
            for &f in feats {
                let w = &self.weights[f as usize * l..(f as usize + 1) * l];
                for (r, w) in row.iter_mut().zip(w) {
                    *r += w;
                }
            }
        }
        let tr = self.transition_offset();
        p.transition.copy_from_slice(&self.weights[tr..tr + l * l]);
        p.begin.copy_from_slice(&self.weights[self.begin_offset()..self.begin_offset() + l]);
        p.end.copy_from_slice(&self.weights[self.end_offset()..self.end_offset() + l]);
        if constrained {
            for (x, m) in p.transition.iter_mut().zip(&self.tr_mask) {
                *x += m;
            }
            for (x, m) in p.begin.iter_mut().zip(&self.begin_mask) {
                *x += m;
            }
            for (x, m) in p.end.iter_mut().zip(&self.end_mask) {
                *x += m;
            }
        }
        p
    }

    pub fn log_partition(
        &self,
        sentence: &Sentence,
        correlation: Option<&CorrelationFeatures>,
    ) -> Result<f64, TaggerError> {
        if sentence.is_empty() {
            return Err(TaggerError::EmptySentence);
        }
        let ids = self.feature_ids(sentence, correlation);
        Ok(crf::log_partition(&self.potentials(&ids, self.constrained)))
    }

    pub fn viterbi_decode(
        &self,
        sentence: &Sentence,
        correlation: Option<&CorrelationFeatures>,
        constrained: bool,
    ) -> Result<(Vec<String>, f64), TaggerError> {
        if sentence.is_empty() {
            return Err(TaggerError::EmptySentence);
        }
        let ids = self.feature_ids(sentence, correlation);
        let (path, score) = crf::viterbi(&self.potentials(&ids, constrained));
        let tags = path.iter().map(|&y| self.label_set.tag_name(y).to_string()).collect();
        Ok((tags, score))
    }

    /// Decodes with the model's own constraint setting; empty sentences yield nothing.
    pub fn predict(&self, sentence: &Sentence, correlation: Option<&CorrelationFeatures>) -> Tagged {
        if sentence.is_empty() {
            return Tagged::default();
        }
        let (tags, _) = self
            .viterbi_decode(sentence, correlation, self.constrained)
            .expect("sentence is non-empty");
        let spans = decode_spans(&sentence.tokens, &tags, self.label_set.scheme(), DecodeMode::Lenient)
            .expect("decoded tags come from the label set");
        Tagged { tags, spans }
    }

    /// Σ (log Z − gold score) + (l2 / 2)·‖w‖², and its gradient.
    pub fn nll_and_gradient<'e>(&self, batch: impl IntoIterator<Item = &'e Encoded>, l2: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.weights.len()];
        let loss = self.accumulate(batch, l2, Some(&mut grad));
        (loss, grad)
    }

    pub fn nll<'e>(&self, batch: impl IntoIterator<Item = &'e Encoded>, l2: f64) -> f64 {
        self.accumulate(batch, l2, None)
    }

    fn accumulate<'e>(
        &self,
        batch: impl IntoIterator<Item = &'e Encoded>,
        l2: f64,
        mut grad: Option<&mut Vec<f64>>,
    ) -> f64 {
        let l = self.labels();
        let tr_off = self.transition_offset();
        let begin_off = self.begin_offset();
        let end_off = self.end_offset();
        let mut loss = 0.0;
        for ex in batch {
            let n = ex.gold.len();
            if n == 0 {
                continue;
            }
            let p = self.potentials(&ex.features, self.constrained);
            let gold_score = p.path_score(&ex.gold);
            let Some(g) = grad.as_deref_mut() else {
                loss += crf::log_partition(&p) - gold_score;
                continue;
            };
            let m = crf::marginals(&p);
            loss += m.log_z - gold_score;
            for (t, feats) in ex.features.iter().enumerate() {
                let node = &m.node[t * l..(t + 1) * l];
                for &f in feats {
                    let row = &mut g[f as usize * l..(f as usize + 1) * l];
                    for (r, q) in row.iter_mut().zip(node) {
                        *r += q;
                    }
                    row[ex.gold[t]] -= 1.0;
                }
            }
            for t in 0..n - 1 {
                let edge = &m.edge[t * l * l..(t + 1) * l * l];
                for (r, q) in g[tr_off..tr_off + l * l].iter_mut().zip(edge) {
                    *r += q;
                }
                g[tr_off + ex.gold[t] * l + ex.gold[t + 1]] -= 1.0;
            }
            for y in 0..l {
                g[begin_off + y] += m.node[y];
                g[end_off + y] += m.node[(n - 1) * l + y];
            }
            g[begin_off + ex.gold[0]] -= 1.0;
            g[end_off + ex.gold[n - 1]] -= 1.0;
        }
        if l2 > 0.0 {
            let mut sq = 0.0;
            for w in &self.weights {
                sq += w * w;
            }
            loss += 0.5 * l2 * sq;
            if let Some(g) = grad {
                for (gi, w) in g.iter_mut().zip(&self.weights) {
                    *gi += l2 * w;
                }
            }
        }
        loss
    }

    pub fn to_json(&self) -> String {
        let l = self.labels();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            provenance: self.provenance.clone(),
            label_set: self.label_set.clone(),
            templates: self.templates.clone(),
            constrained: self.constrained,
            correlator: self.correlator.clone(),
            train_config: self.train_config.clone(),
            features: self.feature_names.clone(),
            emission: self.weights[..self.emission_len()].to_vec(),
            transition: self.weights[self.transition_offset()..self.begin_offset()].to_vec(),
            begin: self.weights[self.begin_offset()..self.begin_offset() + l].to_vec(),
            end: self.weights[self.end_offset()..].to_vec(),
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<CrfModel, TaggerError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| TaggerError::BadModel(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(TaggerError::BadModel(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let mut model = CrfModel::new(file.label_set, file.templates, file.constrained)?;
        let l = model.labels();
        let nf = file.features.len();
        if nf.checked_mul(l) != Some(file.emission.len())
            || file.transition.len() != l * l
            || file.begin.len() != l
            || file.end.len() != l
        {
            return Err(TaggerError::BadModel("weight array sizes do not match the vocabulary and label set".into()));
        }
        for (i, name) in file.features.iter().enumerate() {
            if model.vocab.insert(name.clone(), i as u32).is_some() {
                return Err(TaggerError::BadModel(format!("duplicate feature {name:?}")));
            }
        }
        model.feature_names = file.features;
        let mut weights = file.emission;
        weights.extend(file.transition);
        weights.extend(file.begin);
        weights.extend(file.end);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TaggerError::BadModel("non-finite weight".into()));
        }
        model.weights = weights;
        if let Some(c) = &file.correlator {
            c.validate().map_err(|e| TaggerError::BadModel(e.to_string()))?;
        }
        model.correlator = file.correlator;
        model.train_config = file.train_config;
        model.provenance = file.provenance;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TaggerError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CrfModel, TaggerError> {
        CrfModel::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    label_set: LabelSet,
    templates: Vec<FeatureTemplate>,
    constrained: bool,
    #[serde(default)]
    correlator: Option<CorrelatorConfig>,
    #[serde(default)]
    train_config: Option<TrainConfig>,
    features: Vec<String>,
    emission: Vec<f64>,
    transition: Vec<f64>,
    begin: Vec<f64>,
    end: Vec<f64>,
}
