//! Linear-chain CRF tagger: feature templates, exact inference, training.

pub mod crf;
pub mod features;
pub mod model;
pub mod train;

use std::collections::HashMap;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlator::{CorrelationFeatures, Correlator};
use crate::corpus::{CorpusError, EntitySpan, Sentence};
use crate::retriever::Index;

pub use features::{default_templates, extract_features, with_correlation, FeatureTemplate};
pub use model::{CrfModel, Encoded};
pub use train::{train, train_with_features, EpochRecord, TrainConfig, TrainLog, Trained};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("tag {0:?} is not in the label set")]
    UnknownTag(String),
    #[error("tag count does not match token count")]
    LengthMismatch,
    #[error("bad feature template: {0}")]
    BadTemplate(String),
    #[error("bad model file: {0}")]
    BadModel(String),
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}, max |w| {max_weight}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        max_weight: f64,
    },
    #[error("empty training set")]
    EmptyTrainSet,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decoded output for one sentence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tagged {
    pub tags: Vec<String>,
    pub spans: Vec<EntitySpan>,
}

/// Tags a batch in parallel; output order follows input order.
pub fn tag(model: &CrfModel, sentences: &[Sentence], correlator: Option<&Correlator>) -> Vec<Tagged> {
    match correlator {
        Some(c) => {
            let feats = c.features_batch(sentences);
            tag_with_features(model, sentences, Some(&feats))
        }
        None => tag_with_features(model, sentences, None),
    }
}

/// Tags a batch with precomputed correlation features (one per sentence).
pub fn tag_with_features(
    model: &CrfModel,
    sentences: &[Sentence],
    features: Option<&[CorrelationFeatures]>,
) -> Vec<Tagged> {
    if let Some(f) = features {
        assert_eq!(f.len(), sentences.len(), "one feature set per sentence");
    }
    sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| model.predict(s, features.map(|f| &f[i])))
        .collect()
}

/// Plain-model predictions on pool documents, optionally memoized by doc id.
pub struct PoolTagger<'a> {
    pub model: &'a CrfModel,
    pub index: &'a Index,
    memoize: bool,
    cache: RwLock<HashMap<u32, Vec<EntitySpan>>>,
}

impl<'a> PoolTagger<'a> {
    pub fn new(model: &'a CrfModel, index: &'a Index, memoize: bool) -> Self {
        PoolTagger {
            model,
            index,
            memoize,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn spans(&self, doc_id: u32) -> Vec<EntitySpan> {
        if self.memoize {
            if let Some(p) = self.cache.read().expect("cache lock").get(&doc_id) {
                return p.clone();
            }
        }
        let text = self.index.doc_text(doc_id).unwrap_or("");
        let s = Sentence::from_text(doc_id.to_string(), text);
        let spans = self.model.predict(&s, None).spans;
        if self.memoize {
            self.cache.write().expect("cache lock").insert(doc_id, spans.clone());
        }
        spans
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}
