//! Multi-seed comparison of the plain tagger, entity voting and the
//! correlator-augmented tagger, plus the sweeps built on top of it.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{entity_prf, EvalReport};
use super::stats::{mean, paired_ttest, std_dev, TTest};
use crate::calibrator::{vote, Calibrator, Neighbor, VotePolicy};
use crate::correlator::{correlation_features, select_group, Channel, CorrelatorConfig, GroupSample};
use crate::corpus::{DecodeMode, EntitySpan, LabeledSentence, Sentence};
use crate::provenance::config_hash;
use crate::retriever::{build_index, Index, IndexConfig};
use crate::tagger::{tag, train_with_features, CrfModel, PoolTagger, TaggerError, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Baseline,
    EntityVoting,
    Correlator,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::EntityVoting => "entity-voting",
            Method::Correlator => "correlator",
        })
    }
}

pub fn default_seeds() -> Vec<u64> {
    (1..=8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub vote: VotePolicy,
    pub correlator: CorrelatorConfig,
    pub index: IndexConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: default_seeds(),
            methods: vec![Method::Baseline, Method::EntityVoting, Method::Correlator],
            train: TrainConfig::default(),
            vote: VotePolicy::default(),
            correlator: CorrelatorConfig::default(),
            index: IndexConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("train fraction {0} selects no sentence")]
    EmptyFraction(f64),
    #[error("invalid sweep: {0}")]
    BadSweep(String),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Calibration(#[from] crate::calibrator::CalibrationError),
    #[error(transparent)]
    Correlator(#[from] crate::correlator::CorrelatorError),
    #[error(transparent)]
    Eval(#[from] super::EvalError),
    #[error(transparent)]
    Index(#[from] crate::retriever::IndexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Labeled splits and the unlabeled pool.
pub struct Benchmark {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub pool: Vec<String>,
}

impl Benchmark {
    /// Digest of every split and the pool.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for split in [&self.train, &self.dev, &self.test] {
            bytes.extend(crate::corpus::to_conll_string(split).into_bytes());
            bytes.push(0);
        }
        for t in &self.pool {
            bytes.extend(t.as_bytes());
            bytes.push(b'\n');
        }
        crate::provenance::digest_bytes(&bytes)
    }
}

/// Retrieval results that do not depend on the seed: vote neighbors of test
/// sentences and correlator groups of every labeled sentence.
pub struct RetrievalCache {
    pub vote_hits: Vec<Vec<u32>>,
    pub groups: [Vec<Vec<GroupSample>>; 3],
}

fn hits_excluding_self(index: &Index, text: &str, k: usize, exclude: bool) -> crate::retriever::RetrievalResult {
    if exclude {
        index.retrieve_topk_filtered(text, k, |d| index.doc_text(d) != Some(text))
    } else {
        index.retrieve_topk(text, k)
    }
}

impl RetrievalCache {
    pub fn build(bench: &Benchmark, index: &Index, cfg: &ExperimentConfig) -> RetrievalCache {
        let want_vote = cfg.methods.contains(&Method::EntityVoting);
        let want_corr = cfg.methods.contains(&Method::Correlator);
        let vote_hits = bench
            .test
            .par_iter()
            .map(|s| {
                if !want_vote || cfg.vote.k == 0 {
                    return Vec::new();
                }
                let text = s.sentence.text();
                hits_excluding_self(index, &text, cfg.vote.k, cfg.vote.exclude_verbatim_query)
                    .hits
                    .iter()
                    .map(|h| h.doc_id)
                    .collect()
            })
            .collect();
        let groups = |split: &[LabeledSentence]| -> Vec<Vec<GroupSample>> {
            split
                .par_iter()
                .map(|s| {
                    let c = &cfg.correlator;
                    if !want_corr || c.max_samples == 0 || index.doc_count() == 0 {
                        return Vec::new();
                    }
                    let text = s.sentence.text();
                    let r = hits_excluding_self(index, &text, c.max_samples, c.exclude_verbatim_query);
                    select_group(&r, s.sentence.len(), c)
                })
                .collect()
        };
        RetrievalCache {
            vote_hits,
            groups: [groups(&bench.train), groups(&bench.dev), groups(&bench.test)],
        }
    }
}

/// Seeded subsample of `n` items keeping `round(fraction × n)`, in original order.
pub fn subsample(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, ExperimentError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ExperimentError::BadSweep(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = (fraction * n as f64).round() as usize;
    if keep == 0 {
        return Err(ExperimentError::EmptyFraction(fraction));
    }
    if keep >= n {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fraction.to_bits());
    let mut idx = sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn gold_spans(split: &[LabeledSentence], model: &CrfModel) -> Vec<Vec<EntitySpan>> {
    split
        .iter()
        .map(|s| {
            s.spans(model.label_set().scheme(), DecodeMode::Lenient)
                .expect("tags validated when encoded")
        })
        .collect()
}

/// Trains and evaluates every configured method for one seed.
///
/// `train_idx` selects the training sentences used by this run.
pub fn run_seed(
    bench: &Benchmark,
    index: &Index,
    cache: &RetrievalCache,
    train_idx: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<BTreeMap<Method, EvalReport>, ExperimentError> {
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let train: Vec<LabeledSentence> = train_idx.iter().map(|&i| bench.train[i].clone()).collect();
    let base = train_with_features(&train, &bench.dev, &tcfg, None)?.model;
    let test_sentences: Vec<Sentence> = bench.test.iter().map(|s| s.sentence.clone()).collect();
    let gold = gold_spans(&bench.test, &base);
    let base_pred: Vec<Vec<EntitySpan>> = tag(&base, &test_sentences, None).into_iter().map(|t| t.spans).collect();

    let mut out = BTreeMap::new();
    let stamp = |mut r: EvalReport| {
        r.metadata.seed = Some(seed);
        r.metadata.config_hash = Some(config_hash(cfg));
        r
    };
    if cfg.methods.contains(&Method::Baseline) {
        out.insert(Method::Baseline, stamp(entity_prf(&gold, &base_pred)?));
    }
    let pool = PoolTagger::new(&base, index, true);
    if cfg.methods.contains(&Method::EntityVoting) {
        let voted: Vec<Vec<EntitySpan>> = base_pred
            .par_iter()
            .enumerate()
            .map(|(i, pred)| {
                if pred.is_empty() {
                    return Ok(Vec::new());
                }
                let neighbors: Vec<Neighbor> = cache.vote_hits[i]
                    .iter()
                    .map(|&d| Neighbor {
                        doc_id: d,
                        spans: pool.spans(d),
                    })
                    .collect();
                vote(&test_sentences[i].id, pred, &neighbors, &cfg.vote, base.label_set()).map(|v| v.0)
            })
            .collect::<Result<_, _>>()?;
        out.insert(Method::EntityVoting, stamp(entity_prf(&gold, &voted)?));
    }
    if cfg.methods.contains(&Method::Correlator) {
        let features = |split: &[LabeledSentence], groups: &[Vec<GroupSample>], pick: &mut dyn Iterator<Item = usize>| {
            pick.collect::<Vec<_>>()
                .par_iter()
                .map(|&i| {
                    let group = &groups[i];
                    let preds: Vec<Vec<EntitySpan>> = if cfg.correlator.has(Channel::EntityVote) {
                        group.iter().map(|g| pool.spans(g.doc_id)).collect()
                    } else {
                        Vec::new()
                    };
                    correlation_features(&split[i].sentence, group, &preds, &cfg.correlator)
                })
                .collect::<Vec<_>>()
        };
        let train_f = features(&bench.train, &cache.groups[0], &mut train_idx.iter().copied());
        let dev_f = features(&bench.dev, &cache.groups[1], &mut (0..bench.dev.len()));
        let test_f = features(&bench.test, &cache.groups[2], &mut (0..bench.test.len()));
        let augmented =
            train_with_features(&train, &bench.dev, &tcfg, Some((&cfg.correlator, &train_f, &dev_f)))?.model;
        let pred: Vec<Vec<EntitySpan>> = crate::tagger::tag_with_features(&augmented, &test_sentences, Some(&test_f))
            .into_iter()
            .map(|t| t.spans)
            .collect();
        out.insert(Method::Correlator, stamp(entity_prf(&gold, &pred)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Training-set fraction.
    Fraction,
    /// Vote retrieval depth K.
    K,
    /// Pool size used to build the index.
    Pool,
    /// Correlator max_samples.
    Samples,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fraction" => Ok(Axis::Fraction),
            "k" => Ok(Axis::K),
            "pool" => Ok(Axis::Pool),
            "samples" => Ok(Axis::Samples),
            _ => Err(format!("unknown axis {s:?} (expected fraction, k, pool or samples)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    /// Seed for pool subsampling on the pool axis.
    #[serde(default)]
    pub pool_seed: u64,
}

impl SweepConfig {
    pub fn low_resource(experiment: ExperimentConfig) -> SweepConfig {
        SweepConfig {
            axis: Axis::Fraction,
            values: vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.03],
            experiment,
            pool_seed: 0,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.values.is_empty() {
            return Err(ExperimentError::BadSweep("no axis values".into()));
        }
        if self.experiment.seeds.is_empty() {
            return Err(ExperimentError::BadSweep("no seeds".into()));
        }
        let distinct: HashSet<u64> = self.experiment.seeds.iter().copied().collect();
        if distinct.len() != self.experiment.seeds.len() {
            return Err(ExperimentError::BadSweep("seeds must be distinct".into()));
        }
        for &v in &self.values {
            let integral = v >= 0.0 && v.fract() == 0.0;
            let ok = match self.axis {
                Axis::Fraction => v > 0.0 && v <= 1.0,
                _ => integral,
            };
            if !ok {
                return Err(ExperimentError::BadSweep(format!("value {v} is invalid on the {:?} axis", self.axis)));
            }
        }
        Ok(())
    }

    /// The experiment configuration at one axis value.
    /// Identity of the runs at one axis value: everything that shapes a run
    /// except the seed.
    pub fn run_key(&self, value: f64, data: &str) -> String {
        let mut point = self.point_config(value);
        point.seeds.clear();
        config_hash(&(self.axis, value, self.pool_seed, point, data))
    }

    pub fn point_config(&self, value: f64) -> ExperimentConfig {
        let mut cfg = self.experiment.clone();
        match self.axis {
            Axis::K => cfg.vote.k = value as usize,
            Axis::Samples => cfg.correlator.max_samples = value as usize,
            Axis::Fraction | Axis::Pool => {}
        }
        cfg
    }
}

/// One completed (axis value, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// See [`SweepConfig::run_key`].
    pub run_key: String,
    pub value: f64,
    pub seed: u64,
    pub reports: BTreeMap<Method, EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// Micro-F1 per seed, in seed-list order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_vs_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ttest_vs_baseline: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<RunRecord>,
    pub summary: BTreeMap<Method, MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

pub fn summarize(runs: &[RunRecord], seeds: &[u64]) -> BTreeMap<Method, MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        if let Some(run) = runs.iter().find(|r| r.seed == seed) {
            for (m, r) in &run.reports {
                by_method.entry(*m).or_default().push(r.micro.f1);
            }
        }
    }
    let baseline = by_method.get(&Method::Baseline).cloned();
    by_method
        .into_iter()
        .map(|(m, per_seed)| {
            let (delta, ttest) = match (&baseline, m) {
                (Some(b), m) if m != Method::Baseline && b.len() == per_seed.len() => {
                    (Some(mean(&per_seed) - mean(b)), paired_ttest(&per_seed, b).ok())
                }
                _ => (None, None),
            };
            let summary = MethodSummary {
                mean: mean(&per_seed),
                std: std_dev(&per_seed),
                per_seed,
                delta_vs_baseline: delta,
                ttest_vs_baseline: ttest,
            };
            (m, summary)
        })
        .collect()
}

fn load_checkpoint(path: &Path, keys: &HashSet<String>) -> Result<Vec<RunRecord>, ExperimentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn last line from an interrupted run is skipped
        if let Ok(r) = serde_json::from_str::<RunRecord>(&line) {
            if keys.contains(&r.run_key) {
                out.push(r);
            }
        }
    }
    Ok(out)
}

/// Runs a sweep over `cfg.values` × seeds.
///
/// With a checkpoint path, finished runs are appended as JSON lines and
/// runs already present under the same run key are not repeated. The
/// checkpoint may be shared between sweeps.
pub fn run_sweep(
    bench: &Benchmark,
    full_index: &Index,
    cfg: &SweepConfig,
    checkpoint: Option<&Path>,
) -> Result<SweepResult, ExperimentError> {
    cfg.validate()?;
    let data = bench.fingerprint();
    let hash = config_hash(&(cfg, &data));
    let keys: HashSet<String> = cfg.values.iter().map(|&v| cfg.run_key(v, &data)).collect();
    let mut done = match checkpoint {
        Some(p) => load_checkpoint(p, &keys)?,
        None => Vec::new(),
    };
    let mut sink = match checkpoint {
        Some(p) => Some(fs::OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let seeds = &cfg.experiment.seeds;
    for &value in &cfg.values {
        let key = cfg.run_key(value, &data);
        let todo: Vec<u64> = seeds
            .iter()
            .copied()
            .filter(|s| !done.iter().any(|r| r.run_key == key && r.seed == *s))
            .collect();
        if todo.is_empty() {
            continue;
        }
        let point_cfg = cfg.point_config(value);
        let sub_index;
        let index = if cfg.axis == Axis::Pool {
            let keep: HashSet<usize> = subsample_pool(bench.pool.len(), value as usize, cfg.pool_seed)
                .into_iter()
                .collect();
            sub_index = build_index(
                bench.pool.iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, t)| t),
                point_cfg.index,
            )?;
            &sub_index
        } else {
            full_index
        };
        let cache = RetrievalCache::build(bench, index, &point_cfg);
        let records: Vec<Result<RunRecord, ExperimentError>> = todo
            .par_iter()
            .map(|&seed| {
                let train_idx = if cfg.axis == Axis::Fraction {
                    subsample(bench.train.len(), value, seed)?
                } else {
                    (0..bench.train.len()).collect()
                };
                let reports = run_seed(bench, index, &cache, &train_idx, &point_cfg, seed)?;
                log::info!("{:?}={value} seed {seed} done", cfg.axis);
                Ok(RunRecord {
                    run_key: key.clone(),
                    value,
                    seed,
                    reports,
                })
            })
            .collect();
        for r in records {
            let r = r?;
            if let Some(f) = sink.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&r)?)?;
                f.flush()?;
            }
            done.push(r);
        }
    }
    let points = cfg
        .values
        .iter()
        .map(|&value| {
            let key = cfg.run_key(value, &data);
            let mut runs: Vec<RunRecord> = done
                .iter()
                .filter(|r| r.run_key == key && seeds.contains(&r.seed))
                .cloned()
                .collect();
            runs.sort_by_key(|r| seeds.iter().position(|s| *s == r.seed));
            SweepPoint {
                value,
                summary: summarize(&runs, seeds),
                runs,
            }
        })
        .collect();
    Ok(SweepResult {
        axis: cfg.axis,
        seeds: seeds.clone(),
        config_hash: hash,
        points,
    })
}

/// Seeded choice of `size` pool positions (all of them when `size ≥ n`).
pub fn subsample_pool(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub sentences: usize,
    pub seconds: f64,
    pub per_sentence_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimedMethod {
    Tag,
    Calibrate,
    CalibrateNoMemo,
    CorrelatorTag,
}

/// Wall-clock time of tagging `sentences` by each method.
///
/// Models and index must already be loaded; `augmented` is required for
/// `CorrelatorTag` and that row is skipped without it.
pub fn timing_report(
    methods: &[TimedMethod],
    base: &CrfModel,
    augmented: Option<&CrfModel>,
    index: &Index,
    sentences: &[Sentence],
    policy: &VotePolicy,
) -> Result<Vec<TimingRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &m in methods {
        let start = Instant::now();
        let name = match m {
            TimedMethod::Tag => {
                std::hint::black_box(tag(base, sentences, None));
                "tag"
            }
            TimedMethod::Calibrate | TimedMethod::CalibrateNoMemo => {
                let memoize = m == TimedMethod::Calibrate;
                let cal = Calibrator::new(base, index, VotePolicy { memoize, ..policy.clone() })?;
                std::hint::black_box(cal.calibrate_batch(sentences));
                if memoize {
                    "calibrate"
                } else {
                    "calibrate-no-memo"
                }
            }
            TimedMethod::CorrelatorTag => {
                let Some(model) = augmented else { continue };
                let ccfg = model.correlator.clone().unwrap_or_default();
                let corr = crate::correlator::Correlator::new(index, base, ccfg)?;
                std::hint::black_box(tag(model, sentences, Some(&corr)));
                "correlator-tag"
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        rows.push(TimingRow {
            method: name.to_string(),
            sentences: sentences.len(),
            seconds,
            per_sentence_ms: if sentences.is_empty() { 0.0 } else { 1e3 * seconds / sentences.len() as f64 },
        });
    }
    Ok(rows)
}
