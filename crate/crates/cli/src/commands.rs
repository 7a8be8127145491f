use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use corrner::calibrator::{Calibrator, MatchMode, VotePolicy};
use corrner::corpus::{
    detect_scheme, read_conll, read_pool, write_conll, ConllOptions, DecodeMode, LabeledSentence, Sentence,
};
use corrner::correlator::{Channel, Correlator, CorrelatorConfig};
use corrner::evaluator::experiment::{run_sweep, Axis, Benchmark, SweepConfig};
use corrner::evaluator::{entity_prf, EvalReport};
use corrner::provenance::{config_hash, Provenance};
use corrner::retriever::{build_index_from_reader, load_index, save_index, Index, IndexConfig};
use corrner::synthgen::{generate_corpus, generate_gazetteer, write_corpus, GenConfig};
use corrner::tagger::{self, CrfModel, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::artifact::{create_parent, read_config, run_hash, should_run, stamp, write_json};
use crate::error::CliError;
use crate::Global;

fn internal(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator configuration (JSON); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

const SYNTH_FILES: [&str; 6] = [
    "train.conll",
    "dev.conll",
    "test.conll",
    "pool.txt",
    "gazetteer.json",
    "manifest.json",
];

pub fn synth(g: &Global, a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg: GenConfig = read_config(a.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    // the manifest carries this same hash
    let hash = config_hash(&cfg);
    let outputs: Vec<PathBuf> = SYNTH_FILES.iter().map(|f| a.out.join(f)).collect();
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    if !should_run("synth", &refs, &hash, g.force) {
        return Ok(());
    }
    let gaz = generate_gazetteer(&cfg)?;
    let corpus = generate_corpus(&gaz, &cfg)?;
    let manifest = write_corpus(&a.out, &gaz, &corpus, &cfg)?;
    for p in &refs {
        stamp(p, &hash)?;
    }
    log::info!("synth: {:?} written to {}", manifest.counts, a.out.display());
    Ok(())
}

// ------------------------------------------------------------------ index

#[derive(Debug, Clone, Args)]
pub struct IndexBuildArgs {
    /// One document per line.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Index configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn index_build(g: &Global, a: &IndexBuildArgs) -> Result<(), CliError> {
    let cfg: IndexConfig = read_config(a.config.as_deref())?;
    let hash = run_hash("index", &cfg, &[&a.pool])?;
    let outputs: Vec<PathBuf> = ["meta.json", "postings.bin", "docs.txt"].iter().map(|f| a.out.join(f)).collect();
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    if !should_run("index build", &refs, &hash, g.force) {
        return Ok(());
    }
    let file = fs::File::open(&a.pool).map_err(|e| CliError::data(a.pool.display(), e))?;
    let index = build_index_from_reader(BufReader::new(file), cfg)?;
    save_index(&index, &a.out, Some(&Provenance::new(&hash)))?;
    for p in &refs {
        stamp(p, &hash)?;
    }
    log::info!("index: {} documents, {} terms", index.doc_count(), index.term_count());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct IndexQueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub text: String,
}

pub fn index_query(a: &IndexQueryArgs) -> Result<(), CliError> {
    let index = load_index(&a.index)?;
    let result = index.retrieve_topk(&a.text, a.k);
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Training configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Add correlation features from retrieved samples (needs --index).
    #[arg(long)]
    pub correlate: bool,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Correlator configuration (JSON).
    #[arg(long)]
    pub corr_config: Option<PathBuf>,
    /// Plain model that tags retrieved samples; trained first when absent.
    #[arg(long)]
    pub base: Option<PathBuf>,
}

fn read_gold(path: &Path) -> Result<Vec<LabeledSentence>, CliError> {
    read_conll(path, &ConllOptions::gold()).map_err(|e| CliError::data(path.display(), e))
}

fn load_model(path: &Path) -> Result<CrfModel, CliError> {
    CrfModel::load(path).map_err(|e| CliError::data(path.display(), e))
}

fn load_index_at(path: &Path) -> Result<Index, CliError> {
    load_index(path).map_err(|e| CliError::data(path.display(), e))
}

pub fn train(g: &Global, a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainConfig = read_config(a.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ccfg: Option<CorrelatorConfig> = if a.correlate {
        if a.index.is_none() {
            return Err(CliError::Usage("--correlate needs --index".into()));
        }
        let c: CorrelatorConfig = read_config(a.corr_config.as_deref())?;
        c.validate()?;
        Some(c)
    } else {
        None
    };
    let mut inputs: Vec<&Path> = vec![&a.train, &a.dev];
    if a.correlate {
        inputs.extend(a.index.as_deref());
        inputs.extend(a.base.as_deref());
    }
    let hash = run_hash("train", &(&cfg, &ccfg), &inputs)?;
    let log_path = a.out.with_extension("log.json");
    if !should_run("train", &[&a.out, &log_path], &hash, g.force) {
        return Ok(());
    }
    let train = read_gold(&a.train)?;
    let dev = read_gold(&a.dev)?;
    let trained = match &ccfg {
        None => tagger::train(&train, &dev, &cfg, None)?,
        Some(c) => {
            let index = load_index_at(a.index.as_deref().expect("checked above"))?;
            let base = match &a.base {
                Some(p) => load_model(p)?,
                None => {
                    log::info!("train: fitting the plain model that tags retrieved samples");
                    tagger::train(&train, &dev, &cfg, None)?.model
                }
            };
            let corr = Correlator::new(&index, &base, c.clone())?;
            tagger::train(&train, &dev, &cfg, Some(&corr))?
        }
    };
    let mut model = trained.model;
    model.provenance = Some(Provenance::new(&hash));
    create_parent(&a.out)?;
    model.save(&a.out).map_err(|e| CliError::Internal(format!("{}: {e}", a.out.display())))?;
    stamp(&a.out, &hash)?;
    write_json(&log_path, &trained.log, &hash)?;
    if let Some(f1) = trained.log.epochs.iter().find(|e| e.epoch == trained.log.best_epoch).and_then(|e| e.dev_f1) {
        log::info!("train: best epoch {} dev F1 {f1:.4}", trained.log.best_epoch);
    }
    Ok(())
}

// -------------------------------------------------------------------- tag

#[derive(Debug, Clone, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Raw text (one sentence per line) or, with a .conll extension, CoNLL whose tags are ignored.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Index for models trained with --correlate.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Plain model that tags retrieved samples, for models trained with --correlate.
    #[arg(long)]
    pub base: Option<PathBuf>,
}

/// Sentences of a raw-text or CoNLL input file.
pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CliError> {
    if path.extension().is_some_and(|e| e == "conll") {
        let opts = ConllOptions::default();
        let labeled = read_conll(path, &opts).map_err(|e| CliError::data(path.display(), e))?;
        return Ok(labeled.into_iter().map(|s| s.sentence).collect());
    }
    let lines = read_pool(path).map_err(|e| CliError::data(path.display(), e))?;
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let s = Sentence::from_text(i.to_string(), l);
            if s.is_empty() {
                Err(CliError::Data(format!("{}: line {}: no tokens", path.display(), i + 1)))
            } else {
                Ok(s)
            }
        })
        .collect()
}

fn write_tagged(path: &Path, sentences: &[Sentence], tags: Vec<Vec<String>>, hash: &str) -> Result<(), CliError> {
    let labeled: Vec<LabeledSentence> = sentences
        .iter()
        .zip(tags)
        .map(|(s, t)| LabeledSentence::new(s.clone(), t))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    create_parent(path)?;
    write_conll(&labeled, path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    stamp(path, hash)
}

pub fn tag(g: &Global, a: &TagArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&a.model, &a.input];
    inputs.extend(a.index.as_deref());
    inputs.extend(a.base.as_deref());
    let hash = run_hash("tag", &(), &inputs)?;
    if !should_run("tag", &[&a.out], &hash, g.force) {
        return Ok(());
    }
    let model = load_model(&a.model)?;
    let sentences = read_sentences(&a.input)?;
    let tagged = match &model.correlator {
        None => tagger::tag(&model, &sentences, None),
        Some(c) => {
            let index = a
                .index
                .as_deref()
                .ok_or_else(|| CliError::Usage("this model uses correlation features: pass --index".into()))?;
            let index = load_index_at(index)?;
            let base = match &a.base {
                Some(p) => load_model(p)?,
                None if c.has(Channel::EntityVote) => {
                    return Err(CliError::Usage(
                        "this model uses the entity-vote channel: pass --base with the plain model".into(),
                    ))
                }
                None => model.clone(),
            };
            let corr = Correlator::new(&index, &base, c.clone())?;
            tagger::tag(&model, &sentences, Some(&corr))
        }
    };
    write_tagged(&a.out, &sentences, tagged.into_iter().map(|t| t.tags).collect(), &hash)
}

// -------------------------------------------------------------- calibrate

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Vote policy (JSON); --k and --match override it.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// exact or prefix.
    #[arg(long = "match")]
    pub match_mode: Option<MatchMode>,
    /// One JSON object per re-typed span.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn calibrate(g: &Global, a: &CalibrateArgs) -> Result<(), CliError> {
    let mut policy: VotePolicy = read_config(a.policy.as_deref())?;
    if let Some(k) = a.k {
        policy.k = k;
    }
    if let Some(m) = a.match_mode {
        policy.match_mode = m;
    }
    policy.validate()?;
    let hash = run_hash("calibrate", &policy, &[&a.model, &a.index, &a.input])?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    outputs.extend(a.trace.as_deref());
    if !should_run("calibrate", &outputs, &hash, g.force) {
        return Ok(());
    }
    let model = load_model(&a.model)?;
    if model.correlator.is_some() {
        return Err(CliError::Usage("calibrate expects a plain model, not one trained with --correlate".into()));
    }
    let index = load_index_at(&a.index)?;
    let sentences = read_sentences(&a.input)?;
    let cal = Calibrator::new(&model, &index, policy)?;
    let batch = cal.calibrate_batch(&sentences);
    if let Some((i, e)) = batch.errors.first() {
        return Err(CliError::Data(format!("sentence {i}: {e}")));
    }
    let scheme = model.label_set().scheme();
    let mut tags = Vec::new();
    let mut trace = String::new();
    for (s, c) in sentences.iter().zip(&batch.outputs) {
        let c = c.as_ref().expect("errors handled above");
        let t = corrner::corpus::encode_tags(&c.spans, s.len(), scheme).map_err(|e| CliError::Internal(e.to_string()))?;
        tags.push(t);
        for entry in &c.trace {
            trace.push_str(&serde_json::to_string(entry).expect("trace serializes"));
            trace.push('\n');
        }
    }
    write_tagged(&a.out, &sentences, tags, &hash)?;
    if let Some(p) = &a.trace {
        create_parent(p)?;
        fs::write(p, trace).map_err(internal(p))?;
        stamp(p, &hash)?;
    }
    log::info!(
        "calibrate: {} of {} spans re-typed",
        batch.stats.reassigned,
        batch.stats.spans
    );
    Ok(())
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Full report (JSON); a summary always goes to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn evaluate(gold_path: &Path, pred_path: &Path) -> Result<EvalReport, CliError> {
    let gold = read_gold(gold_path)?;
    let pred = read_conll(pred_path, &ConllOptions::default()).map_err(|e| CliError::data(pred_path.display(), e))?;
    for i in 0..gold.len().max(pred.len()) {
        match (gold.get(i), pred.get(i)) {
            (Some(g), Some(p)) if g.sentence.len() != p.sentence.len() => {
                return Err(CliError::Data(format!(
                    "sentence {i}: gold has {} tokens but the prediction has {}",
                    g.sentence.len(),
                    p.sentence.len()
                )))
            }
            (Some(_), None) => {
                return Err(CliError::Data(format!(
                    "sentence {i}: missing from predictions ({} gold, {} predicted sentences)",
                    gold.len(),
                    pred.len()
                )))
            }
            (None, Some(_)) => {
                return Err(CliError::Data(format!(
                    "sentence {i}: not in gold ({} gold, {} predicted sentences)",
                    gold.len(),
                    pred.len()
                )))
            }
            _ => {}
        }
    }
    let scheme = detect_scheme(gold.iter().chain(&pred));
    let spans = |v: &[LabeledSentence], mode| -> Result<Vec<_>, CliError> {
        v.iter()
            .enumerate()
            .map(|(i, s)| s.spans(scheme, mode).map_err(|e| CliError::Data(format!("sentence {i}: {e}"))))
            .collect()
    };
    Ok(entity_prf(&spans(&gold, DecodeMode::Strict)?, &spans(&pred, DecodeMode::Lenient)?)?)
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<(), CliError> {
    let hash = run_hash("eval", &(), &[&a.gold, &a.pred])?;
    let mut report = evaluate(&a.gold, &a.pred)?;
    report.metadata.config_hash = Some(hash.clone());
    report.metadata.seed = g.seed;
    println!(
        "micro P {:.4} R {:.4} F1 {:.4} | macro F1 {:.4} | gold {} pred {} correct {}",
        report.micro.precision, report.micro.recall, report.micro.f1, report.macro_avg.f1, report.gold, report.pred, report.correct
    );
    for (ty, r) in &report.per_type {
        println!("  {ty:<10} P {:.4} R {:.4} F1 {:.4} (gold {})", r.prf.precision, r.prf.recall, r.prf.f1, r.gold);
    }
    if let Some(p) = &a.report {
        write_json(p, &report, &hash)?;
    }
    Ok(())
}

// ------------------------------------------------------------------ sweep

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub axis: Axis,
    /// Sweep configuration (JSON): values, experiment, pool_seed. Values
    /// default to the low-resource fractions on the fraction axis.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with train.conll, dev.conll, test.conll and pool.txt.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Completed runs (JSON lines); defaults to <out>.runs.jsonl.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn load_benchmark(dir: &Path) -> Result<Benchmark, CliError> {
    let pool_path = dir.join("pool.txt");
    Ok(Benchmark {
        train: read_gold(&dir.join("train.conll"))?,
        dev: read_gold(&dir.join("dev.conll"))?,
        test: read_gold(&dir.join("test.conll"))?,
        pool: read_pool(&pool_path).map_err(|e| CliError::data(pool_path.display(), e))?,
    })
}

pub fn sweep(g: &Global, a: &SweepArgs) -> Result<(), CliError> {
    let mut doc = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::data(p.display(), e))?;
            serde_json::from_str::<serde_json::Value>(&text).map_err(|e| CliError::data(p.display(), e))?
        }
        None => serde_json::json!({}),
    };
    let serde_json::Value::Object(map) = &mut doc else {
        return Err(CliError::Data("sweep config must be a JSON object".into()));
    };
    if map.contains_key("axis") {
        return Err(CliError::Usage("give the axis with --axis, not in the config".into()));
    }
    map.insert("axis".into(), serde_json::to_value(a.axis).expect("axis serializes"));
    if !map.contains_key("values") {
        if a.axis != Axis::Fraction {
            return Err(CliError::Usage(format!("the {:?} axis needs \"values\" in --config", a.axis)));
        }
        map.insert("values".into(), serde_json::json!([1.0, 0.5, 0.2, 0.1, 0.05, 0.03]));
    }
    let cfg: SweepConfig = serde_json::from_value(doc).map_err(|e| CliError::Data(format!("sweep config: {e}")))?;
    let files: Vec<PathBuf> = ["train.conll", "dev.conll", "test.conll", "pool.txt"]
        .iter()
        .map(|f| a.data.join(f))
        .collect();
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let hash = run_hash("sweep", &cfg, &refs)?;
    if !should_run("sweep", &[&a.out], &hash, g.force) {
        return Ok(());
    }
    let bench = load_benchmark(&a.data)?;
    let index = corrner::retriever::build_index(&bench.pool, cfg.experiment.index)?;
    let checkpoint = a.checkpoint.clone().unwrap_or_else(|| a.out.with_extension("runs.jsonl"));
    create_parent(&checkpoint)?;
    let result = run_sweep(&bench, &index, &cfg, Some(&checkpoint))?;
    for p in &result.points {
        let line: Vec<String> = p
            .summary
            .iter()
            .map(|(m, s)| match s.delta_vs_baseline {
                Some(d) => format!("{m} {:.4} ({d:+.4})", s.mean),
                None => format!("{m} {:.4}", s.mean),
            })
            .collect();
        println!("{:?}={} {}", result.axis, p.value, line.join("  "));
    }
    write_json(&a.out, &result, &hash)?;
    stamp(&checkpoint, &hash)
}

// --------------------------------------------------------------- pipeline

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (JSON): gen, index, train, vote, correlator.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gen: GenConfig,
    pub index: IndexConfig,
    pub train: TrainConfig,
    pub vote: VotePolicy,
    pub correlator: CorrelatorConfig,
}

/// Writes `value` to `dir/name` unless the same content is already there.
fn write_sub_config(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("config serializes");
    if fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
        fs::write(&path, text).map_err(internal(&path))?;
    }
    Ok(path)
}

pub fn pipeline(g: &Global, a: &PipelineArgs) -> Result<(), CliError> {
    let cfg: PipelineConfig = read_config(a.config.as_deref())?;
    let out = &a.out;
    let conf = out.join("config");
    fs::create_dir_all(&conf).map_err(internal(&conf))?;
    let gen = write_sub_config(&conf, "gen.json", &cfg.gen)?;
    let index_cfg = write_sub_config(&conf, "index.json", &cfg.index)?;
    let train_cfg = write_sub_config(&conf, "train.json", &cfg.train)?;
    let vote = write_sub_config(&conf, "vote.json", &cfg.vote)?;
    let corr = write_sub_config(&conf, "correlator.json", &cfg.correlator)?;
    // the global seed applies to training only; the data come from gen.seed
    let data_g = Global { seed: None, ..g.clone() };

    let data = out.join("data");
    synth(&data_g, &SynthArgs { config: Some(gen), out: data.clone() })?;
    let index = out.join("index");
    index_build(
        g,
        &IndexBuildArgs {
            pool: data.join("pool.txt"),
            out: index.clone(),
            config: Some(index_cfg),
        },
    )?;
    let base = out.join("model.json");
    train(
        g,
        &TrainArgs {
            train: data.join("train.conll"),
            dev: data.join("dev.conll"),
            config: Some(train_cfg.clone()),
            out: base.clone(),
            correlate: false,
            index: None,
            corr_config: None,
            base: None,
        },
    )?;
    let augmented = out.join("model.correlator.json");
    train(
        g,
        &TrainArgs {
            train: data.join("train.conll"),
            dev: data.join("dev.conll"),
            config: Some(train_cfg),
            out: augmented.clone(),
            correlate: true,
            index: Some(index.clone()),
            corr_config: Some(corr),
            base: Some(base.clone()),
        },
    )?;
    let test = data.join("test.conll");
    let pred = out.join("pred");
    tag(
        g,
        &TagArgs {
            model: base.clone(),
            input: test.clone(),
            out: pred.join("baseline.conll"),
            index: None,
            base: None,
        },
    )?;
    calibrate(
        g,
        &CalibrateArgs {
            model: base.clone(),
            index: index.clone(),
            input: test.clone(),
            out: pred.join("entity-voting.conll"),
            policy: Some(vote),
            k: None,
            match_mode: None,
            trace: Some(pred.join("entity-voting.trace.jsonl")),
        },
    )?;
    tag(
        g,
        &TagArgs {
            model: augmented,
            input: test.clone(),
            out: pred.join("correlator.conll"),
            index: Some(index),
            base: Some(base),
        },
    )?;

    let mut summary = BTreeMap::new();
    for method in ["baseline", "entity-voting", "correlator"] {
        let p = pred.join(format!("{method}.conll"));
        let hash = run_hash("eval", &(), &[&test, &p])?;
        let mut report = evaluate(&test, &p)?;
        report.metadata.config_hash = Some(hash.clone());
        write_json(&out.join("reports").join(format!("{method}.json")), &report, &hash)?;
        println!(
            "{method:<14} micro F1 {:.4}  macro F1 {:.4}",
            report.micro.f1, report.macro_avg.f1
        );
        summary.insert(method, report.micro.f1);
    }
    let hash = config_hash(&(&cfg, g.seed));
    write_json(&out.join("summary.json"), &serde_json::json!({ "micro_f1": summary }), &hash)
}
