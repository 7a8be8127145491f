use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{default_templates, with_correlation, FeatureTemplate};
use super::model::{CrfModel, Encoded};
use super::TaggerError;
use crate::correlator::{CorrelationFeatures, Correlator, CorrelatorConfig};
use crate::corpus::{detect_scheme, LabelSet, LabeledSentence, Sentence};
use crate::evaluator::entity_prf;
use crate::provenance::{config_hash, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Epochs without a dev micro-F1 improvement before stopping; 0 disables.
    pub patience: usize,
    pub templates: Vec<FeatureTemplate>,
    pub constrained: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_set: Option<LabelSet>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            l2: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            patience: 5,
            templates: default_templates(),
            constrained: true,
            label_set: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        let bad = |m: &str| Err(TaggerError::BadConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        for t in &self.templates {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sentence NLL over the epoch's batches; absent for epoch 0.
    pub train_loss: Option<f64>,
    /// Mean per-sentence dev NLL, without the L2 term.
    pub dev_loss: Option<f64>,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: CrfModel,
    pub log: TrainLog,
}

/// Trains a CRF; with a correlator, features are computed for train and dev
/// sentences first and the correlation templates are added.
pub fn train(
    train: &[LabeledSentence],
    dev: &[LabeledSentence],
    config: &TrainConfig,
    correlator: Option<&Correlator>,
) -> Result<Trained, TaggerError> {
    match correlator {
        None => train_with_features(train, dev, config, None),
        Some(c) => {
            let sents = |d: &[LabeledSentence]| d.iter().map(|s| s.sentence.clone()).collect::<Vec<Sentence>>();
            let train_f = c.features_batch(&sents(train));
            let dev_f = c.features_batch(&sents(dev));
            train_with_features(train, dev, config, Some((&c.config, &train_f, &dev_f)))
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn update(&mut self, w: &mut [f64], g: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..w.len() {
            let gi = g[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * gi;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            w[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

pub type FeatureSets<'a> = (&'a CorrelatorConfig, &'a [CorrelationFeatures], &'a [CorrelationFeatures]);

/// Training over precomputed correlation features `(config, train, dev)`.
pub fn train_with_features(
    train: &[LabeledSentence],
    dev: &[LabeledSentence],
    config: &TrainConfig,
    correlation: Option<FeatureSets>,
) -> Result<Trained, TaggerError> {
    config.validate()?;
    if let Some((_, tf, df)) = correlation {
        assert!(tf.len() == train.len() && df.len() == dev.len(), "one feature set per sentence");
    }
    let train: Vec<(usize, &LabeledSentence)> =
        train.iter().enumerate().filter(|(_, s)| !s.sentence.is_empty()).collect();
    if train.is_empty() {
        return Err(TaggerError::EmptyTrainSet);
    }
    let label_set = match &config.label_set {
        Some(ls) => ls.clone(),
        None => {
            let all = train.iter().map(|t| t.1).chain(dev);
            LabelSet::infer(all.clone(), detect_scheme(all))?
        }
    };
    let templates = match correlation {
        Some((cc, _, _)) => with_correlation(config.templates.clone(), &cc.channels),
        None => config.templates.clone(),
    };
    let mut model = CrfModel::new(label_set, templates, config.constrained)?;
    model.train_config = Some(config.clone());
    model.correlator = correlation.map(|c| c.0.clone());
    model.provenance = Some(Provenance::new(config_hash(&(config, &model.correlator))));

    let train_corr = |i: usize| correlation.map(|c| &c.1[i]);
    let dev_corr = |i: usize| correlation.map(|c| &c.2[i]);
    model.build_vocab(train.iter().map(|&(i, s)| (&s.sentence, train_corr(i))));

    let encoded: Vec<Encoded> = train
        .par_iter()
        .map(|&(i, s)| model.encode(s, train_corr(i)))
        .collect::<Result<_, _>>()?;
    let dev_kept: Vec<usize> = (0..dev.len()).filter(|&i| !dev[i].sentence.is_empty()).collect();
    let dev_encoded: Vec<Encoded> = dev_kept
        .par_iter()
        .map(|&i| model.encode(&dev[i], dev_corr(i)))
        .collect::<Result<_, _>>()?;
    let dev_gold = dev_kept
        .iter()
        .map(|&i| dev[i].spans(model.label_set().scheme(), crate::corpus::DecodeMode::Lenient))
        .collect::<Result<Vec<_>, _>>()?;

    let evaluate_dev = |model: &CrfModel| -> (Option<f64>, Option<f64>) {
        if dev_encoded.is_empty() {
            return (None, None);
        }
        let loss = model.nll(&dev_encoded, 0.0) / dev_encoded.len() as f64;
        let pred: Vec<_> = dev_kept
            .par_iter()
            .map(|&i| model.predict(&dev[i].sentence, dev_corr(i)).spans)
            .collect();
        let f1 = entity_prf(&dev_gold, &pred).expect("same length").micro.f1;
        (Some(loss), Some(f1))
    };

    let mut log = TrainLog::default();
    let (dev_loss, dev_f1) = evaluate_dev(&model);
    log.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: None,
        dev_loss,
        dev_f1,
    });
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    let n = encoded.len() as f64;
    let mut adam = Adam {
        m: vec![0.0; model.weights().len()],
        v: vec![0.0; model.weights().len()],
        step: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let l2 = config.l2 * chunk.len() as f64 / n;
            let (loss, grad) = model.nll_and_gradient(chunk.iter().map(|&i| &encoded[i]), l2);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TaggerError::Diverged {
                    epoch,
                    batch: b,
                    loss,
                    max_weight: model.weights().iter().fold(0.0, |a, w| a.max(w.abs())),
                });
            }
            epoch_loss += loss;
            adam.update(model.weights_mut(), &grad, config);
        }
        let (dev_loss, dev_f1) = evaluate_dev(&model);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: Some(epoch_loss / n),
            dev_loss,
            dev_f1,
        });
        log::debug!(
            "epoch {epoch}: train loss {:.4}, dev loss {:?}, dev F1 {:?}",
            epoch_loss / n,
            dev_loss,
            dev_f1
        );
        match dev_f1 {
            Some(f1) => {
                if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                    best = Some((f1, model.weights().to_vec()));
                    log.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if config.patience > 0 && since_best >= config.patience {
                        log.stopped_early = true;
                        break;
                    }
                }
            }
            None => log.best_epoch = epoch,
        }
    }
    if let Some((_, w)) = best {
        model.weights_mut().copy_from_slice(&w);
    }
    Ok(Trained { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DecodeMode, EntitySpan, Scheme};
    use crate::tagger::crf::{self, Potentials};
    use proptest::prelude::*;

    fn labeled(text: &str, spans: &[(usize, usize, &str)]) -> LabeledSentence {
        let s = Sentence::from_text(text, text);
        let spans: Vec<EntitySpan> = spans.iter().map(|&(a, b, t)| EntitySpan::new(a, b, t, &s.tokens)).collect();
        LabeledSentence::from_spans(s, &spans, Scheme::Bioes).unwrap()
    }

    fn separable_set() -> Vec<LabeledSentence> {
        vec![
            labeled("吉林省长春市", &[(0, 3, "PROV"), (3, 6, "CITY")]),
            labeled("辽宁省沈阳市", &[(0, 3, "PROV"), (3, 6, "CITY")]),
            labeled("长春市朝阳区", &[(0, 3, "CITY")]),
            labeled("沈阳市和平区", &[(0, 3, "CITY")]),
            labeled("吉林省", &[(0, 3, "PROV")]),
            labeled("辽宁省大连市", &[(0, 3, "PROV"), (3, 6, "CITY")]),
            labeled("大连市", &[(0, 3, "CITY")]),
            labeled("河北省", &[(0, 3, "PROV")]),
            labeled("河北省石家庄市", &[(0, 3, "PROV"), (3, 7, "CITY")]),
            labeled("石家庄市东路", &[(0, 4, "CITY")]),
        ]
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            learning_rate: 0.1,
            l2: 0.0,
            patience: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = separable_set();
        let trained = train(&data, &data, &quick(50), None).unwrap();
        let gold: Vec<_> = data.iter().map(|s| s.spans(Scheme::Bioes, DecodeMode::Strict).unwrap()).collect();
        let pred: Vec<_> = data.iter().map(|s| trained.model.predict(&s.sentence, None).spans).collect();
        assert_eq!(entity_prf(&gold, &pred).unwrap().micro.f1, 1.0);
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let data = separable_set();
        let cfg = TrainConfig { seed: 7, ..quick(5) };
        let a = train(&data, &data, &cfg, None).unwrap();
        let b = train(&data, &data, &cfg, None).unwrap();
        assert_eq!(a.model.to_json(), b.model.to_json());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn dev_loss_improves_from_zero_init() {
        let data = separable_set();
        let cfg = TrainConfig { epochs: 3, patience: 0, ..TrainConfig::default() };
        let log = train(&data, &data[..4], &cfg, None).unwrap().log;
        let l0 = log.epochs[0].dev_loss.unwrap();
        let l1 = log.epochs[1].dev_loss.unwrap();
        assert!(l1 < l0, "{l1} !< {l0}");
    }

    #[test]
    fn divergence_is_reported() {
        let data = separable_set();
        let cfg = TrainConfig { learning_rate: f64::MAX, ..quick(3) };
        assert!(matches!(train(&data, &[], &cfg, None), Err(TaggerError::Diverged { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(train(&[], &[], &TrainConfig::default(), None).is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(train(&separable_set(), &[], &bad, None), Err(TaggerError::BadConfig(_))));
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 4}"#).unwrap();
        assert_eq!(parsed.batch_size, 32);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 4}"#).is_err());
    }

    // Oracles: brute-force enumeration over all label paths.

    fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| (0..l).map(move |y| [p.clone(), vec![y]].concat()))
                .collect();
        }
        out
    }

    fn oracle_log_z(p: &Potentials) -> f64 {
        let scores: Vec<f64> = all_paths(p.len, p.labels).iter().map(|path| p.path_score(path)).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
    }

    // paths are enumerated in lexicographic order, so the first maximum is the
    // lexicographically smallest argmax
    fn oracle_viterbi(p: &Potentials) -> (Vec<usize>, f64) {
        let mut best = (vec![], f64::NEG_INFINITY);
        for path in all_paths(p.len, p.labels) {
            let s = p.path_score(&path);
            if s > best.1 {
                best = (path, s);
            }
        }
        best
    }

    fn potentials(n: usize, l: usize, vals: &[f64], quantize: bool) -> Potentials {
        let mut it = vals.iter().cycle().map(|v| if quantize { v.round() } else { *v });
        let mut p = Potentials::zeros(n, l);
        for x in p
            .emission
            .iter_mut()
            .chain(p.transition.iter_mut())
            .chain(p.begin.iter_mut())
            .chain(p.end.iter_mut())
        {
            *x = it.next().unwrap();
        }
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn log_partition_matches_enumeration(
            n in 1usize..=6, l in 1usize..=4,
            vals in prop::collection::vec(-3.0f64..3.0, 64),
        ) {
            let p = potentials(n, l, &vals, false);
            prop_assert!((crf::log_partition(&p) - oracle_log_z(&p)).abs() < 1e-8);
        }

        #[test]
        fn viterbi_matches_enumeration(
            n in 1usize..=6, l in 1usize..=4,
            vals in prop::collection::vec(-3.0f64..3.0, 64),
            quantize in any::<bool>(),
        ) {
            // quantized potentials produce many exact ties
            let p = potentials(n, l, &vals, quantize);
            let (path, score) = crf::viterbi(&p);
            let (opath, oscore) = oracle_viterbi(&p);
            prop_assert!((score - oscore).abs() < 1e-9);
            prop_assert!((p.path_score(&path) - oscore).abs() < 1e-9);
            if quantize {
                prop_assert_eq!(path, opath);
            }
        }

        #[test]
        fn emission_shift_invariance(
            n in 1usize..=6, l in 1usize..=4,
            vals in prop::collection::vec(-3.0f64..3.0, 64),
            pos in 0usize..6, c in -5.0f64..5.0,
        ) {
            let p = potentials(n, l, &vals, false);
            let mut q = p.clone();
            let t = pos % n;
            for y in 0..l {
                q.emission[t * l + y] += c;
            }
            prop_assert!((crf::log_partition(&q) - crf::log_partition(&p) - c).abs() < 1e-9);
            prop_assert_eq!(crf::viterbi(&q).0, crf::viterbi(&p).0);
        }
    }

    fn random_model(seed: u64, types: usize, scheme: Scheme, constrained: bool) -> (CrfModel, Vec<Encoded>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["A", "B"];
        let ls = LabelSet::new(names[..types].iter().copied(), scheme).unwrap();
        let texts = ["甲乙丙", "乙丙丁戊", "丙甲"];
        let data: Vec<LabeledSentence> = texts
            .iter()
            .map(|t| {
                let s = Sentence::from_text(*t, t);
                let mut spans = Vec::new();
                let mut i = 0;
                while i < s.len() {
                    let len = rng.gen_range(1..=2).min(s.len() - i);
                    if rng.gen_bool(0.5) {
                        spans.push(EntitySpan::new(i, i + len, names[rng.gen_range(0..types)], &s.tokens));
                    }
                    i += len;
                }
                LabeledSentence::from_spans(s, &spans, scheme).unwrap()
            })
            .collect();
        let mut model = CrfModel::new(ls, default_templates()[..4].to_vec(), constrained).unwrap();
        model.build_vocab(data.iter().map(|s| (&s.sentence, None)));
        for w in model.weights_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        let enc = data.iter().map(|s| model.encode(s, None).unwrap()).collect();
        (model, enc)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for seed in 0..50u64 {
            let scheme = if seed % 2 == 0 { Scheme::Bio } else { Scheme::Bioes };
            let (model, batch) = random_model(seed, 1 + (seed as usize % 2), scheme, seed % 3 != 0);
            let l2 = 0.1 * (seed % 4) as f64;
            let (_, grad) = model.nll_and_gradient(&batch, l2);
            for i in 0..model.weights().len() {
                let mut plus = model.clone();
                plus.weights_mut()[i] += eps;
                let mut minus = model.clone();
                minus.weights_mut()[i] -= eps;
                let numeric = (plus.nll(&batch, l2) - minus.nll(&batch, l2)) / (2.0 * eps);
                let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn single_label_loss_is_only_the_penalty() {
        let ls = LabelSet::new(Vec::<String>::new(), Scheme::Bio).unwrap();
        let data = vec![LabeledSentence::new(Sentence::from_text("x", "甲乙"), vec!["O".into(), "O".into()]).unwrap()];
        let mut model = CrfModel::new(ls, default_templates(), true).unwrap();
        model.build_vocab(data.iter().map(|s| (&s.sentence, None)));
        for (i, w) in model.weights_mut().iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin();
        }
        let enc = model.encode(&data[0], None).unwrap();
        let sq: f64 = model.weights().iter().map(|w| w * w).sum();
        let (loss, grad) = model.nll_and_gradient([&enc], 0.0);
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
        let p1 = model.nll([&enc], 0.5);
        let p2 = model.nll([&enc], 1.0);
        assert!((p1 - 0.25 * sq).abs() < 1e-9);
        assert!((p2 - 2.0 * p1).abs() < 1e-9);
    }

    #[test]
    fn constrained_decoding_is_strictly_decodable() {
        use rand::Rng;
        let ls = LabelSet::new(["A", "B"], Scheme::Bioes).unwrap();
        let tokens: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=6);
            let mut p = Potentials::zeros(n, ls.len());
            for x in p.emission.iter_mut().chain(&mut p.transition).chain(&mut p.begin).chain(&mut p.end) {
                *x = rng.gen_range(-5.0..5.0);
            }
            let model = CrfModel::new(ls.clone(), vec![], true).unwrap();
            let masked = {
                let mut m = model.potentials(&vec![vec![]; n], true);
                for (a, b) in m.emission.iter_mut().zip(&p.emission) {
                    *a += b;
                }
                for (a, b) in m.transition.iter_mut().zip(&p.transition) {
                    *a += b;
                }
                for (a, b) in m.begin.iter_mut().zip(&p.begin) {
                    *a += b;
                }
                for (a, b) in m.end.iter_mut().zip(&p.end) {
                    *a += b;
                }
                m
            };
            let (path, _) = crf::viterbi(&masked);
            let tags: Vec<&str> = path.iter().map(|&y| ls.tag_name(y)).collect();
            assert!(crate::corpus::decode_spans(&tokens[..n], &tags, Scheme::Bioes, DecodeMode::Strict).is_ok(), "{tags:?}");
        }
    }
}
