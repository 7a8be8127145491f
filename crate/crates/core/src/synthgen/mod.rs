//! Seeded generator for an ambiguous, address-like NER benchmark.
//!
//! A gazetteer of five levels (province, city, district, town, point of
//! interest) is built from two-character syllable names. Some names are
//! deliberately shared between adjacent levels. Labeled sentences render one
//! root-to-leaf path, possibly skipping levels and dropping level suffixes;
//! the unlabeled pool holds alternative renderings of the same locations plus
//! renderings of unrelated paths.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{to_conll_string, CorpusError, EntitySpan, LabeledSentence, Scheme, Sentence};
use crate::provenance::{config_hash, digest_bytes, TOOL_VERSION};

pub const LEVELS: [&str; 5] = ["PROV", "CITY", "DISTRICT", "TOWN", "POI"];

const NAME_CHARS: &str = "安宝北滨博昌长成承崇川春淳丹德东都峨丰凤福阜富甘高古广桂海汉和河鹤红洪华怀淮黄徽吉佳嘉建江金锦晋京泾靖九康兰蓝乐黎丽连辽林临灵龙隆鲁罗洛茂梅蒙绵明南宁平萍浦齐启千黔青清庆琼泉仁荣瑞三沙山汕韶邵盛石寿顺朔松苏绥泰滩唐桃天通同潼万威维潍文武西霞仙湘祥兴秀徐许宣延阳伊宜义永瑜榆玉元云枣湛漳昭肇浙贞镇正芝中舟珠株淄遵";
const ROAD_SUFFIXES: [&str; 3] = ["路", "街", "道"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("inconsistent sizes: {0}")]
    InconsistentSizes(String),
    #[error("pool of {requested} texts cannot hold the {needed} guaranteed correlated renderings")]
    PoolTooSmall { requested: usize, needed: usize },
    #[error("could not render {wanted} distinct {split} sentences")]
    Exhausted { split: &'static str, wanted: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    /// Node count per level, `PROV` first.
    pub sizes: [usize; 5],
    /// Shared names per adjacent admin pair = round(rate × smaller level size).
    pub ambiguity_rate: f64,
    /// Probability that an admin entity is rendered without its suffix.
    pub suffix_drop_rate: f64,
    /// Probability that an admin level is left out of a rendering.
    pub level_skip_rate: f64,
    /// Probability of a road-and-number detail before the point of interest.
    pub detail_rate: f64,
    /// Share of three-character names; the rest have two.
    pub long_name_rate: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Pool size.
    pub n_unlabeled: usize,
    /// Pool renderings per labeled location, one of which is full-suffix.
    pub renderings_per_location: usize,
    /// Share of filler pool texts drawn from random paths rather than
    /// labeled locations.
    pub distractor_rate: f64,
    /// Fail when the pool cannot hold one full-suffix rendering per labeled location.
    pub guarantee_correlated: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 2023,
            sizes: [30, 300, 1500, 4000, 8000],
            ambiguity_rate: 0.25,
            suffix_drop_rate: 0.4,
            level_skip_rate: 0.3,
            detail_rate: 0.5,
            long_name_rate: 0.3,
            n_train: 1500,
            n_dev: 300,
            n_test: 500,
            n_unlabeled: 100_000,
            renderings_per_location: 3,
            distractor_rate: 0.7,
            guarantee_correlated: true,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let rates = [
            ("ambiguity_rate", self.ambiguity_rate),
            ("suffix_drop_rate", self.suffix_drop_rate),
            ("level_skip_rate", self.level_skip_rate),
            ("detail_rate", self.detail_rate),
            ("long_name_rate", self.long_name_rate),
            ("distractor_rate", self.distractor_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::BadConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.sizes.contains(&0) {
            return Err(SynthError::BadConfig("every level size must be at least 1".into()));
        }
        if self.renderings_per_location == 0 {
            return Err(SynthError::BadConfig("renderings_per_location must be at least 1".into()));
        }
        Ok(())
    }

    /// Requested shared-name count for the admin pair (`level`, `level + 1`).
    pub fn shared_count(&self, level: usize) -> usize {
        (self.ambiguity_rate * self.sizes[level].min(self.sizes[level + 1]) as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub level: usize,
    pub name: String,
    pub suffix: String,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedName {
    /// The upper of the two adjacent levels.
    pub level: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub levels: Vec<String>,
    pub nodes: Vec<Node>,
    /// Node ids per level.
    pub by_level: Vec<Vec<usize>>,
    pub shared: Vec<SharedName>,
}

impl Gazetteer {
    pub fn names(&self, level: usize) -> BTreeSet<&str> {
        self.by_level[level].iter().map(|&i| self.nodes[i].name.as_str()).collect()
    }

    /// Node ids from the root down to `leaf`.
    pub fn path(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        while let Some(p) = self.nodes[*path.last().expect("non-empty")].parent {
            path.push(p);
        }
        path.reverse();
        path
    }

    pub fn is_shared(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        self.shared
            .iter()
            .any(|s| s.name == n.name && (s.level == n.level || s.level + 1 == n.level))
    }
}

fn level_suffixes(level: usize) -> &'static [&'static str] {
    match level {
        0 => &["省"],
        1 => &["市"],
        2 => &["区", "县"],
        3 => &["镇", "乡"],
        _ => &["大厦", "小区", "花园", "广场", "中心"],
    }
}

pub fn generate_gazetteer(config: &GenConfig) -> Result<Gazetteer, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes = config.sizes;
    // shared names only between admin levels
    let shared_counts: Vec<usize> = (0..3).map(|l| config.shared_count(l)).collect();
    for l in 0..4 {
        let up = if l > 0 { shared_counts[l - 1] } else { 0 };
        let down = if l < 3 { shared_counts[l] } else { 0 };
        if up + down > sizes[l] {
            return Err(SynthError::InconsistentSizes(format!(
                "level {} has {} names but {} are requested to be shared",
                LEVELS[l],
                sizes[l],
                up + down
            )));
        }
    }
    let distinct = sizes.iter().sum::<usize>() - shared_counts.iter().sum::<usize>();
    let chars: Vec<char> = NAME_CHARS.chars().collect();
    let mut seen = HashSet::new();
    let mut fresh = Vec::with_capacity(distinct);
    let mut attempts = 0;
    while fresh.len() < distinct {
        attempts += 1;
        if attempts > 20 * distinct + 1000 {
            return Err(SynthError::InconsistentSizes(format!(
                "{distinct} distinct names exceed the syllable inventory"
            )));
        }
        let len = if rng.gen_bool(config.long_name_rate) { 3 } else { 2 };
        let name: String = (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
        if seen.insert(name.clone()) {
            fresh.push(name);
        }
    }
    let mut fresh = fresh.into_iter();

    let mut inventories: Vec<Vec<String>> = vec![Vec::new(); 5];
    let mut shared = Vec::new();
    for (l, &count) in shared_counts.iter().enumerate() {
        for _ in 0..count {
            let name = fresh.next().expect("counted");
            inventories[l].push(name.clone());
            inventories[l + 1].push(name.clone());
            shared.push(SharedName { level: l, name });
        }
    }
    for (l, inv) in inventories.iter_mut().enumerate() {
        while inv.len() < sizes[l] {
            inv.push(fresh.next().expect("counted"));
        }
        inv.shuffle(&mut rng);
    }

    let mut nodes = Vec::new();
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); 5];
    for (l, inv) in inventories.into_iter().enumerate() {
        let parents = if l == 0 { Vec::new() } else { by_level[l - 1].clone() };
        for (i, name) in inv.into_iter().enumerate() {
            let parent = if l == 0 {
                None
            } else if i < parents.len() {
                // every parent gets at least one child when sizes allow
                Some(parents[i])
            } else {
                Some(parents[rng.gen_range(0..parents.len())])
            };
            let options = level_suffixes(l);
            let suffix = options[rng.gen_range(0..options.len())].to_string();
            by_level[l].push(nodes.len());
            nodes.push(Node {
                level: l,
                name,
                suffix,
                parent,
            });
        }
    }
    Ok(Gazetteer {
        levels: LEVELS.iter().map(|s| s.to_string()).collect(),
        nodes,
        by_level,
        shared,
    })
}

#[derive(Debug, Clone, Copy)]
struct RenderOptions {
    skip_rate: f64,
    drop_rate: f64,
    detail_rate: f64,
    /// Chance of moving the detail after the point of interest.
    reorder_rate: f64,
}

/// Renders a path to tokens and gold spans.
fn render(gaz: &Gazetteer, leaf: usize, opts: RenderOptions, rng: &mut ChaCha8Rng) -> (String, Vec<(usize, usize, usize)>) {
    let path = gaz.path(leaf);
    let mut text = String::new();
    let mut len = 0;
    let mut spans = Vec::new();
    let mut push = |text: &mut String, s: &str, level: Option<usize>, spans: &mut Vec<(usize, usize, usize)>| {
        let n = s.chars().count();
        if let Some(l) = level {
            spans.push((len, len + n, l));
        }
        text.push_str(s);
        len += n;
    };
    let admin: Vec<usize> = path.iter().copied().filter(|&i| gaz.nodes[i].level < 4).collect();
    let mut kept: Vec<usize> = admin.iter().copied().filter(|_| !rng.gen_bool(opts.skip_rate)).collect();
    if kept.is_empty() && !admin.is_empty() {
        kept.push(admin[rng.gen_range(0..admin.len())]);
    }
    for &i in &kept {
        let node = &gaz.nodes[i];
        let surface = if rng.gen_bool(opts.drop_rate) {
            node.name.clone()
        } else {
            format!("{}{}", node.name, node.suffix)
        };
        push(&mut text, &surface, Some(node.level), &mut spans);
    }
    let detail = if rng.gen_bool(opts.detail_rate) {
        let chars: Vec<char> = NAME_CHARS.chars().collect();
        let road: String = (0..2).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
        Some(format!(
            "{road}{}{}号",
            ROAD_SUFFIXES[rng.gen_range(0..ROAD_SUFFIXES.len())],
            rng.gen_range(1..400)
        ))
    } else {
        None
    };
    let reorder = rng.gen_bool(opts.reorder_rate);
    if let (Some(d), false) = (&detail, reorder) {
        push(&mut text, d, None, &mut spans);
    }
    let poi = &gaz.nodes[*path.last().expect("non-empty")];
    push(&mut text, &format!("{}{}", poi.name, poi.suffix), Some(4), &mut spans);
    if let (Some(d), true) = (&detail, reorder) {
        push(&mut text, d, None, &mut spans);
    }
    (text, spans)
}

fn to_labeled(id: String, text: &str, spans: &[(usize, usize, usize)]) -> Result<LabeledSentence, CorpusError> {
    let sentence = Sentence::from_text(id, text);
    let spans: Vec<EntitySpan> = spans
        .iter()
        .map(|&(s, e, l)| EntitySpan::new(s, e, LEVELS[l], &sentence.tokens))
        .collect();
    LabeledSentence::from_spans(sentence, &spans, Scheme::Bioes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub pool: Vec<String>,
    /// Leaf node rendered by each labeled sentence, per split.
    pub locations: [Vec<usize>; 3],
}

pub fn generate_corpus(gaz: &Gazetteer, config: &GenConfig) -> Result<Corpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let leaves = &gaz.by_level[4];
    let labeled_opts = RenderOptions {
        skip_rate: config.level_skip_rate,
        drop_rate: config.suffix_drop_rate,
        detail_rate: config.detail_rate,
        reorder_rate: 0.0,
    };
    let mut used: HashSet<String> = HashSet::new();
    let mut splits: [Vec<LabeledSentence>; 3] = Default::default();
    let mut locations: [Vec<usize>; 3] = Default::default();
    let wanted = [config.n_train, config.n_dev, config.n_test];
    for (s, name) in ["train", "dev", "test"].into_iter().enumerate() {
        let mut attempts = 0;
        while splits[s].len() < wanted[s] {
            attempts += 1;
            if attempts > 50 * wanted[s] + 1000 {
                return Err(SynthError::Exhausted {
                    split: name,
                    wanted: wanted[s],
                });
            }
            let leaf = leaves[rng.gen_range(0..leaves.len())];
            let (text, spans) = render(gaz, leaf, labeled_opts, &mut rng);
            if !used.insert(text.clone()) {
                continue;
            }
            let id = format!("{name}-{:06}", splits[s].len());
            splits[s].push(to_labeled(id, &text, &spans)?);
            locations[s].push(leaf);
        }
    }

    let mut labeled_leaves = Vec::new();
    let mut seen = HashSet::new();
    for &leaf in locations.iter().flatten() {
        if seen.insert(leaf) {
            labeled_leaves.push(leaf);
        }
    }
    let full = RenderOptions {
        skip_rate: 0.0,
        drop_rate: 0.0,
        detail_rate: config.detail_rate,
        reorder_rate: 0.0,
    };
    let varied = RenderOptions {
        reorder_rate: 0.3,
        ..labeled_opts
    };
    let needed = labeled_leaves.len();
    if config.guarantee_correlated && config.n_unlabeled < needed {
        return Err(SynthError::PoolTooSmall {
            requested: config.n_unlabeled,
            needed,
        });
    }
    let mut pool = Vec::with_capacity(config.n_unlabeled);
    'guaranteed: for r in 0..config.renderings_per_location {
        for &leaf in &labeled_leaves {
            if pool.len() >= config.n_unlabeled {
                break 'guaranteed;
            }
            let opts = if r == 0 { full } else { varied };
            pool.push(render(gaz, leaf, opts, &mut rng).0);
        }
    }
    while pool.len() < config.n_unlabeled {
        let leaf = if labeled_leaves.is_empty() || rng.gen_bool(config.distractor_rate) {
            leaves[rng.gen_range(0..leaves.len())]
        } else {
            labeled_leaves[rng.gen_range(0..labeled_leaves.len())]
        };
        pool.push(render(gaz, leaf, varied, &mut rng).0);
    }
    pool.shuffle(&mut rng);
    let [train, dev, test] = splits;
    Ok(Corpus {
        train,
        dev,
        test,
        pool,
        locations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: GenConfig,
    pub counts: BTreeMap<String, usize>,
    /// SHA-256 of each written file.
    pub files: BTreeMap<String, String>,
}

/// Writes `train/dev/test.conll`, `pool.txt`, `gazetteer.json` and `manifest.json`.
pub fn write_corpus(dir: &Path, gaz: &Gazetteer, corpus: &Corpus, config: &GenConfig) -> Result<Manifest, SynthError> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    let mut write = |name: &str, bytes: Vec<u8>| -> Result<(), SynthError> {
        fs::write(dir.join(name), &bytes)?;
        files.insert(name.to_string(), digest_bytes(&bytes));
        Ok(())
    };
    write("train.conll", to_conll_string(&corpus.train).into_bytes())?;
    write("dev.conll", to_conll_string(&corpus.dev).into_bytes())?;
    write("test.conll", to_conll_string(&corpus.test).into_bytes())?;
    let mut pool = corpus.pool.join("\n");
    pool.push('\n');
    write("pool.txt", pool.into_bytes())?;
    write("gazetteer.json", serde_json::to_vec_pretty(gaz)?)?;
    let counts = BTreeMap::from([
        ("train".to_string(), corpus.train.len()),
        ("dev".to_string(), corpus.dev.len()),
        ("test".to_string(), corpus.test.len()),
        ("pool".to_string(), corpus.pool.len()),
    ]);
    let manifest = Manifest {
        tool: "corrner".into(),
        tool_version: TOOL_VERSION.into(),
        config_hash: config_hash(config),
        config: config.clone(),
        counts,
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
