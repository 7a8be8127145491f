use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::EntitySpan;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Zero denominators give 0 rather than NaN.
    pub fn from_counts(correct: usize, pred: usize, gold: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, pred);
        let recall = ratio(correct, gold);
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeStats {
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
    #[serde(flatten)]
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    /// Seconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

/// Entity-level exact-match scores.
///
/// Per-type rows cover every type seen in gold or predictions; the macro
/// average only covers types present in gold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, TypeStats>,
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    #[serde(default)]
    pub metadata: RunMetadata,
}

/// Scores predictions against gold, sentence by sentence.
pub fn entity_prf(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut per_type: BTreeMap<String, TypeStats> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let gold_keys: HashSet<(usize, usize, &str)> = g.iter().map(EntitySpan::key).collect();
        for s in g {
            per_type.entry(s.label.clone()).or_default().gold += 1;
        }
        let mut seen = HashSet::new();
        for s in p {
            if !seen.insert(s.key()) {
                continue;
            }
            let row = per_type.entry(s.label.clone()).or_default();
            row.pred += 1;
            if gold_keys.contains(&s.key()) {
                row.correct += 1;
            }
        }
    }
    let mut report = EvalReport::default();
    let mut macro_rows = Vec::new();
    for row in per_type.values_mut() {
        row.prf = Prf::from_counts(row.correct, row.pred, row.gold);
        report.gold += row.gold;
        report.pred += row.pred;
        report.correct += row.correct;
        if row.gold > 0 {
            macro_rows.push(row.prf);
        }
    }
    report.micro = Prf::from_counts(report.correct, report.pred, report.gold);
    if !macro_rows.is_empty() {
        let k = macro_rows.len() as f64;
        report.macro_avg = Prf {
            precision: macro_rows.iter().map(|r| r.precision).sum::<f64>() / k,
            recall: macro_rows.iter().map(|r| r.recall).sum::<f64>() / k,
            f1: macro_rows.iter().map(|r| r.f1).sum::<f64>() / k,
        };
    }
    report.per_type = per_type;
    Ok(report)
}
