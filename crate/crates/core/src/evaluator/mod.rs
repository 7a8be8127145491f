//! Entity-level scoring, significance testing and experiment sweeps.

pub mod experiment;
pub mod metrics;
pub mod stats;

use thiserror::Error;

pub use metrics::{entity_prf, EvalReport, Prf, RunMetadata, TypeStats};
pub use stats::{mean, paired_ttest, std_dev, student_t_two_tailed, TTest};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("a paired t-test needs at least two pairs, got {0}")]
    TooFewPairs(usize),
}
