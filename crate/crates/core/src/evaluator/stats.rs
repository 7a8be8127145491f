use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_diff: f64,
    /// NaN-free: ±∞ when the differences have zero variance but non-zero mean.
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Two-tailed paired t-test on `a − b`.
///
/// All-zero differences give p = 1; constant non-zero differences give p = 0.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            gold: a.len(),
            pred: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { mean_diff: 0.0, t: 0.0, df, p_value: 1.0 }
        } else {
            TTest {
                mean_diff: mean,
                t: f64::INFINITY.copysign(mean),
                df,
                p_value: 0.0,
            }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest {
        mean_diff: mean,
        t,
        df,
        p_value: student_t_two_tailed(t, df as f64),
    })
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom,
/// via the regularized incomplete beta function.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
