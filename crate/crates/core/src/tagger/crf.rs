//! Linear-chain CRF dynamic programs over dense log-potentials.

/// Stand-in for −∞ in log space. Forbidden transitions carry this score.
pub const NEG_INF: f64 = -1e30;

/// Scores of one sentence: `emission[t * labels + y]`, `transition[from * labels + to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub len: usize,
    pub labels: usize,
    pub emission: Vec<f64>,
    pub transition: Vec<f64>,
    pub begin: Vec<f64>,
    pub end: Vec<f64>,
}

impl Potentials {
    pub fn zeros(len: usize, labels: usize) -> Potentials {
        Potentials {
            len,
            labels,
            emission: vec![0.0; len * labels],
            transition: vec![0.0; labels * labels],
            begin: vec![0.0; labels],
            end: vec![0.0; labels],
        }
    }

    #[inline]
    pub fn em(&self, t: usize, y: usize) -> f64 {
        self.emission[t * self.labels + y]
    }

    #[inline]
    pub fn tr(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.labels + to]
    }

    /// Unnormalized log score of a full path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        debug_assert_eq!(path.len(), self.len);
        let mut s = self.begin[path[0]] + self.em(0, path[0]);
        for t in 1..self.len {
            s += self.tr(path[t - 1], path[t]) + self.em(t, path[t]);
        }
        s + self.end[path[self.len - 1]]
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward scores `alpha[t * L + y]`.
fn forward(p: &Potentials) -> Vec<f64> {
    let l = p.labels;
    let mut alpha = vec![0.0; p.len * l];
    for y in 0..l {
        alpha[y] = p.begin[y] + p.em(0, y);
    }
    for t in 1..p.len {
        let (prev, cur) = alpha.split_at_mut(t * l);
        let prev = &prev[(t - 1) * l..];
        for y in 0..l {
            cur[y] = log_sum_exp((0..l).map(|from| prev[from] + p.tr(from, y))) + p.em(t, y);
        }
    }
    alpha
}

/// Backward scores `beta[t * L + y]`, excluding the emission at `t`.
fn backward(p: &Potentials) -> Vec<f64> {
    let l = p.labels;
    let n = p.len;
    let mut beta = vec![0.0; n * l];
    beta[(n - 1) * l..].copy_from_slice(&p.end);
    for t in (0..n - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * l);
        let next = &next[..l];
        for y in 0..l {
            cur[t * l + y] = log_sum_exp((0..l).map(|to| p.tr(y, to) + p.em(t + 1, to) + next[to]));
        }
    }
    beta
}

/// log Z: log-sum-exp over all `L^n` paths.
pub fn log_partition(p: &Potentials) -> f64 {
    assert!(p.len > 0, "log partition of an empty sentence");
    let alpha = forward(p);
    let last = &alpha[(p.len - 1) * p.labels..];
    log_sum_exp(last.iter().zip(&p.end).map(|(a, e)| a + e))
}

/// Posterior marginals from forward-backward.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// `node[t * L + y] = P(y_t = y)`
    pub node: Vec<f64>,
    /// `edge[t * L * L + from * L + to] = P(y_t = from, y_{t+1} = to)`, `t < n - 1`
    pub edge: Vec<f64>,
}

pub fn marginals(p: &Potentials) -> Marginals {
    assert!(p.len > 0, "marginals of an empty sentence");
    let l = p.labels;
    let n = p.len;
    let alpha = forward(p);
    let beta = backward(p);
    let last = &alpha[(n - 1) * l..];
    let log_z = log_sum_exp(last.iter().zip(&p.end).map(|(a, e)| a + e));
    let node = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut edge = vec![0.0; n.saturating_sub(1) * l * l];
    for t in 0..n.saturating_sub(1) {
        for from in 0..l {
            let a = alpha[t * l + from];
            for to in 0..l {
                let s = a + p.tr(from, to) + p.em(t + 1, to) + beta[(t + 1) * l + to] - log_z;
                edge[t * l * l + from * l + to] = s.exp();
            }
        }
    }
    Marginals { log_z, node, edge }
}

/// Highest-scoring path and its score.
///
/// Among equal-scoring paths the lexicographically smallest (by label index)
/// wins: max-suffix scores are computed right to left, then the path is read
/// left to right taking the lowest label index that attains the maximum.
pub fn viterbi(p: &Potentials) -> (Vec<usize>, f64) {
    assert!(p.len > 0, "viterbi on an empty sentence");
    let l = p.labels;
    let n = p.len;
    let mut suffix = vec![0.0; n * l];
    for y in 0..l {
        suffix[(n - 1) * l + y] = p.em(n - 1, y) + p.end[y];
    }
    for t in (0..n - 1).rev() {
        for y in 0..l {
            let best = (0..l)
                .map(|to| p.tr(y, to) + suffix[(t + 1) * l + to])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[t * l + y] = p.em(t, y) + best;
        }
    }
    let first_max = |scores: &mut dyn Iterator<Item = f64>| {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, s) in scores.enumerate() {
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    };
    let (y0, score) = first_max(&mut (0..l).map(|y| p.begin[y] + suffix[y]));
    let mut path = Vec::with_capacity(n);
    path.push(y0);
    for t in 1..n {
        let prev = path[t - 1];
        let (y, _) = first_max(&mut (0..l).map(|to| p.tr(prev, to) + suffix[t * l + to]));
        path.push(y);
    }
    (path, score)
}
