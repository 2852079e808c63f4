//! Small statistics toolkit: (self-normalized) weighted means, effective
//! sample size, quantiles, least-squares lines and proportion z-scores.

use serde::{Deserialize, Serialize};

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// `(mean − target)/se`, see [`z_score`].
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.se)
    }
}

/// `diff/se`. Differences at roundoff level (≤ 1e-12) count as exact
/// agreement even when `se` is itself roundoff; a real difference with zero
/// error gives ±∞.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if diff.abs() <= 1e-12 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Sample mean with standard error `s/√n`.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Estimate { mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate { mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { mean, se: (var / n).sqrt() }
}

/// Self-normalized importance-weighted mean. The standard error is the
/// delta-method estimate `√(Σ w_i²(x_i − μ)²)/Σ w_i`.
pub fn weighted_mean_se(xs: &[f64], weights: &[f64]) -> Estimate {
    let sw: f64 = weights.iter().sum();
    if !(sw > 0.0) {
        return Estimate { mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / sw;
    let s2 = xs
        .iter()
        .zip(weights)
        .map(|(x, w)| (w * (x - mean)).powi(2))
        .sum::<f64>();
    Estimate { mean, se: s2.sqrt() / sw }
}

/// Kish effective sample size `(Σw)²/Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Converts log-weights to weights scaled so the largest is 1.
pub fn weights_from_logs(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; log_weights.len()];
    }
    log_weights.iter().map(|l| (l - max).exp()).collect()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Smallest value whose cumulative normalized weight reaches `q`.
pub fn weighted_quantile(xs: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || !(total > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (x, w) in &pairs {
        acc += w / total;
        if acc >= q {
            return *x;
        }
    }
    pairs.last().unwrap().0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`. Needs two distinct x.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Some(LineFit { slope, intercept, residual: (rss / n as f64).sqrt() })
}

/// z-score of an observed frequency against a hypothesized proportion,
/// with the binomial standard error under the hypothesis.
pub fn proportion_z(observed: f64, expected: f64, n: f64) -> f64 {
    let se = (expected * (1.0 - expected) / n).sqrt();
    z_score(observed - expected, se)
}

/// Two-sample z-score for equal proportions, pooled variance.
pub fn two_proportion_z(f1: f64, n1: f64, f2: f64, n2: f64) -> f64 {
    let pooled = (f1 * n1 + f2 * n2) / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).max(0.0).sqrt();
    z_score(f1 - f2, se)
}
