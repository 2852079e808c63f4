//! Log-domain helpers.

/// `ln Σ exp(x_i)`, stable for arbitrarily spread inputs.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalized probabilities `exp(x_i − lse(x))`, written into `out`.
/// Returns the log normalizer.
pub fn softmax_into(xs: &[f64], out: &mut [f64]) -> f64 {
    let lse = log_sum_exp(xs);
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - lse).exp();
    }
    lse
}

/// Index and value of the largest entry together with the runner-up value.
pub(crate) fn top_two(xs: &[f64]) -> (usize, f64, f64) {
    let mut best = 0;
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        if x > first {
            second = first;
            first = x;
            best = i;
        } else if x > second {
            second = x;
        }
    }
    (best, first, second)
}
