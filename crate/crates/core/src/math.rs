//! Log-domain arithmetic shared by the oracle and the local quantities.

/// `log(sum(exp(x)))` with max subtraction. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() || max.is_nan() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exponentiates `values` relative to their log-sum-exp, producing a
/// normalized probability table. Returns the log-normalizer alongside.
pub fn softmax(values: &[f64]) -> (Vec<f64>, f64) {
    let lse = log_sum_exp(values);
    (values.iter().map(|&v| (v - lse).exp()).collect(), lse)
}

/// `-sum p log p` with the convention `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}
