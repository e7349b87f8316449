//! Overflow-free evaluation of exponential sums.

/// `ln Σ_i exp(a_i) · weight`, evaluated with max-subtraction.
pub fn log_sum_exp(exponents: &[f64], weight: f64) -> f64 {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = exponents.iter().map(|a| (a - max).exp()).sum();
    max + (sum * weight).ln()
}

/// Normalized exponential as per-cell masses: `exp(a_i) / Σ_j exp(a_j)`.
///
/// The result sums to one regardless of the cell area, so it can be used
/// directly as a probability mass vector.
pub fn softmax_masses(exponents: &[f64]) -> Vec<f64> {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = exponents.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}
