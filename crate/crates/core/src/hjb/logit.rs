use super::HjbParams;
use crate::error::{EgdError, Result};
use crate::numerics::{log_sum_exp, softmax_masses};

fn discount_weight(delta: f64) -> f64 {
    delta / (delta + 1.0)
}

fn scaled_exponents(u_values: &[f64], eta: f64, delta: f64) -> Vec<f64> {
    let s = discount_weight(delta);
    u_values.iter().map(|u| s * u / eta).collect()
}

/// Explicit value function of the entropic-cost HJB equation:
///
/// `Φ_i = s·U_i + (η/δ)·ln(Σ_j exp(s·U_j/η)·area)`, `s = δ/(δ+1)`.
pub fn phi_logit_closed_form(u_values: &[f64], eta: f64, delta: f64, cell_area: f64) -> Vec<f64> {
    let s = discount_weight(delta);
    let log_z = log_sum_exp(&scaled_exponents(u_values, eta, delta), cell_area);
    let offset = eta / delta * log_z;
    u_values.iter().map(|u| s * u + offset).collect()
}

/// Both algebraic forms of the discrete relative entropy of the logit density
/// `q_i = exp(W_i/η)/Z`, `W = s·U`, `Z = Σ exp(W_j/η)·area`:
///
/// `(Σ q_i ln q_i · area, (1/η)·Σ W_i q_i · area − ln Z)`.
pub fn entropic_cost_forms(u_values: &[f64], eta: f64, delta: f64, cell_area: f64) -> (f64, f64) {
    let a = scaled_exponents(u_values, eta, delta);
    let log_z = log_sum_exp(&a, cell_area);
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut direct = 0.0;
    let (mut weighted, mut total) = (0.0, 0.0);
    for ai in &a {
        let ln_q = ai - log_z;
        direct += ln_q.exp() * ln_q * cell_area;
        let w = (ai - max).exp();
        weighted += ai * w;
        total += w;
    }
    (direct, weighted / total - log_z)
}

/// Exploration cost at multiplier `η`; strictly decreasing in `η` for
/// non-constant utilities.
pub fn entropic_cost(u_values: &[f64], eta: f64, delta: f64, cell_area: f64) -> f64 {
    entropic_cost_forms(u_values, eta, delta, cell_area).0
}

/// Logit target masses `exp(Φ_i/η)·area / Σ_j exp(Φ_j/η)·area`.
pub fn logit_masses(phi: &[f64], eta: f64) -> Vec<f64> {
    let a: Vec<f64> = phi.iter().map(|p| p / eta).collect();
    softmax_masses(&a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSolution {
    pub eta: f64,
    pub iterations: usize,
    /// Last change `|η⁽ⁿ⁺¹⁾ − η⁽ⁿ⁾|`.
    pub residual: f64,
    pub eta_start: f64,
}

/// Relaxed fixed-point iteration `η ← r·η + (1 − r)·g(η)` with
///
/// `g(η) = s·⟨U⟩_q / (ε + ln Z)`,
///
/// the rearrangement of `cost(η) = ε` using the second form of
/// [`entropic_cost_forms`]. Stops once both the last change and the
/// estimated distance to the fixed point are within `tol`.
pub fn solve_eta_logit_detailed(
    u_values: &[f64],
    params: &HjbParams,
    cell_area: f64,
) -> Result<EtaSolution> {
    params.validate()?;
    let (lo, hi) = crate::utility::utility_range(u_values);
    if hi - lo <= 1e-12 {
        return Err(EgdError::NoSolution(
            "utility is constant, so the exploration cost vanishes for every eta".into(),
        ));
    }
    let s = discount_weight(params.delta);
    let mut eta = params.eta_init;
    let mut change = f64::INFINITY;
    let mut a = vec![0.0; u_values.len()];
    for n in 0..params.max_iter {
        for (ai, u) in a.iter_mut().zip(u_values) {
            *ai = s * u / eta;
        }
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut zu = 0.0;
        for (ai, u) in a.iter().zip(u_values) {
            let e = (ai - max).exp();
            z += e;
            zu += u * e;
        }
        let log_z = max + (z * cell_area).ln();
        let g = s * (zu / z) / (params.epsilon + log_z);
        let next = params.relax * eta + (1.0 - params.relax) * g;
        let prev_change = change;
        change = (next - eta).abs();
        eta = next;
        if !(eta > 0.0) || !eta.is_finite() {
            break;
        }
        // Slow contraction leaves the iterate further from the root than
        // the last step suggests; bound the remaining distance by the
        // geometric tail `change·ρ/(1 − ρ)` before stopping.
        let ratio = change / prev_change;
        let tail_ok = ratio < 1.0 && change * ratio / (1.0 - ratio) <= params.tol;
        if change <= params.tol && (tail_ok || change <= 1e-3 * params.tol) {
            return Ok(EtaSolution {
                eta,
                iterations: n + 1,
                residual: change,
                eta_start: params.eta_init,
            });
        }
    }
    Err(EgdError::MaxIterExceeded {
        iterations: params.max_iter,
        residual: change,
    })
}

pub fn solve_eta_logit(u_values: &[f64], params: &HjbParams, cell_area: f64) -> Result<f64> {
    solve_eta_logit_detailed(u_values, params, cell_area).map(|s| s.eta)
}
