//! Reference solvers that share no iteration logic with the production paths.
//!
//! * [`eta_bisection_oracle`] finds the root of any decreasing cost function.
//! * [`eta_logit_by_bisection`] applies it to the entropic cost, evaluated
//!   here from its direct `Σ q ln q` form.
//! * [`solve_hjb_quadratic_reference`] re-solves the quadratic-cost system by
//!   damped Picard iteration with plain double sums.

use super::{HjbParams, HjbSolution, LambdaWeights, PhiUpdate};
use crate::error::{EgdError, Result};

/// Bisection for `cost_fn(η) = epsilon` with `cost_fn` decreasing on
/// `[bracket_lo, bracket_hi]`. Runs until the bracket cannot shrink further,
/// which is far below a width of `1e-12` for the magnitudes used here.
pub fn eta_bisection_oracle(
    cost_fn: impl Fn(f64) -> f64,
    epsilon: f64,
    bracket_lo: f64,
    bracket_hi: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (bracket_lo, bracket_hi);
    if !(cost_fn(lo) > epsilon && epsilon > cost_fn(hi)) {
        return Err(EgdError::BracketError { lo, hi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cost_fn(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn direct_entropic_cost(u_values: &[f64], eta: f64, delta: f64, cell_area: f64) -> f64 {
    let s = delta / (delta + 1.0);
    let top = u_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // exp((W_i − W_max)/η) stays in (0, 1].
    let weights: Vec<f64> = u_values
        .iter()
        .map(|u| (s * (u - top) / eta).exp())
        .collect();
    let total: f64 = weights.iter().map(|w| w * cell_area).sum();
    weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let q = w / total;
            q * q.ln() * cell_area
        })
        .sum()
}

/// Logit multiplier by bisection on the bracket `[1e-6, 10·Ū²/ε]`, widened
/// geometrically in both directions until it straddles `epsilon`.
pub fn eta_logit_by_bisection(
    u_values: &[f64],
    delta: f64,
    epsilon: f64,
    cell_area: f64,
    u_max: f64,
) -> Result<f64> {
    let (lo_u, hi_u) = crate::utility::utility_range(u_values);
    if hi_u - lo_u <= 1e-12 {
        return Err(EgdError::NoSolution("constant utility".into()));
    }
    let cost = |eta: f64| direct_entropic_cost(u_values, eta, delta, cell_area);
    let mut lo = 1e-6;
    let mut hi = (10.0 * u_max * u_max / epsilon).max(1.0);
    for _ in 0..200 {
        if cost(lo) > epsilon {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..200 {
        if cost(hi) < epsilon {
            break;
        }
        hi *= 2.0;
    }
    eta_bisection_oracle(cost, epsilon, lo, hi)
}

/// Damped Picard re-solve of the quadratic-cost system at `tol / 10`.
///
/// Starts at damping 0.5 and halves it after every failed attempt.
pub fn solve_hjb_quadratic_reference(
    u_values: &[f64],
    lambda: &LambdaWeights,
    params: &HjbParams,
) -> Result<HjbSolution> {
    let mut damping = 0.5;
    let mut last = None;
    for _ in 0..5 {
        let p = HjbParams {
            tol: params.tol / 10.0,
            max_iter: params.max_iter.max(200_000),
            phi_update: PhiUpdate::Picard { damping },
            ..*params
        };
        match super::solve_hjb_quadratic(u_values, lambda, &p) {
            Ok(sol) => return Ok(sol),
            Err(e @ EgdError::MaxIterExceeded { .. }) => {
                last = Some(e);
                damping *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
