//! Per-step value-function solvers.
//!
//! Each time step freezes the current utility `U` and solves the static HJB
//! equation together with the exploration-cost constraint for the pair
//! `(Φ, η)`:
//!
//! * quadratic cost (BNN and replicator): a coupled nonlinear system solved by
//!   relaxed fixed-point iteration, see [`solve_hjb_quadratic`];
//! * entropic cost (logit): `Φ` is explicit given `η`, and `η` solves a scalar
//!   equation, see [`solve_eta_logit`] and [`phi_logit_closed_form`].
//!
//! The `oracle` submodule holds independent reference solvers used to
//! cross-check both paths.

mod logit;
pub mod oracle;
mod quadratic;

pub use logit::{
    entropic_cost, entropic_cost_forms, logit_masses, phi_logit_closed_form, solve_eta_logit,
    solve_eta_logit_detailed, EtaSolution,
};
pub use oracle::{eta_bisection_oracle, eta_logit_by_bisection, solve_hjb_quadratic_reference};
pub use quadratic::{
    eta_bounds_quadratic, quadratic_residuals, solve_hjb_quadratic, QuadraticResiduals,
};

use crate::error::{EgdError, Result};
use crate::grid::Density;

/// How Algorithm-1 style iterations update `Φ` between `η` updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiUpdate {
    /// Solve each cell's equation exactly with the other cells frozen.
    ///
    /// The left side `Φ_i − Σ_j (Φ_j − Φ_i)₊² λ_j / (2ηδ)` is strictly
    /// increasing in `Φ_i`, so the per-cell root is unique and the sweep is
    /// order preserving. Converges for small `δ` where plain Picard cycles.
    Monotone,
    /// `Φ ← (1 − ω)·Φ + ω·(U + Σ_j (Φ_j − Φ_i)₊² λ_j / (2ηδ))`; `ω = 1` is the
    /// undamped textbook update, which is a contraction only for large `δ`.
    Picard { damping: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbParams {
    /// Discount rate δ.
    pub delta: f64,
    /// Exploration-cost budget ε.
    pub epsilon: f64,
    /// Regularization weight χ (quadratic cost only).
    pub chi: f64,
    /// Regularization power ξ (quadratic cost only).
    pub xi: f64,
    /// Relaxation r of the η update.
    pub relax: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Initial guess η⁽⁰⁾.
    pub eta_init: f64,
    pub phi_update: PhiUpdate,
}

impl Default for HjbParams {
    fn default() -> Self {
        Self {
            delta: 1.0,
            epsilon: 0.375,
            chi: 1e-5,
            xi: 2.0,
            relax: 0.05,
            tol: 1e-10,
            max_iter: 10_000,
            eta_init: 1.0,
            phi_update: PhiUpdate::Monotone,
        }
    }
}

impl HjbParams {
    pub fn with_eta_init(mut self, eta: f64) -> Self {
        self.eta_init = eta;
        self
    }

    /// Checks the ranges common to both cost families.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EgdError::InvalidParams(msg));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.chi >= 0.0) {
            return bad(format!("chi must be nonnegative, got {}", self.chi));
        }
        if !(self.xi >= 0.0) {
            return bad(format!("xi must be nonnegative, got {}", self.xi));
        }
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return bad(format!("relax must lie in (0, 1], got {}", self.relax));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.eta_init > 0.0 && self.eta_init.is_finite()) {
            return bad(format!("eta_init must be positive, got {}", self.eta_init));
        }
        if let PhiUpdate::Picard { damping } = self.phi_update {
            if !(damping > 0.0 && damping <= 1.0) {
                return bad(format!("Picard damping must lie in (0, 1], got {damping}"));
            }
        }
        Ok(())
    }
}

/// Switching weights `λ = w·κ + (1 − w)·μ` with `κ` uniform.
///
/// `w = 0` gives the replicator model, `w = 1` the BNN model.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaWeights {
    weights: Vec<f64>,
}

impl LambdaWeights {
    pub fn mixture(w: f64, mu: &Density) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(EgdError::InvalidParams(format!(
                "w must lie in [0, 1], got {w}"
            )));
        }
        let n = mu.masses().len();
        let kappa = 1.0 / n as f64;
        let weights = mu
            .masses()
            .iter()
            .map(|m| w * kappa + (1.0 - w) * m)
            .collect();
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|v| !(*v >= 0.0)) {
            return Err(EgdError::InvalidParams("negative lambda weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EgdError::InvalidParams(format!(
                "lambda weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Converged `(Φ, η)` plus solver telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbSolution {
    pub phi: Vec<f64>,
    pub eta: f64,
    pub iterations: usize,
    /// Final iteration error `Er⁽ⁿ⁾`.
    pub residual: f64,
    /// η⁽⁰⁾ the iteration started from.
    pub eta_start: f64,
}
