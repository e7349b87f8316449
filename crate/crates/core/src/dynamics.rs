//! Explicit Euler time stepping coupled to the per-step HJB solve.

use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::{nash_gap, true_exploration_cost, DEFAULT_SUPPORT_THRESHOLD};
use crate::error::{EgdError, Result};
use crate::grid::{density_from_pdf, mean_action, sup_pdf_diff, uniform_density, Density, Grid};
use crate::hjb::{
    logit_masses, phi_logit_closed_form, solve_eta_logit_detailed, solve_hjb_quadratic, HjbParams,
    LambdaWeights,
};
use crate::utility::{eval_utility, UtilitySpec};

/// Times at which a sample is always recorded when they fall inside the run.
pub const FORCED_SAMPLE_TIMES: [f64; 4] = [0.0, 1.0, 2.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolSpec {
    /// Positive-part switching with `λ = w·uniform + (1 − w)·μ`;
    /// `w = 0` is the replicator model, `w = 1` the BNN model.
    Pairwise {
        w: f64,
    },
    Logit,
}

impl ProtocolSpec {
    pub fn replicator() -> Self {
        ProtocolSpec::Pairwise { w: 0.0 }
    }

    pub fn bnn() -> Self {
        ProtocolSpec::Pairwise { w: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProtocolSpec::Pairwise { w } if !(0.0..=1.0).contains(w) => Err(
                EgdError::InvalidParams(format!("w must lie in [0, 1], got {w}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Uniform,
    /// Unnormalized pdf values at the cell centers.
    Pdf(Vec<f64>),
}

impl InitialCondition {
    pub fn build(&self, grid: Arc<Grid>) -> Result<Density> {
        match self {
            InitialCondition::Uniform => Ok(uniform_density(grid)),
            InitialCondition::Pdf(values) => density_from_pdf(grid, values),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub t_max: f64,
    pub protocol: ProtocolSpec,
    pub utility: UtilitySpec,
    pub hjb: HjbParams,
    pub initial: InitialCondition,
    pub stationary_tol: f64,
    pub sample_every: usize,
    pub support_threshold: f64,
}

impl SimConfig {
    /// Defaults: `dt = 0.005`, uniform start, stationarity at `1e-10`, one
    /// sample every 200 steps.
    pub fn new(grid: Arc<Grid>, protocol: ProtocolSpec, utility: UtilitySpec, t_max: f64) -> Self {
        Self {
            grid,
            dt: 0.005,
            t_max,
            protocol,
            utility,
            hjb: HjbParams::default(),
            initial: InitialCondition::Uniform,
            stationary_tol: 1e-10,
            sample_every: 200,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EgdError::InvalidParams(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be nonnegative, got {}", self.t_max));
        }
        if !(self.stationary_tol >= 0.0) {
            return bad(format!(
                "stationary_tol must be nonnegative, got {}",
                self.stationary_tol
            ));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be positive".into());
        }
        self.protocol.validate()?;
        self.hjb.validate()
    }

    /// Number of Euler steps needed to reach `t_max`.
    pub fn step_budget(&self) -> usize {
        if self.t_max == 0.0 {
            return 0;
        }
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub density: Density,
    pub eta: f64,
    pub mean_action: f64,
    /// Quadratic-cost runs only.
    pub exploration_cost: Option<f64>,
    pub nash_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub samples: Vec<Sample>,
    /// `(t_k, η_k)` for every solved state, including the last one.
    pub eta_history: Vec<(f64, f64)>,
    /// Value function of the final state.
    pub phi_final: Vec<f64>,
    pub final_density: Density,
    pub stationary: bool,
    pub steps_taken: usize,
    pub dt: f64,
}

impl SimResult {
    pub fn final_sample(&self) -> &Sample {
        self.samples
            .last()
            .expect("a run records at least one sample")
    }

    pub fn final_eta(&self) -> f64 {
        self.eta_history
            .last()
            .expect("a run solves at least once")
            .1
    }

    /// η of the state at step `round(t/dt)`, if the run got that far.
    pub fn eta_at(&self, t: f64) -> Option<f64> {
        let k = (t / self.dt).round() as usize;
        self.eta_history.get(k).map(|(_, eta)| *eta)
    }
}

/// State of step `step` right after its HJB solve.
#[derive(Debug)]
pub struct SolveEvent<'a> {
    pub step: usize,
    pub t: f64,
    pub density: &'a Density,
    pub utility: &'a [f64],
    pub phi: &'a [f64],
    pub eta: f64,
    /// Present for pairwise protocols.
    pub lambda: Option<&'a LambdaWeights>,
    pub hjb_iterations: usize,
}

/// One Euler step from `before` (step `step`) to `after`.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub step: usize,
    pub before: &'a Density,
    pub after: &'a Density,
    pub sup_diff: f64,
}

/// Hooks called by [`run_simulation_observed`].
pub trait Observer {
    fn on_solve(&mut self, _event: &SolveEvent<'_>) {}
    fn on_step(&mut self, _event: &StepEvent<'_>) {}
}

impl Observer for () {}

/// One explicit Euler step of the pairwise protocol.
pub fn step_pairwise(
    mu: &Density,
    phi: &[f64],
    eta: f64,
    lambda: &LambdaWeights,
    dt: f64,
) -> Result<Density> {
    let m = mu.masses();
    let lam = lambda.weights();
    let n = m.len();
    if phi.len() != n || lam.len() != n {
        return Err(EgdError::InvalidParams(format!(
            "step_pairwise: {n} cells but {} values of phi and {} weights",
            phi.len(),
            lam.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(EgdError::InvalidParams(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let mut inflow = 0.0;
        let mut outflow = 0.0;
        for j in 0..n {
            let gap = (phi[i] - phi[j]) / eta;
            if gap > 0.0 {
                inflow += gap * m[j];
            } else if gap < 0.0 {
                outflow -= gap * lam[j];
            }
        }
        let value = m[i] + dt * (lam[i] * inflow - m[i] * outflow);
        if value < 0.0 {
            return Err(EgdError::TimestepTooLarge {
                cell: i,
                mass: value,
            });
        }
        next.push(value);
    }
    Ok(Density::from_masses_unchecked(mu.grid_arc().clone(), next))
}

/// One explicit Euler step of the logit protocol,
/// `μ' = (1 − dt)·μ + dt·softmax(Φ/η)`.
pub fn step_logit(mu: &Density, phi: &[f64], eta: f64, dt: f64) -> Result<Density> {
    let m = mu.masses();
    if phi.len() != m.len() {
        return Err(EgdError::InvalidParams(format!(
            "step_logit: {} cells but {} values of phi",
            m.len(),
            phi.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(EgdError::InvalidParams(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let target = logit_masses(phi, eta);
    let next: Vec<f64> = m
        .iter()
        .zip(&target)
        .map(|(a, b)| (1.0 - dt) * a + dt * b)
        .collect();
    if dt > 1.0 {
        let (cell, mass) =
            next.iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                );
        return Err(EgdError::TimestepTooLarge { cell, mass });
    }
    Ok(Density::from_masses_unchecked(mu.grid_arc().clone(), next))
}

struct Solved {
    utility: Vec<f64>,
    phi: Vec<f64>,
    eta: f64,
    lambda: Option<LambdaWeights>,
    iterations: usize,
}

fn solve_state(config: &SimConfig, mu: &Density, eta_guess: f64) -> Result<Solved> {
    let utility = eval_utility(&config.utility, mu)?;
    let params = config.hjb.with_eta_init(eta_guess);
    match config.protocol {
        ProtocolSpec::Pairwise { w } => {
            let lambda = LambdaWeights::mixture(w, mu)?;
            let sol = solve_hjb_quadratic(&utility, &lambda, &params)?;
            Ok(Solved {
                utility,
                phi: sol.phi,
                eta: sol.eta,
                lambda: Some(lambda),
                iterations: sol.iterations,
            })
        }
        ProtocolSpec::Logit => {
            let area = config.grid.cell_area();
            let sol = solve_eta_logit_detailed(&utility, &params, area)?;
            let phi = phi_logit_closed_form(&utility, sol.eta, params.delta, area);
            Ok(Solved {
                utility,
                phi,
                eta: sol.eta,
                lambda: None,
                iterations: sol.iterations,
            })
        }
    }
}

fn is_forced_step(k: usize, dt: f64) -> bool {
    FORCED_SAMPLE_TIMES
        .iter()
        .any(|t| (t / dt).round() as usize == k && ((k as f64) * dt - t).abs() < 0.5 * dt)
}

/// Runs the coupled solve/step loop until stationarity or `t_max`.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    run_simulation_observed(config, &mut ())
}

/// Two-dimensional runs; only the logit protocol is discretized in 2D.
pub fn run_simulation_2d(config: &SimConfig) -> Result<SimResult> {
    run_simulation_observed(config, &mut ())
}

/// [`run_simulation`] with per-solve and per-step callbacks.
pub fn run_simulation_observed(
    config: &SimConfig,
    observer: &mut dyn Observer,
) -> Result<SimResult> {
    config.validate()?;
    if config.grid.is_2d() {
        if !matches!(config.protocol, ProtocolSpec::Logit) {
            return Err(EgdError::Unsupported(
                "pairwise protocols are only available in one dimension".into(),
            ));
        }
        if !config.utility.supports_2d() {
            return Err(EgdError::UtilityMismatch {
                utility: config.utility.name().to_string(),
                reason: "not defined on a two-dimensional grid".into(),
            });
        }
    }

    let budget = config.step_budget();
    let mut mu = config.initial.build(config.grid.clone())?;
    let mut eta_guess = config.hjb.eta_init;
    let mut samples = Vec::new();
    let mut eta_history = Vec::new();
    let mut stationary = false;
    let mut k = 0usize;

    loop {
        let t = k as f64 * config.dt;
        let solved = solve_state(config, &mu, eta_guess).map_err(|e| e.at_step(k))?;
        eta_guess = solved.eta;
        eta_history.push((t, solved.eta));
        observer.on_solve(&SolveEvent {
            step: k,
            t,
            density: &mu,
            utility: &solved.utility,
            phi: &solved.phi,
            eta: solved.eta,
            lambda: solved.lambda.as_ref(),
            hjb_iterations: solved.iterations,
        });

        let done = stationary || k >= budget;
        if done || k.is_multiple_of(config.sample_every) || is_forced_step(k, config.dt) {
            let exploration_cost = match config.protocol {
                ProtocolSpec::Pairwise { .. } => Some(true_exploration_cost(
                    solved.eta,
                    config.hjb.chi,
                    config.hjb.xi,
                    config.hjb.epsilon,
                )),
                ProtocolSpec::Logit => None,
            };
            samples.push(Sample {
                step: k,
                t,
                density: mu.clone(),
                eta: solved.eta,
                mean_action: mean_action(&mu),
                exploration_cost,
                nash_gap: nash_gap(&solved.utility, &mu, config.support_threshold)
                    .map_err(|e| e.at_step(k))?,
            });
        }
        if done {
            return Ok(SimResult {
                samples,
                eta_history,
                phi_final: solved.phi,
                final_density: mu,
                stationary,
                steps_taken: k,
                dt: config.dt,
            });
        }

        let next = match (&config.protocol, &solved.lambda) {
            (ProtocolSpec::Pairwise { .. }, Some(lambda)) => {
                step_pairwise(&mu, &solved.phi, solved.eta, lambda, config.dt)
            }
            _ => step_logit(&mu, &solved.phi, solved.eta, config.dt),
        }
        .map_err(|e| e.at_step(k))?;
        let diff = sup_pdf_diff(&next, &mu)?;
        observer.on_step(&StepEvent {
            step: k,
            before: &mu,
            after: &next,
            sup_diff: diff,
        });
        mu = next;
        stationary = diff < config.stationary_tol;
        k += 1;
    }
}

/// Runs independent simulations on up to `jobs` threads; results follow the
/// order of `configs`.
pub fn run_sweep(configs: &[SimConfig], jobs: usize) -> Vec<Result<SimResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| configs.par_iter().map(run_simulation).collect())
}
