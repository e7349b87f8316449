use std::env;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use egd_core::diagnostics::{rate_table, true_exploration_cost};
use egd_core::dynamics::{run_simulation, run_sweep, ProtocolSpec, SimConfig, SimResult};
use egd_core::grid::uniform_density;
use egd_core::hjb::{
    eta_logit_by_bisection, quadratic_residuals, solve_eta_logit, solve_hjb_quadratic,
    solve_hjb_quadratic_reference, HjbParams, LambdaWeights,
};
use egd_core::utility::eval_utility;
use egd_core::{EgdError, Grid};

use crate::config::ExperimentFile;
use crate::output;

/// Environment variable naming the directory under which runs without an
/// explicit output directory are written.
pub const OUTPUT_ROOT_ENV: &str = "EGD_OUTPUT_ROOT";

pub const TABLE1_EPSILONS: [f64; 4] = [0.150, 0.225, 0.300, 0.375];

/// Mean action of the Nash equilibrium of the resource utility, `c⁻²`.
pub const TABLE1_REFERENCE: f64 = 0.25;

pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub quiet: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            out: None,
            jobs: 1,
            quiet: true,
        }
    }
}

impl Options {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// `--out`, then `[output] directory`, then `$EGD_OUTPUT_ROOT/<file stem>`,
/// then `egd-output/<file stem>`.
pub fn output_dir(file: &ExperimentFile, config_path: &Path, opts: &Options) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    if let Some(dir) = &file.output.directory {
        return PathBuf::from(dir);
    }
    let stem = config_path
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "run".into());
    env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("egd-output"))
        .join(stem)
}

fn exploration_costs(cfg: &SimConfig, result: &SimResult) -> Option<Vec<f64>> {
    match cfg.protocol {
        ProtocolSpec::Pairwise { .. } => Some(
            result
                .eta_history
                .iter()
                .map(|(_, eta)| {
                    true_exploration_cost(*eta, cfg.hjb.chi, cfg.hjb.xi, cfg.hjb.epsilon)
                })
                .collect(),
        ),
        ProtocolSpec::Logit => None,
    }
}

fn write_run(dir: &Path, prefix: &str, cfg: &SimConfig, result: &SimResult) -> Result<()> {
    output::write(
        dir,
        &format!("{prefix}density.csv"),
        &output::density_csv(result),
    )?;
    let costs = exploration_costs(cfg, result);
    output::write(
        dir,
        &format!("{prefix}eta.csv"),
        &output::eta_csv(result, costs.as_deref()),
    )?;
    output::write(
        dir,
        &format!("{prefix}summary.csv"),
        &output::summary_csv(result),
    )
}

fn describe(result: &SimResult) -> String {
    format!(
        "mean action {:.6}, {} steps, stationary {}, final eta {:.6e}, nash gap {:.3e}",
        egd_core::grid::mean_action(&result.final_density),
        result.steps_taken,
        result.stationary,
        result.final_eta(),
        result.final_sample().nash_gap
    )
}

pub fn cmd_run(config_path: &Path, opts: &Options) -> Result<PathBuf> {
    let file = ExperimentFile::load(config_path)?;
    let cfg = file.sim_config()?;
    let result = run_simulation(&cfg).map_err(|e| anyhow!("simulation failed: {e}"))?;
    let dir = output_dir(&file, config_path, opts);
    write_run(&dir, &file.output.prefix, &cfg, &result)?;
    opts.say(describe(&result));
    opts.say(format!("wrote {}", dir.display()));
    Ok(dir)
}

pub fn cmd_table1(config_path: &Path, reference: f64, opts: &Options) -> Result<PathBuf> {
    let file = ExperimentFile::load(config_path)?;
    let epsilons: Vec<f64> = match &file.sweep {
        Some(s) if s.parameter == "epsilon" => s.values.clone(),
        Some(s) => bail!("table1 sweeps epsilon, but [sweep] names `{}`", s.parameter),
        None => TABLE1_EPSILONS.to_vec(),
    };
    let configs = epsilons
        .iter()
        .map(|eps| file.with_parameter("epsilon", *eps)?.sim_config())
        .collect::<Result<Vec<_>>>()?;
    let mut means = Vec::new();
    for (eps, res) in epsilons.iter().zip(run_sweep(&configs, opts.jobs)) {
        let res = res.map_err(|e| anyhow!("epsilon = {eps}: {e}"))?;
        if !res.stationary {
            opts.say(format!(
                "warning: epsilon = {eps} did not reach a stationary state"
            ));
        }
        means.push(egd_core::grid::mean_action(&res.final_density));
    }
    let rows = rate_table(&epsilons, &means, reference).map_err(|e| anyhow!("{e}"))?;
    let dir = output_dir(&file, config_path, opts);
    output::write(
        &dir,
        &format!("{}table1.csv", file.output.prefix),
        &output::table1_csv(&rows),
    )?;
    opts.say(format!(
        "{:>2} {:>8} {:>10} {:>12} {:>8}",
        "I", "epsilon", "average", "error", "rate"
    ));
    for r in &rows {
        let rate = r
            .rate
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        opts.say(format!(
            "{:>2} {:>8.3} {:>10.4} {:>12.3e} {:>8}",
            r.level, r.epsilon, r.mean, r.error, rate
        ));
    }
    Ok(dir)
}

pub fn cmd_sweep(config_path: &Path, opts: &Options) -> Result<PathBuf> {
    let file = ExperimentFile::load(config_path)?;
    let sweep = file
        .sweep
        .clone()
        .ok_or_else(|| anyhow!("sweep needs a [sweep] section"))?;
    let files = sweep
        .values
        .iter()
        .map(|v| file.with_parameter(&sweep.parameter, *v))
        .collect::<Result<Vec<_>>>()?;
    let configs = files
        .iter()
        .map(|f| f.sim_config())
        .collect::<Result<Vec<_>>>()?;
    let dir = output_dir(&file, config_path, opts);
    let prefix = &file.output.prefix;
    let mut combined = format!("parameter,value,{}\n", output::SUMMARY_HEADER);
    let mut failures = Vec::new();
    for ((value, cfg), res) in sweep
        .values
        .iter()
        .zip(&configs)
        .zip(run_sweep(&configs, opts.jobs))
    {
        match res {
            Ok(result) => {
                let sub = dir.join(format!("{}_{value}", sweep.parameter));
                write_run(&sub, prefix, cfg, &result)?;
                combined.push_str(&format!(
                    "{},{},{}\n",
                    sweep.parameter,
                    output::num(*value),
                    output::summary_fields(&result)
                ));
                opts.say(format!(
                    "{} = {value}: {}",
                    sweep.parameter,
                    describe(&result)
                ));
            }
            Err(e) => failures.push(format!("{} = {value}: {e}", sweep.parameter)),
        }
    }
    output::write(&dir, &format!("{prefix}summary.csv"), &combined)?;
    if !failures.is_empty() {
        bail!(
            "{} sweep runs failed:\n{}",
            failures.len(),
            failures.join("\n")
        );
    }
    opts.say(format!("wrote {}", dir.display()));
    Ok(dir)
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub instance: String,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub note: String,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.discrepancy <= self.tolerance
    }
}

fn logit_check(name: String, u: &[f64], hjb: &HjbParams, area: f64, u_max: f64) -> OracleCheck {
    let fixed = solve_eta_logit(u, hjb, area);
    let bisect = eta_logit_by_bisection(u, hjb.delta, hjb.epsilon, area, u_max);
    let (discrepancy, note) = match (fixed, bisect) {
        (Ok(a), Ok(b)) => ((a - b).abs(), format!("eta {a:.12e} vs bisection {b:.12e}")),
        (Err(EgdError::NoSolution(_)), Err(EgdError::NoSolution(_))) => {
            (0.0, "both paths report no solution".into())
        }
        (a, b) => (f64::INFINITY, format!("fixed point {a:?}, bisection {b:?}")),
    };
    OracleCheck {
        instance: name,
        discrepancy,
        tolerance: ORACLE_TOL,
        note,
    }
}

fn quadratic_check(
    name: String,
    u: &[f64],
    lambda: &LambdaWeights,
    hjb: &HjbParams,
) -> OracleCheck {
    let result = solve_hjb_quadratic(u, lambda, hjb).and_then(|sol| {
        let reference = solve_hjb_quadratic_reference(u, lambda, hjb)?;
        let r = quadratic_residuals(u, lambda, hjb, &sol.phi, sol.eta);
        let gap = sol
            .phi
            .iter()
            .zip(&reference.phi)
            .map(|(a, b)| (a - b).abs())
            .fold((sol.eta - reference.eta).abs(), f64::max);
        Ok((gap.max(r.hjb).max(r.constraint), sol.eta, reference.eta))
    });
    let (discrepancy, note) = match result {
        Ok((d, a, b)) => (d, format!("eta {a:.12e} vs re-solve {b:.12e}")),
        Err(e) => (f64::INFINITY, format!("solver error: {e}")),
    };
    OracleCheck {
        instance: name,
        discrepancy,
        tolerance: ORACLE_TOL,
        note,
    }
}

/// Cross-checks the production solvers against the reference solvers on the
/// configured initial state and on a fixed bank of small instances.
pub fn oracle_checks(file: &ExperimentFile) -> Result<Vec<OracleCheck>> {
    let cfg = file.sim_config()?;
    let mu = cfg.initial.build(cfg.grid.clone()).context("[initial]")?;
    let u = eval_utility(&cfg.utility, &mu).map_err(|e| anyhow!("utility: {e}"))?;
    let area = cfg.grid.cell_area();
    let mut checks = Vec::new();
    match cfg.protocol {
        ProtocolSpec::Logit => checks.push(logit_check(
            "configured instance".into(),
            &u,
            &cfg.hjb,
            area,
            cfg.utility.u_max,
        )),
        ProtocolSpec::Pairwise { w } => {
            let lambda = LambdaWeights::mixture(w, &mu).map_err(|e| anyhow!("{e}"))?;
            checks.push(quadratic_check(
                "configured instance".into(),
                &u,
                &lambda,
                &cfg.hjb,
            ));
        }
    }

    let n = 8;
    let small = std::sync::Arc::new(Grid::one_d(n).map_err(|e| anyhow!("{e}"))?);
    let uniform = uniform_density(small.clone());
    let flat = vec![0.7; n];
    // Tight tolerance: the relaxed η map contracts slowly around this root.
    let quad = HjbParams {
        chi: cfg.hjb.chi.max(1e-6),
        tol: 1e-14,
        max_iter: cfg.hjb.max_iter.max(100_000),
        ..cfg.hjb
    };
    let lambda = LambdaWeights::mixture(1.0, &uniform).map_err(|e| anyhow!("{e}"))?;
    let analytic = (quad.chi / quad.epsilon).powf(1.0 / (2.0 + quad.xi));
    checks.push(match solve_hjb_quadratic(&flat, &lambda, &quad) {
        Ok(sol) => OracleCheck {
            instance: "constant utility, quadratic cost".into(),
            discrepancy: (sol.eta - analytic).abs(),
            tolerance: 1e-12,
            note: format!(
                "eta {:.15e} vs (chi/eps)^(1/(2+xi)) {analytic:.15e}",
                sol.eta
            ),
        },
        Err(e) => OracleCheck {
            instance: "constant utility, quadratic cost".into(),
            discrepancy: f64::INFINITY,
            tolerance: 1e-12,
            note: format!("solver error: {e}"),
        },
    });
    checks.push(logit_check(
        "constant utility, entropic cost".into(),
        &flat,
        &cfg.hjb,
        1.0 / n as f64,
        1.5,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for k in 0..20 {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let p = HjbParams {
            delta: 10f64.powf(rng.gen_range(-0.3..1.5)),
            epsilon: rng.gen_range(0.05..1.0),
            ..HjbParams::default()
        };
        checks.push(logit_check(
            format!("random logit instance {k}"),
            &u,
            &p,
            1.0 / n as f64,
            1.5,
        ));
    }
    for k in 0..20 {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mu =
            egd_core::Density::from_masses(small.clone(), raw.iter().map(|v| v / total).collect())
                .map_err(|e| anyhow!("{e}"))?;
        let lambda =
            LambdaWeights::mixture(rng.gen_range(0.0..=1.0), &mu).map_err(|e| anyhow!("{e}"))?;
        let p = HjbParams {
            delta: 10f64.powf(rng.gen_range(-0.3..1.5)),
            epsilon: rng.gen_range(0.05..1.0),
            chi: 10f64.powf(rng.gen_range(-6.0..-3.0)),
            xi: rng.gen_range(0.0..2.0),
            ..HjbParams::default()
        };
        checks.push(quadratic_check(
            format!("random quadratic instance {k}"),
            &u,
            &lambda,
            &p,
        ));
    }
    Ok(checks)
}

/// Returns whether every check passed.
pub fn cmd_oracle_check(config_path: &Path, opts: &Options) -> Result<bool> {
    let file = ExperimentFile::load(config_path)?;
    let checks = oracle_checks(&file)?;
    let worst = checks
        .iter()
        .filter(|c| c.discrepancy.is_finite())
        .map(|c| c.discrepancy)
        .fold(0.0, f64::max);
    let failed: Vec<&OracleCheck> = checks.iter().filter(|c| !c.passed()).collect();
    for c in &checks {
        opts.say(format!(
            "{} {}: discrepancy {:.3e} ({})",
            if c.passed() { "ok  " } else { "FAIL" },
            c.instance,
            c.discrepancy,
            c.note
        ));
    }
    opts.say(format!(
        "{} checks, max discrepancy {worst:.3e}",
        checks.len()
    ));
    for c in &failed {
        eprintln!(
            "oracle mismatch on {}: {:.3e} > {:.0e} ({})",
            c.instance, c.discrepancy, c.tolerance, c.note
        );
    }
    Ok(failed.is_empty())
}
