//! Measurements taken during and after a run.

use crate::dynamics::SimResult;
use crate::error::{EgdError, Result};
use crate::grid::{Density, Grid};

/// Support cutoff used when none is configured.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-8;

const REL_DIFF_FLOOR: f64 = 1e-300;

/// Normalized true exploration cost `E = 1 − χ/(ε·η^{2+ξ})`: the share of
/// the budget not consumed by the regularization term.
pub fn true_exploration_cost(eta: f64, chi: f64, xi: f64, epsilon: f64) -> f64 {
    1.0 - chi / (epsilon * eta.powf(2.0 + xi))
}

/// `max_i U_i − min_{i: μ_i > threshold} U_i`.
///
/// Zero exactly when no action beats an action in the (thresholded) support,
/// the discrete Nash condition.
pub fn nash_gap(u_values: &[f64], density: &Density, support_threshold: f64) -> Result<f64> {
    let best = u_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst_in_support = u_values
        .iter()
        .zip(density.masses())
        .filter(|(_, m)| **m > support_threshold)
        .map(|(u, _)| *u)
        .fold(f64::INFINITY, f64::min);
    if worst_in_support == f64::INFINITY {
        return Err(EgdError::EmptySupport);
    }
    Ok(best - worst_in_support)
}

/// Observed order of convergence `ln(err_prev/err_cur) / ln(eps_cur/eps_prev)`.
pub fn convergence_rate(eps_prev: f64, eps_cur: f64, err_prev: f64, err_cur: f64) -> Result<f64> {
    if err_cur == 0.0 {
        return Err(EgdError::InfiniteRate);
    }
    if !(eps_prev > 0.0 && eps_cur > 0.0 && err_prev >= 0.0 && err_cur > 0.0) || eps_prev == eps_cur
    {
        return Err(EgdError::InvalidParams(format!(
            "convergence rate needs positive, distinct levels: \
             eps ({eps_prev}, {eps_cur}), errors ({err_prev}, {err_cur})"
        )));
    }
    Ok((err_prev / err_cur).ln() / (eps_cur / eps_prev).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTableRow {
    /// 1-based level index.
    pub level: usize,
    pub epsilon: f64,
    pub mean: f64,
    /// `|mean − reference|`
    pub error: f64,
    /// Absent on the first level.
    pub rate: Option<f64>,
}

/// Errors against `reference` and level-to-level rates for an ε sweep.
///
/// A level that hits the reference exactly gets an infinite rate.
pub fn rate_table(epsilons: &[f64], means: &[f64], reference: f64) -> Result<Vec<RateTableRow>> {
    if epsilons.len() != means.len() {
        return Err(EgdError::InvalidParams(format!(
            "{} epsilons but {} means",
            epsilons.len(),
            means.len()
        )));
    }
    let mut rows: Vec<RateTableRow> = Vec::with_capacity(epsilons.len());
    for (k, (&epsilon, &mean)) in epsilons.iter().zip(means).enumerate() {
        let error = (mean - reference).abs();
        let rate = match rows.last() {
            Some(prev) => match convergence_rate(prev.epsilon, epsilon, prev.error, error) {
                Ok(r) => Some(r),
                Err(EgdError::InfiniteRate) => Some(f64::INFINITY),
                Err(e) => return Err(e),
            },
            None => None,
        };
        rows.push(RateTableRow {
            level: k + 1,
            epsilon,
            mean,
            error,
            rate,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    /// Final densities, fine cells averaged onto the coarse grid.
    Density,
    /// η histories at the coarse run's time stamps.
    EtaHistory,
}

fn relative_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / (0.5 * (a.abs() + b.abs())).max(REL_DIFF_FLOOR)
}

fn refinement(coarse: usize, fine: usize, axis: &str) -> Result<usize> {
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(EgdError::IncompatibleRuns(format!(
            "{axis}: {fine} fine cells do not tile {coarse} coarse cells"
        )));
    }
    Ok(fine / coarse)
}

/// Fine pdf averaged over each coarse cell, as coarse-cell masses.
fn restrict(coarse: &Grid, fine: &Density) -> Result<Vec<f64>> {
    let fm = fine.masses();
    match (coarse, fine.grid()) {
        (Grid::OneD(c), Grid::OneD(f)) => {
            let r = refinement(c.n_cells(), f.n_cells(), "x")?;
            Ok(fm.chunks(r).map(|chunk| chunk.iter().sum()).collect())
        }
        (Grid::TwoD(c), Grid::TwoD(f)) => {
            let rx = refinement(c.nx(), f.nx(), "x")?;
            let rz = refinement(c.nz(), f.nz(), "z")?;
            let mut out = vec![0.0; c.nx() * c.nz()];
            for (k, m) in fm.iter().enumerate() {
                let (i, j) = f.split(k);
                out[c.index(i / rx, j / rz)] += m;
            }
            Ok(out)
        }
        _ => Err(EgdError::IncompatibleRuns(
            "runs live on grids of different dimension".into(),
        )),
    }
}

fn history_spacing(history: &[(f64, f64)]) -> Result<f64> {
    match history {
        [first, second, ..] if second.0 > first.0 => Ok(second.0 - first.0),
        _ => Err(EgdError::IncompatibleRuns(
            "an eta history needs at least two increasing time stamps".into(),
        )),
    }
}

/// Mean relative absolute difference between two runs, in percent.
///
/// Relative differences use the mean of the pair as denominator.
pub fn compare_runs(a: &SimResult, b: &SimResult, mode: CompareMode) -> Result<f64> {
    let diffs: Vec<f64> = match mode {
        CompareMode::Density => {
            let (da, db) = (&a.final_density, &b.final_density);
            let (coarse, fine) = if da.masses().len() <= db.masses().len() {
                (da, db)
            } else {
                (db, da)
            };
            let restricted = restrict(coarse.grid(), fine)?;
            // Both vectors are masses on the coarse cells, so the ratio of
            // pdfs equals the ratio of masses.
            coarse
                .masses()
                .iter()
                .zip(&restricted)
                .map(|(p, q)| relative_diff(*p, *q))
                .collect()
        }
        CompareMode::EtaHistory => {
            let (ha, hb) = (&a.eta_history, &b.eta_history);
            let (sa, sb) = (history_spacing(ha)?, history_spacing(hb)?);
            let (coarse, fine, dt_fine) = if sa >= sb { (ha, hb, sb) } else { (hb, ha, sa) };
            let end = coarse.last().unwrap().0.min(fine.last().unwrap().0);
            let mut out = Vec::new();
            for &(t, eta) in coarse.iter().take_while(|(t, _)| *t <= end + 1e-12) {
                let k = (t / dt_fine).round() as usize;
                match fine.get(k) {
                    Some(&(tf, eta_f)) if (tf - t).abs() <= 1e-9 * t.max(1.0) => {
                        out.push(relative_diff(eta, eta_f))
                    }
                    _ => {
                        return Err(EgdError::IncompatibleRuns(format!(
                            "no fine-run sample at t = {t}"
                        )))
                    }
                }
            }
            out
        }
    };
    if diffs.is_empty() {
        return Err(EgdError::IncompatibleRuns("nothing to compare".into()));
    }
    Ok(100.0 * diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// `max_t |η_t − η_0|` over a nonempty history.
pub fn eta_constancy(eta_history: &[(f64, f64)]) -> f64 {
    let first = eta_history
        .first()
        .expect("eta_constancy needs a nonempty history")
        .1;
    eta_history
        .iter()
        .map(|(_, eta)| (eta - first).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{uniform_density, Grid};
    use crate::utility::{eval_utility_1d, UtilitySpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn exploration_cost_examples() {
        assert_eq!(true_exploration_cost(0.3, 0.0, 2.0, 0.1), 1.0);
        let eta = (1e-5f64 / 0.1).powf(0.25);
        assert!(true_exploration_cost(eta, 1e-5, 2.0, 0.1).abs() < 1e-12);
        assert!((true_exploration_cost(0.2, 1e-5, 2.0, 0.1) - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn nash_gap_examples() {
        let grid = Arc::new(Grid::one_d(250).unwrap());
        // Bimodal equilibrium of the quadratic utility.
        let mut m = vec![0.0; 250];
        m[0] = 0.5;
        m[249] = 0.5;
        let d = Density::from_masses(grid.clone(), m).unwrap();
        let u = eval_utility_1d(&UtilitySpec::quadratic(&grid).unwrap(), &d).unwrap();
        assert!(nash_gap(&u, &d, DEFAULT_SUPPORT_THRESHOLD).unwrap().abs() < 1e-12);
        assert!(u[125] < u[0]);

        let flat = vec![1.5; 250];
        let uni = uniform_density(grid.clone());
        assert_eq!(
            nash_gap(&flat, &uni, DEFAULT_SUPPORT_THRESHOLD).unwrap(),
            0.0
        );

        let u2 = eval_utility_1d(&UtilitySpec::resource(&grid).unwrap(), &uni).unwrap();
        let gap = nash_gap(&u2, &uni, DEFAULT_SUPPORT_THRESHOLD).unwrap();
        // Slope √2 − 2 over the span of cell centers.
        let expected = (2.0 - 2f64.sqrt()) * (249.0 / 250.0);
        assert!((gap - expected).abs() < 1e-12);

        assert_eq!(nash_gap(&flat, &uni, 1.0), Err(EgdError::EmptySupport));
    }

    #[test]
    fn rate_examples() {
        let r = convergence_rate(0.150, 0.225, 9.428e-2, 6.078e-2).unwrap();
        assert!((r - 1.083).abs() < 5e-4, "{r}");
        let r = convergence_rate(0.225, 0.300, 6.078e-2, 3.324e-2).unwrap();
        assert!((r - 2.097).abs() < 1e-3, "{r}");
        assert_eq!(convergence_rate(0.1, 0.2, 0.3, 0.3).unwrap(), 0.0);
        assert_eq!(
            convergence_rate(0.1, 0.2, 0.3, 0.0),
            Err(EgdError::InfiniteRate)
        );
        assert!(convergence_rate(0.1, 0.1, 0.3, 0.2).is_err());
    }

    #[test]
    fn rate_table_from_published_means() {
        let rows = rate_table(
            &[0.150, 0.225, 0.300, 0.375],
            &[0.3443, 0.3108, 0.2832, 0.2596],
            0.25,
        )
        .unwrap();
        assert_eq!(rows[0].rate, None);
        assert_eq!(rows.len(), 4);
        assert!((rows[3].error - 0.0096).abs() < 1e-12);
        let exact = rate_table(&[0.15, 0.3], &[0.3, 0.25], 0.25).unwrap();
        assert_eq!(exact[1].rate, Some(f64::INFINITY));
        let single = rate_table(&[0.3], &[0.28], 0.25).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].rate.is_none());
    }

    #[test]
    fn constancy() {
        assert_eq!(eta_constancy(&[(0.0, 0.3), (0.1, 0.3)]), 0.0);
        assert!((eta_constancy(&[(0.0, 0.3), (0.1, 0.25), (0.2, 0.31)]) - 0.05).abs() < 1e-15);
    }

    fn result_with(density: Density, eta_history: Vec<(f64, f64)>) -> SimResult {
        let dt = if eta_history.len() > 1 {
            eta_history[1].0 - eta_history[0].0
        } else {
            1.0
        };
        SimResult {
            samples: Vec::new(),
            eta_history,
            phi_final: Vec::new(),
            final_density: density,
            stationary: true,
            steps_taken: 0,
            dt,
        }
    }

    #[test]
    fn compare_identical_runs() {
        let g = Arc::new(Grid::one_d(4).unwrap());
        let d = Density::from_masses(g, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let r = result_with(d, vec![(0.0, 1.0), (0.5, 2.0)]);
        assert_eq!(compare_runs(&r, &r, CompareMode::Density).unwrap(), 0.0);
        assert_eq!(compare_runs(&r, &r, CompareMode::EtaHistory).unwrap(), 0.0);
    }

    #[test]
    fn compare_restricts_fine_onto_coarse() {
        let coarse =
            Density::from_masses(Arc::new(Grid::one_d(2).unwrap()), vec![0.5, 0.5]).unwrap();
        // Coarse-cell masses 0.4 and 0.6: relative differences 0.1/0.45 and 0.1/0.55.
        let fine = Density::from_masses(
            Arc::new(Grid::one_d(4).unwrap()),
            vec![0.1, 0.3, 0.25, 0.35],
        )
        .unwrap();
        let a = result_with(coarse, vec![(0.0, 1.0), (0.1, 1.0)]);
        let b = result_with(fine, vec![(0.0, 1.0), (0.05, 1.0)]);
        let expected = 100.0 * 0.5 * (0.1 / 0.45 + 0.1 / 0.55);
        assert!((compare_runs(&a, &b, CompareMode::Density).unwrap() - expected).abs() < 1e-12);
        assert!((compare_runs(&b, &a, CompareMode::Density).unwrap() - expected).abs() < 1e-12);

        let g2 = |n| Arc::new(Grid::two_d(n, n).unwrap());
        let c2 = uniform_density(g2(2));
        let f2 = uniform_density(g2(4));
        let (a2, b2) = (result_with(c2, vec![]), result_with(f2, vec![]));
        assert!(compare_runs(&a2, &b2, CompareMode::Density).unwrap() < 1e-12);
        let odd = result_with(uniform_density(Arc::new(Grid::one_d(3).unwrap())), vec![]);
        assert!(matches!(
            compare_runs(&a, &odd, CompareMode::Density),
            Err(EgdError::IncompatibleRuns(_))
        ));
        assert!(matches!(
            compare_runs(&a, &a2, CompareMode::Density),
            Err(EgdError::IncompatibleRuns(_))
        ));
    }

    #[test]
    fn compare_eta_at_coarse_times() {
        let g = Arc::new(Grid::one_d(2).unwrap());
        let d = uniform_density(g);
        let coarse = result_with(d.clone(), vec![(0.0, 1.0), (0.2, 1.0), (0.4, 2.0)]);
        let fine: Vec<(f64, f64)> = (0..7)
            .map(|k| (0.1 * k as f64, if k == 2 { 3.0 } else { 1.0 }))
            .collect();
        let fine = result_with(d, fine);
        // Matches at t = 0, 0.2, 0.4: differences 0, 1 (2/2), 1/1.5.
        let expected = 100.0 * (0.0 + 1.0 + 1.0 / 1.5) / 3.0;
        let got = compare_runs(&coarse, &fine, CompareMode::EtaHistory).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got}");
        let short = result_with(coarse.final_density.clone(), vec![(0.0, 1.0)]);
        assert!(compare_runs(&coarse, &short, CompareMode::EtaHistory).is_err());
    }

    proptest! {
        #[test]
        fn nash_gap_shift_invariant(u in proptest::collection::vec(0.0f64..2.0, 8), shift in -5.0f64..5.0) {
            let grid = Arc::new(Grid::one_d(8).unwrap());
            let d = uniform_density(grid);
            let shifted: Vec<f64> = u.iter().map(|v| v + shift).collect();
            let a = nash_gap(&u, &d, 1e-8).unwrap();
            let b = nash_gap(&shifted, &d, 1e-8).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn rate_symmetry(e1 in 0.01f64..1.0, e2 in 0.01f64..1.0, r1 in 1e-6f64..1.0, r2 in 1e-6f64..1.0) {
            prop_assume!((e1 - e2).abs() > 1e-3);
            let forward = convergence_rate(e1, e2, r1, r2).unwrap();
            // Swapping both pairs leaves the rate unchanged; swapping one negates it.
            let both = convergence_rate(e2, e1, r2, r1).unwrap();
            let one = convergence_rate(e2, e1, r1, r2).unwrap();
            prop_assert!((forward - both).abs() <= 1e-9 * forward.abs().max(1.0));
            prop_assert!((forward + one).abs() <= 1e-9 * forward.abs().max(1.0));
        }

        #[test]
        fn exploration_cost_in_unit_interval(eta_scale in 1.0f64..100.0, chi in 1e-6f64..1e-2, xi in 0.0f64..3.0, eps in 0.01f64..1.0) {
            let (lo, _) = crate::hjb::eta_bounds_quadratic(1.0, eps, chi, xi);
            let e = true_exploration_cost(lo * eta_scale, chi, xi, eps);
            prop_assert!((-1e-12..=1.0).contains(&e));
        }
    }
}
