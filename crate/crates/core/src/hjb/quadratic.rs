use super::{HjbParams, HjbSolution, LambdaWeights, PhiUpdate};
use crate::error::{EgdError, Result};

/// Suffix sums of `λ`, `λΦ`, `λΦ²` over cells sorted by `Φ`, so that
/// `Σ_j λ_j (Φ_j − y)₊²` costs one binary search.
struct UpperTail {
    sorted: Vec<f64>,
    // Entry k sums sorted positions k..n; entry n is zero.
    w: Vec<f64>,
    wv: Vec<f64>,
    wv2: Vec<f64>,
}

impl UpperTail {
    fn new(phi: &[f64], lambda: &[f64]) -> Self {
        let n = phi.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| phi[a].total_cmp(&phi[b]));
        let sorted: Vec<f64> = order.iter().map(|&k| phi[k]).collect();
        let mut w = vec![0.0; n + 1];
        let mut wv = vec![0.0; n + 1];
        let mut wv2 = vec![0.0; n + 1];
        for k in (0..n).rev() {
            let (v, l) = (sorted[k], lambda[order[k]]);
            w[k] = w[k + 1] + l;
            wv[k] = wv[k + 1] + l * v;
            wv2[k] = wv2[k + 1] + l * v * v;
        }
        Self { sorted, w, wv, wv2 }
    }

    /// `(F(y), Σ_{Φ_j > y} λ_j (Φ_j − y))` with `F(y) = Σ_j λ_j (Φ_j − y)₊²`.
    fn eval(&self, y: f64) -> (f64, f64) {
        let k = self.sorted.partition_point(|v| *v <= y);
        let first = self.wv[k] - y * self.w[k];
        let sq = self.wv2[k] - 2.0 * y * self.wv[k] + y * y * self.w[k];
        (sq.max(0.0), first.max(0.0))
    }
}

/// Root of `y − c·F(y) = u` where `F` is the upper-tail sum. The left side is
/// concave and increasing, so Newton started at `u` (where it is `≤ 0`)
/// approaches the root monotonically from below.
fn solve_cell(tail: &UpperTail, c: f64, u: f64) -> f64 {
    let mut y = u;
    for _ in 0..100 {
        let (f, df) = tail.eval(y);
        let h = y - c * f - u;
        if h >= 0.0 {
            break;
        }
        let step = h / (1.0 + 2.0 * c * df);
        let next = y - step;
        if next <= y {
            break;
        }
        y = next;
    }
    y
}

/// `Σ_{i,j} (Φ_j − Φ_i)₊² λ_i λ_j`.
fn pair_sum(tail: &UpperTail, phi: &[f64], lambda: &[f64]) -> f64 {
    phi.iter()
        .zip(lambda)
        .map(|(p, l)| l * tail.eval(*p).0)
        .sum()
}

fn pair_sum_direct(phi: &[f64], lambda: &[f64]) -> f64 {
    let mut total = 0.0;
    for (pi, li) in phi.iter().zip(lambda) {
        for (pj, lj) in phi.iter().zip(lambda) {
            let d = (pj - pi).max(0.0);
            total += d * d * li * lj;
        }
    }
    total
}

fn picard_phi(u: &[f64], phi: &[f64], lambda: &[f64], c: f64, damping: f64) -> Vec<f64> {
    u.iter()
        .zip(phi)
        .map(|(ui, pi)| {
            let tail: f64 = phi
                .iter()
                .zip(lambda)
                .map(|(pj, lj)| {
                    let d = (pj - pi).max(0.0);
                    d * d * lj
                })
                .sum();
            (1.0 - damping) * pi + damping * (ui + c * tail)
        })
        .collect()
}

/// Solves the quadratic-cost system for `(Φ, η)`:
///
/// ```text
/// Φ_i = U_i + Σ_j (Φ_j − Φ_i)₊² λ_j / (2ηδ)
/// ε   = Σ_{i,j} (Φ_j − Φ_i)₊² λ_i λ_j / (2η²) + χ / η^{2+ξ}
/// ```
///
/// starting from `Φ = U`, `η = params.eta_init`. The η update is
/// `η ← r·η + (1 − r)·sqrt(S/(2ε) + χ/(ε·η^ξ))`, whose fixed point satisfies
/// the constraint exactly. Stops once the sup change of `Φ` and the change of
/// `η` are both below `params.tol`.
pub fn solve_hjb_quadratic(
    u_values: &[f64],
    lambda: &LambdaWeights,
    params: &HjbParams,
) -> Result<HjbSolution> {
    params.validate()?;
    if !(params.chi > 0.0) {
        return Err(EgdError::InvalidParams(
            "the quadratic-cost solver needs chi > 0".into(),
        ));
    }
    let lam = lambda.weights();
    if lam.len() != u_values.len() {
        return Err(EgdError::InvalidParams(format!(
            "{} utility values but {} lambda weights",
            u_values.len(),
            lam.len()
        )));
    }
    if let Some(v) = u_values.iter().find(|v| !(**v >= 0.0)) {
        return Err(EgdError::InvalidParams(format!(
            "utility values must be nonnegative, found {v}"
        )));
    }

    let HjbParams {
        delta,
        epsilon,
        chi,
        xi,
        relax,
        tol,
        max_iter,
        eta_init,
        phi_update,
    } = *params;

    let mut phi = u_values.to_vec();
    let mut eta = eta_init;
    let mut err = f64::INFINITY;
    for n in 0..max_iter {
        let c = 1.0 / (2.0 * eta * delta);
        let (next_phi, s) = match phi_update {
            PhiUpdate::Monotone => {
                let tail = UpperTail::new(&phi, lam);
                let next: Vec<f64> = u_values
                    .iter()
                    .map(|&ui| solve_cell(&tail, c, ui))
                    .collect();
                (next, pair_sum(&tail, &phi, lam))
            }
            PhiUpdate::Picard { damping } => (
                picard_phi(u_values, &phi, lam, c, damping),
                pair_sum_direct(&phi, lam),
            ),
        };
        let radicand = s / (2.0 * epsilon) + chi / (epsilon * eta.powf(xi));
        let next_eta = relax * eta + (1.0 - relax) * radicand.sqrt();

        let dphi = phi
            .iter()
            .zip(&next_phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        err = dphi.max((next_eta - eta).abs());
        phi = next_phi;
        eta = next_eta;
        if !err.is_finite() || !eta.is_finite() || eta <= 0.0 {
            break;
        }
        if err <= tol {
            return Ok(HjbSolution {
                phi,
                eta,
                iterations: n + 1,
                residual: err,
                eta_start: eta_init,
            });
        }
    }
    Err(EgdError::MaxIterExceeded {
        iterations: max_iter,
        residual: err,
    })
}

/// Analytic bracket for η at any converged quadratic-cost solve.
///
/// `lo = (χ/ε)^{1/(2+ξ)}` follows from the regularization term alone. The
/// upper bound uses `Σ(Φ_j − Φ_i)₊² λ_i λ_j ≤ Ū²`; at `ξ = 0` it is
/// `sqrt((Ū² + χ)/ε)` and in general `sqrt(Ū²/ε + lo²)`.
pub fn eta_bounds_quadratic(u_max: f64, epsilon: f64, chi: f64, xi: f64) -> (f64, f64) {
    let lo = (chi / epsilon).powf(1.0 / (2.0 + xi));
    let hi = (u_max * u_max / epsilon + lo * lo).sqrt();
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticResiduals {
    /// `max_i |Φ_i − U_i − Σ_j (Φ_j − Φ_i)₊² λ_j / (2ηδ)|`
    pub hjb: f64,
    /// `|Σ (Φ_j − Φ_i)₊² λ_i λ_j / (2η²) + χ/η^{2+ξ} − ε|`
    pub constraint: f64,
}

/// Plugs `(Φ, η)` back into both equations using direct double sums.
pub fn quadratic_residuals(
    u_values: &[f64],
    lambda: &LambdaWeights,
    params: &HjbParams,
    phi: &[f64],
    eta: f64,
) -> QuadraticResiduals {
    let lam = lambda.weights();
    let c = 1.0 / (2.0 * eta * params.delta);
    let hjb = picard_phi(u_values, phi, lam, c, 1.0)
        .iter()
        .zip(phi)
        .map(|(rhs, p)| (rhs - p).abs())
        .fold(0.0, f64::max);
    let s = pair_sum_direct(phi, lam);
    let constraint =
        (s / (2.0 * eta * eta) + params.chi / eta.powf(2.0 + params.xi) - params.epsilon).abs();
    QuadraticResiduals { hjb, constraint }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(delta: f64, epsilon: f64, chi: f64, xi: f64) -> HjbParams {
        HjbParams {
            delta,
            epsilon,
            chi,
            xi,
            ..HjbParams::default()
        }
    }

    fn uniform_lambda(n: usize) -> LambdaWeights {
        LambdaWeights::from_weights(vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn constant_utility_reduces_to_regularization() {
        let lam = LambdaWeights::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let sol = solve_hjb_quadratic(&[1.5; 4], &lam, &params(1.0, 0.1, 1e-5, 2.0)).unwrap();
        assert!(sol.phi.iter().all(|p| *p == 1.5));
        assert!((sol.eta - 0.1).abs() < 1e-10);

        let sol = solve_hjb_quadratic(&[1.5; 4], &lam, &params(1.0, 0.1, 1e-5, 0.0)).unwrap();
        assert!((sol.eta - 0.01).abs() < 1e-10);
    }

    #[test]
    fn unregularized_is_rejected() {
        let err = solve_hjb_quadratic(&[0.0, 1.0], &uniform_lambda(2), &params(1.0, 0.1, 0.0, 0.0));
        assert!(matches!(err, Err(EgdError::InvalidParams(_))));
    }

    #[test]
    fn two_cell_instance_matches_the_algebraic_system() {
        // With U = (0, 1) and λ = (1/2, 1/2), only cell 0 sees a gain:
        //   Φ_1 = 1,  Φ_0 = (1 − Φ_0)² / (4ηδ),
        //   ε = (1 − Φ_0)² / (8η²) + χ/η².
        // Oracle: nested bisection on η (outer) and Φ_0 (inner).
        let (delta, epsilon, chi) = (10.0, 0.1, 1e-5);
        let phi0_of = |eta: f64| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid - (1.0 - mid).powi(2) / (4.0 * eta * delta) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let cost = |eta: f64| {
            let p = phi0_of(eta);
            (1.0 - p).powi(2) / (8.0 * eta * eta) + chi / (eta * eta) - epsilon
        };
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cost(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eta_ref = 0.5 * (lo + hi);
        let phi_ref = phi0_of(eta_ref);

        let sol = solve_hjb_quadratic(
            &[0.0, 1.0],
            &uniform_lambda(2),
            &params(delta, epsilon, chi, 0.0),
        )
        .unwrap();
        assert!(
            (sol.eta - eta_ref).abs() < 1e-8,
            "{} vs {}",
            sol.eta,
            eta_ref
        );
        assert!((sol.phi[0] - phi_ref).abs() < 1e-8);
        assert!((sol.phi[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_and_picard_agree_for_large_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.5)).collect();
        let lam = uniform_lambda(12);
        let mut p = params(50.0, 0.2, 1e-4, 1.0);
        let a = solve_hjb_quadratic(&u, &lam, &p).unwrap();
        p.phi_update = PhiUpdate::Picard { damping: 1.0 };
        let b = solve_hjb_quadratic(&u, &lam, &p).unwrap();
        assert!((a.eta - b.eta).abs() < 1e-8);
        for (x, y) in a.phi.iter().zip(&b.phi) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn undamped_picard_can_cycle_at_small_delta() {
        // The textbook update oscillates here; the monotone sweep does not.
        let n = 250;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let u: Vec<f64> = x.iter().map(|x| (2f64.sqrt() - 2.0) * x + 1.5).collect();
        let lam = uniform_lambda(n);
        let mut p = params(1.0, 0.375, 1e-5, 2.0);
        p.max_iter = 2000;
        let good = solve_hjb_quadratic(&u, &lam, &p).unwrap();
        let r = quadratic_residuals(&u, &lam, &p, &good.phi, good.eta);
        assert!(r.hjb < 1e-9 && r.constraint < 1e-9, "{r:?}");
        p.phi_update = PhiUpdate::Picard { damping: 1.0 };
        assert!(matches!(
            solve_hjb_quadratic(&u, &lam, &p),
            Err(EgdError::MaxIterExceeded { .. })
        ));
    }

    #[test]
    fn bounds_examples() {
        let (lo, _) = eta_bounds_quadratic(1.0, 0.1, 1e-5, 0.0);
        assert!((lo - 0.01).abs() < 1e-15);
        let (_, hi) = eta_bounds_quadratic(1.0, 0.1, 1e-5, 0.0);
        assert!((hi - (1.00001f64 / 0.1).sqrt()).abs() < 1e-12);
        assert!((hi - 3.1623).abs() < 1e-4);
    }

    #[test]
    fn random_solves_respect_bounds_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..=16);
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let lam = LambdaWeights::from_weights(raw.iter().map(|v| v / total).collect()).unwrap();
            let p = params(
                rng.gen_range(1.0..20.0),
                rng.gen_range(0.05..0.5),
                1e-5,
                0.0,
            );
            let sol = solve_hjb_quadratic(&u, &lam, &p).unwrap();
            let (lo, hi) = eta_bounds_quadratic(1.0, p.epsilon, p.chi, p.xi);
            assert!(sol.eta >= lo * (1.0 - 1e-8) && sol.eta <= hi);
            assert!(sol.phi.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            for (p_i, u_i) in sol.phi.iter().zip(&u) {
                assert!(p_i >= u_i);
            }
            let r = quadratic_residuals(&u, &lam, &p, &sol.phi, sol.eta);
            assert!(r.hjb <= 1e-9 && r.constraint <= 1e-9, "{r:?}");
        }
    }

    #[test]
    fn myopic_limit_collapses_to_utility() {
        let u = [0.2, 1.0, 0.6, 0.0];
        let lam = uniform_lambda(4);
        let p = params(1e8, 0.1, 1e-5, 0.0);
        let sol = solve_hjb_quadratic(&u, &lam, &p).unwrap();
        let (lo, _) = eta_bounds_quadratic(1.0, p.epsilon, p.chi, p.xi);
        let bound = 1.0 / (2.0 * lo * p.delta);
        let gap = sol
            .phi
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= bound, "{gap} > {bound}");
    }

    #[test]
    fn upper_tail_matches_direct_sum() {
        let phi = [0.3, 1.2, 0.3, 0.9, 0.0];
        let lam = [0.1, 0.2, 0.3, 0.25, 0.15];
        let tail = UpperTail::new(&phi, &lam);
        for y in [-0.1, 0.0, 0.3, 0.5, 0.9, 1.3] {
            let direct: f64 = phi
                .iter()
                .zip(&lam)
                .map(|(p, l)| l * (p - y).max(0.0).powi(2))
                .sum();
            assert!((tail.eval(y).0 - direct).abs() < 1e-15);
        }
        assert!((pair_sum(&tail, &phi, &lam) - pair_sum_direct(&phi, &lam)).abs() < 1e-15);
    }
}
