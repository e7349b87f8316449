//! Utility families evaluated at cell centers.
//!
//! * `Quadratic`: `U(x) = ∫ (x − y)² μ(dy) + shift`
//! * `Resource`: `U(x) = (f(m) − c)·x + shift`
//! * `Resource2D`: `U(x, z) = (z·f(m_x) − c)·x + shift`
//!
//! with `f(v) = 1/sqrt(|v|)` and `m` the mean action. Every evaluation is
//! checked against `0 ≤ U ≤ u_max`, the bound the HJB solvers rely on.

use std::fmt;
use std::sync::Arc;

use crate::error::{EgdError, Result};
use crate::grid::{mean_action, Density, Grid};

pub const DEFAULT_RESOURCE_SHIFT: f64 = 1.5;
pub const DEFAULT_RESOURCE_C: f64 = 2.0;
/// `U₃` reaches `shift − c` at `z = 0`, `x = 1`, so its shift must exceed `c`.
pub const DEFAULT_RESOURCE_2D_SHIFT: f64 = 2.5;

type UtilityFn = dyn Fn(&Density) -> Vec<f64> + Send + Sync;

/// A user-supplied utility with a declared upper bound.
#[derive(Clone)]
pub struct CustomUtility {
    name: String,
    func: Arc<UtilityFn>,
}

impl CustomUtility {
    pub fn new(
        name: impl Into<String>,
        func: impl Fn(&Density) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomUtility")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomUtility {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.func, &other.func)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityVariant {
    Quadratic { shift: f64 },
    Resource { c: f64, shift: f64 },
    Resource2D { c: f64, shift: f64 },
    Custom(CustomUtility),
}

impl UtilityVariant {
    pub fn name(&self) -> &str {
        match self {
            UtilityVariant::Quadratic { .. } => "quadratic",
            UtilityVariant::Resource { .. } => "resource",
            UtilityVariant::Resource2D { .. } => "resource2d",
            UtilityVariant::Custom(c) => c.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    pub variant: UtilityVariant,
    pub u_max: f64,
}

impl UtilitySpec {
    /// Builds a spec with the default bound for `grid`.
    ///
    /// The resource bound clamps the mean action to the first cell center,
    /// the smallest mean any density on the grid can have.
    pub fn new(variant: UtilityVariant, grid: &Grid) -> Result<Self> {
        let u_max = match &variant {
            UtilityVariant::Quadratic { shift } => 1.0 + shift,
            UtilityVariant::Resource { c, shift } | UtilityVariant::Resource2D { c, shift } => {
                if !(*c > 0.0) {
                    return Err(EgdError::InvalidParams(format!(
                        "c must be positive, got {c}"
                    )));
                }
                let m_min = grid.x_center(0);
                shift + (resource_f(m_min) - c).max(0.0)
            }
            UtilityVariant::Custom(_) => {
                return Err(EgdError::InvalidParams(
                    "custom utilities need an explicit bound; use UtilitySpec::custom".into(),
                ))
            }
        };
        Ok(Self { variant, u_max })
    }

    pub fn custom(utility: CustomUtility, u_max: f64) -> Self {
        Self {
            variant: UtilityVariant::Custom(utility),
            u_max,
        }
    }

    pub fn quadratic(grid: &Grid) -> Result<Self> {
        Self::new(UtilityVariant::Quadratic { shift: 0.0 }, grid)
    }

    pub fn resource(grid: &Grid) -> Result<Self> {
        Self::new(
            UtilityVariant::Resource {
                c: DEFAULT_RESOURCE_C,
                shift: DEFAULT_RESOURCE_SHIFT,
            },
            grid,
        )
    }

    pub fn resource_2d(grid: &Grid) -> Result<Self> {
        Self::new(
            UtilityVariant::Resource2D {
                c: DEFAULT_RESOURCE_C,
                shift: DEFAULT_RESOURCE_2D_SHIFT,
            },
            grid,
        )
    }

    pub fn with_u_max(mut self, u_max: f64) -> Self {
        self.u_max = u_max;
        self
    }

    pub fn name(&self) -> &str {
        self.variant.name()
    }

    pub fn supports_2d(&self) -> bool {
        matches!(
            self.variant,
            UtilityVariant::Resource2D { .. } | UtilityVariant::Custom(_)
        )
    }
}

/// Harvest return `f(v) = 1/sqrt(|v|)`.
pub fn resource_f(v: f64) -> f64 {
    1.0 / v.abs().sqrt()
}

fn mean_for_resource(density: &Density) -> Result<f64> {
    let m = mean_action(density);
    if m == 0.0 {
        return Err(EgdError::DegenerateMean);
    }
    Ok(m)
}

fn mismatch(spec: &UtilitySpec, reason: &str) -> EgdError {
    EgdError::UtilityMismatch {
        utility: spec.name().to_string(),
        reason: reason.to_string(),
    }
}

pub fn eval_utility_1d(spec: &UtilitySpec, density: &Density) -> Result<Vec<f64>> {
    let grid = density
        .grid()
        .as_1d()
        .ok_or_else(|| mismatch(spec, "density is not on a 1D grid"))?;
    let x = grid.centers();
    let mu = density.masses();
    let values = match &spec.variant {
        UtilityVariant::Quadratic { shift } => x
            .iter()
            .map(|xi| {
                x.iter()
                    .zip(mu)
                    .map(|(xj, m)| (xi - xj) * (xi - xj) * m)
                    .sum::<f64>()
                    + shift
            })
            .collect(),
        UtilityVariant::Resource { c, shift } => {
            let slope = resource_f(mean_for_resource(density)?) - c;
            x.iter().map(|xi| slope * xi + shift).collect()
        }
        UtilityVariant::Custom(custom) => (custom.func)(density),
        UtilityVariant::Resource2D { .. } => return Err(mismatch(spec, "2D utility on a 1D grid")),
    };
    validate(spec, values, density.grid().n_cells())
}

pub fn eval_utility_2d(spec: &UtilitySpec, density: &Density) -> Result<Vec<f64>> {
    let grid = density
        .grid()
        .as_2d()
        .ok_or_else(|| mismatch(spec, "density is not on a 2D grid"))?;
    let values = match &spec.variant {
        UtilityVariant::Resource2D { c, shift } => {
            let fm = resource_f(mean_for_resource(density)?);
            let mut out = Vec::with_capacity(grid.nx() * grid.nz());
            for z in grid.centers_z() {
                for x in grid.centers_x() {
                    out.push((z * fm - c) * x + shift);
                }
            }
            out
        }
        UtilityVariant::Custom(custom) => (custom.func)(density),
        _ => return Err(mismatch(spec, "1D utility on a 2D grid")),
    };
    validate(spec, values, density.grid().n_cells())
}

/// Dispatches on the density's grid dimension.
pub fn eval_utility(spec: &UtilitySpec, density: &Density) -> Result<Vec<f64>> {
    if density.grid().is_2d() {
        eval_utility_2d(spec, density)
    } else {
        eval_utility_1d(spec, density)
    }
}

fn validate(spec: &UtilitySpec, values: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if values.len() != n {
        return Err(mismatch(
            spec,
            &format!("returned {} values for {n} cells", values.len()),
        ));
    }
    for (cell, &value) in values.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(EgdError::ShiftTooSmall { cell, value });
        }
        if value > spec.u_max {
            return Err(EgdError::BoundExceeded {
                cell,
                value,
                u_max: spec.u_max,
            });
        }
    }
    Ok(values)
}

/// Exact `(min, max)` of a nonempty sequence.
pub fn utility_range(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "utility_range of an empty sequence");
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}
