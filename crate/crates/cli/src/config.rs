//! Experiment files.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use egd_core::dynamics::{InitialCondition, ProtocolSpec, SimConfig};
use egd_core::hjb::{HjbParams, PhiUpdate};
use egd_core::utility::{
    UtilitySpec, UtilityVariant, DEFAULT_RESOURCE_2D_SHIFT, DEFAULT_RESOURCE_C,
    DEFAULT_RESOURCE_SHIFT,
};
use egd_core::Grid;

use crate::expr::Polynomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub grid: GridSection,
    pub time: TimeSection,
    pub protocol: ProtocolSection,
    pub utility: UtilitySection,
    #[serde(default)]
    pub hjb: HjbSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nz: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_stationary_tol")]
    pub stationary_tol: f64,
}

fn default_dt() -> f64 {
    0.005
}

fn default_sample_every() -> usize {
    200
}

fn default_stationary_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Logit,
    Replicator,
    Bnn,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    /// Mixing weight for `pairwise`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiUpdateKind {
    Monotone,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbSection {
    pub delta: f64,
    pub epsilon: f64,
    pub chi: f64,
    pub xi: f64,
    pub relax: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eta_init: f64,
    pub phi_update: PhiUpdateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

impl Default for HjbSection {
    fn default() -> Self {
        let p = HjbParams::default();
        Self {
            delta: p.delta,
            epsilon: p.epsilon,
            chi: p.chi,
            xi: p.xi,
            relax: p.relax,
            tol: p.tol,
            max_iter: p.max_iter,
            eta_init: p.eta_init,
            phi_update: PhiUpdateKind::Monotone,
            damping: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Uniform,
    PdfExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Uniform,
            expr: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Prepended to every file name.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMETERS: [&str; 7] = ["epsilon", "delta", "chi", "xi", "dt", "n", "w"];

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid experiment file {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment files always serialize")
    }

    /// Builds the simulation config, which checks every range.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.sim_config()?;
        cfg.validate().context("[time]/[hjb]/[protocol]")?;
        if cfg.grid.is_2d() && cfg.protocol != ProtocolSpec::Logit {
            bail!("[protocol]: only kind = \"logit\" runs on a 2D grid");
        }
        if cfg.grid.is_2d() != (self.utility.name == "resource2d") {
            bail!(
                "[utility]: `{}` does not match a {} grid",
                self.utility.name,
                if cfg.grid.is_2d() { "2D" } else { "1D" }
            );
        }
        if let Some(sweep) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&sweep.parameter.as_str()) {
                bail!(
                    "[sweep]: unknown parameter `{}` (expected one of {})",
                    sweep.parameter,
                    SWEEP_PARAMETERS.join(", ")
                );
            }
            if sweep.values.is_empty() {
                bail!("[sweep]: values must not be empty");
            }
            for v in &sweep.values {
                self.with_parameter(&sweep.parameter, *v)?
                    .sim_config()?
                    .validate()
                    .with_context(|| format!("[sweep]: {} = {v}", sweep.parameter))?;
            }
        }
        Ok(())
    }

    /// Copy with one sweepable parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 2.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("[sweep]: `{name}` needs integer values of at least 2, got {v}")
            }
        };
        match name {
            "epsilon" => out.hjb.epsilon = value,
            "delta" => out.hjb.delta = value,
            "chi" => out.hjb.chi = value,
            "xi" => out.hjb.xi = value,
            "dt" => out.time.dt = value,
            "n" => {
                let n = as_count(value)?;
                out.grid.n = n;
                if out.grid.nz.is_some() {
                    out.grid.nz = Some(n);
                }
            }
            "w" => {
                if out.protocol.kind != ProtocolKind::Pairwise {
                    bail!("[sweep]: `w` applies only to kind = \"pairwise\"");
                }
                out.protocol.w = Some(value);
            }
            other => bail!("[sweep]: unknown parameter `{other}`"),
        }
        Ok(out)
    }

    fn grid(&self) -> Result<Arc<Grid>> {
        let g = match self.grid.nz {
            Some(nz) => Grid::two_d(self.grid.n, nz),
            None => Grid::one_d(self.grid.n),
        };
        Ok(Arc::new(g.context("[grid]")?))
    }

    fn protocol(&self) -> Result<ProtocolSpec> {
        let p = &self.protocol;
        match (p.kind, p.w) {
            (ProtocolKind::Pairwise, Some(w)) => Ok(ProtocolSpec::Pairwise { w }),
            (ProtocolKind::Pairwise, None) => bail!("[protocol]: kind = \"pairwise\" needs `w`"),
            (_, Some(_)) => bail!("[protocol]: `w` is only used with kind = \"pairwise\""),
            (ProtocolKind::Logit, None) => Ok(ProtocolSpec::Logit),
            (ProtocolKind::Replicator, None) => Ok(ProtocolSpec::replicator()),
            (ProtocolKind::Bnn, None) => Ok(ProtocolSpec::bnn()),
        }
    }

    fn utility(&self, grid: &Grid) -> Result<UtilitySpec> {
        let u = &self.utility;
        let variant = match u.name.as_str() {
            "quadratic" => {
                if u.c.is_some() {
                    bail!("[utility]: `c` does not apply to the quadratic utility");
                }
                UtilityVariant::Quadratic {
                    shift: u.shift.unwrap_or(0.0),
                }
            }
            "resource" => UtilityVariant::Resource {
                c: u.c.unwrap_or(DEFAULT_RESOURCE_C),
                shift: u.shift.unwrap_or(DEFAULT_RESOURCE_SHIFT),
            },
            "resource2d" => UtilityVariant::Resource2D {
                c: u.c.unwrap_or(DEFAULT_RESOURCE_C),
                shift: u.shift.unwrap_or(DEFAULT_RESOURCE_2D_SHIFT),
            },
            other => bail!(
                "[utility]: unknown name `{other}` (expected quadratic, resource or resource2d)"
            ),
        };
        UtilitySpec::new(variant, grid).context("[utility]")
    }

    fn hjb(&self) -> Result<HjbParams> {
        let h = &self.hjb;
        let phi_update = match (h.phi_update, h.damping) {
            (PhiUpdateKind::Monotone, None) => PhiUpdate::Monotone,
            (PhiUpdateKind::Monotone, Some(_)) => {
                bail!("[hjb]: `damping` is only used with phi_update = \"picard\"")
            }
            (PhiUpdateKind::Picard, damping) => PhiUpdate::Picard {
                damping: damping.unwrap_or(1.0),
            },
        };
        Ok(HjbParams {
            delta: h.delta,
            epsilon: h.epsilon,
            chi: h.chi,
            xi: h.xi,
            relax: h.relax,
            tol: h.tol,
            max_iter: h.max_iter,
            eta_init: h.eta_init,
            phi_update,
        })
    }

    fn initial(&self, grid: &Grid) -> Result<InitialCondition> {
        let i = &self.initial;
        match (i.kind, &i.expr) {
            (InitialKind::Uniform, None) => Ok(InitialCondition::Uniform),
            (InitialKind::Uniform, Some(_)) => {
                bail!("[initial]: `expr` is only used with kind = \"pdf_expr\"")
            }
            (InitialKind::PdfExpr, None) => bail!("[initial]: kind = \"pdf_expr\" needs `expr`"),
            (InitialKind::PdfExpr, Some(src)) => {
                let poly = Polynomial::parse(src).map_err(|e| anyhow!("[initial] expr: {e}"))?;
                let values = match grid {
                    Grid::OneD(g) => {
                        if poly.uses_z() {
                            bail!("[initial] expr: `z` is not available on a 1D grid");
                        }
                        g.centers().iter().map(|x| poly.eval(*x, 0.0)).collect()
                    }
                    Grid::TwoD(g) => {
                        let mut v = Vec::with_capacity(g.nx() * g.nz());
                        for z in g.centers_z() {
                            for x in g.centers_x() {
                                v.push(poly.eval(*x, *z));
                            }
                        }
                        v
                    }
                };
                Ok(InitialCondition::Pdf(values))
            }
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let grid = self.grid()?;
        let utility = self.utility(&grid)?;
        let initial = self.initial(&grid)?;
        // Catch bad expressions (negative or zero pdfs) before any run.
        initial.build(grid.clone()).context("[initial]")?;
        let mut cfg = SimConfig::new(grid, self.protocol()?, utility, self.time.t_max);
        cfg.dt = self.time.dt;
        cfg.sample_every = self.time.sample_every;
        cfg.stationary_tol = self.time.stationary_tol;
        cfg.hjb = self.hjb()?;
        cfg.initial = initial;
        Ok(cfg)
    }
}
