//! CSV artifacts. Numbers use 17 significant digits in scientific notation
//! and lines end in `\n`, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use egd_core::diagnostics::RateTableRow;
use egd_core::dynamics::SimResult;
use egd_core::grid::mean_action;
use egd_core::Grid;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn density_csv(result: &SimResult) -> String {
    let mut out = String::new();
    let grid = result.final_density.grid();
    match grid {
        Grid::OneD(_) => out.push_str("t,x,pdf\n"),
        Grid::TwoD(_) => out.push_str("t,x,z,pdf\n"),
    }
    for sample in &result.samples {
        let pdf = sample.density.pdf();
        match grid {
            Grid::OneD(g) => {
                for (x, p) in g.centers().iter().zip(&pdf) {
                    writeln!(out, "{},{},{}", num(sample.t), num(*x), num(*p)).unwrap();
                }
            }
            Grid::TwoD(g) => {
                for (k, p) in pdf.iter().enumerate() {
                    let (i, j) = g.split(k);
                    writeln!(
                        out,
                        "{},{},{},{}",
                        num(sample.t),
                        num(g.centers_x()[i]),
                        num(g.centers_z()[j]),
                        num(*p)
                    )
                    .unwrap();
                }
            }
        }
    }
    out
}

/// `exploration_costs` holds `E_t` per entry of the η history for
/// quadratic-cost runs.
pub fn eta_csv(result: &SimResult, exploration_costs: Option<&[f64]>) -> String {
    let mut out = String::new();
    match exploration_costs {
        Some(costs) => {
            out.push_str("t,eta,E_t\n");
            for ((t, eta), e) in result.eta_history.iter().zip(costs) {
                writeln!(out, "{},{},{}", num(*t), num(*eta), num(*e)).unwrap();
            }
        }
        None => {
            out.push_str("t,eta\n");
            for (t, eta) in &result.eta_history {
                writeln!(out, "{},{}", num(*t), num(*eta)).unwrap();
            }
        }
    }
    out
}

pub const SUMMARY_HEADER: &str = "mean_action,steps,stationary,nash_gap,final_eta";

pub fn summary_fields(result: &SimResult) -> String {
    format!(
        "{},{},{},{},{}",
        num(mean_action(&result.final_density)),
        result.steps_taken,
        result.stationary,
        num(result.final_sample().nash_gap),
        num(result.final_eta())
    )
}

pub fn summary_csv(result: &SimResult) -> String {
    format!("{SUMMARY_HEADER}\n{}\n", summary_fields(result))
}

pub fn table1_csv(rows: &[RateTableRow]) -> String {
    let mut out = String::from("I,epsilon,average,error,rate\n");
    for r in rows {
        let rate = r.rate.map(num).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.level,
            num(r.epsilon),
            num(r.mean),
            num(r.error),
            rate
        )
        .unwrap();
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.25), "2.5000000000000000e-1");
        assert_eq!(num(-1.0 / 3.0), "-3.3333333333333331e-1");
        assert_eq!(num(0.0), "0.0000000000000000e0");
        let v = 0.1 + 0.2;
        assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn table_layout() {
        let rows = egd_core::diagnostics::rate_table(&[0.15, 0.3], &[0.35, 0.3], 0.25).unwrap();
        let csv = table1_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "I,epsilon,average,error,rate");
        assert!(lines[1].ends_with(','));
        assert!(lines[2].starts_with("2,2.9999999999999999e-1,"));
        assert!(!csv.contains('\r'));
    }
}
