//! Scenario files, solver runs and output artifacts.
//!
//! A scenario is a TOML file with a `name`, a `[params]` table holding every
//! model parameter (no defaults), and an optional `[options]` table:
//!
//! ```toml
//! name = "reference"
//!
//! [params]
//! alpha = 0.9
//! beta_s = 0.3
//! # ... every ModelParams field ...
//! horizon_T = 3
//!
//! [options]
//! tolerance = 1e-9
//! oracle = false
//! strict_alpha = true
//! seed = 20241017
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result, Violation};
use crate::model::{Controls, ModelParams, Trajectory};
use crate::oracle::{
    dense_solve, follower_stationarity_check, leader_stationarity_check, CheckOptions, Follower,
};
use crate::report::{OracleSummary, SolveReport, DEFAULT_SEED};
use crate::stationarity::residual_norm;
use crate::sweep::solve_game;

/// CSV column order. The first eleven columns are the public trajectory; the
/// rest carry the leaders' nesting multipliers.
pub const CSV_HEADER: [&str; 17] = [
    "t", "x", "i_s", "i_m", "i_r", "q", "p_s", "p_m", "p_r", "u", "u_prime", "lambda", "mu_r",
    "mu_m", "nu", "w", "y",
];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Residual max-norm accepted as a successful solve.
    pub tolerance: f64,
    /// Also run the dense solve and the stationarity checks.
    pub oracle: bool,
    /// Require `alpha <= 1`.
    pub strict_alpha: bool,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, oracle: false, strict_alpha: true, seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    #[serde(default)]
    pub options: SolverOptions,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mut violations = match self.params.validate(self.options.strict_alpha) {
            Ok(()) => Vec::new(),
            Err(Error::Validation(v)) => v,
            Err(e) => return Err(e),
        };
        if !(self.options.tolerance > 0.0) {
            violations.push(Violation {
                field: "tolerance",
                bound: "(0, inf)",
                value: self.options.tolerance,
            });
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.trajectory.csv", self.name))
    }

    pub fn report_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.report", self.name))
    }
}

/// Parses a scenario. Bounds are checked by [`Scenario::validate`], which
/// [`run`] calls after command-line overrides are applied.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        message: e.to_string().trim_end().to_owned(),
    })?;
    if scenario.name.is_empty() || scenario.name.contains(['/', '\\']) {
        return Err(Error::Parse {
            path: path.to_owned(),
            message: format!("name {:?} must be non-empty and free of path separators", scenario.name),
        });
    }
    Ok(scenario)
}

/// Reads and parses a scenario without bounds checks, so that overrides can
/// be applied before validation.
pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_scenario(&text, path)
}

/// Reads, parses and validates a scenario.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario = read_scenario(path)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Solves a scenario with the sweep and, if requested, cross-checks it.
pub fn run(scenario: &Scenario) -> Result<(Trajectory, SolveReport)> {
    scenario.validate()?;
    let params = &scenario.params;
    let (traj, mut report) = solve_game(params)?;
    report.seed = scenario.options.seed;
    if scenario.options.oracle {
        let dense = dense_solve(params)?;
        let opts = CheckOptions { seed: scenario.options.seed, ..CheckOptions::default() };
        report.oracle = Some(OracleSummary {
            delta: traj.max_abs_diff(&dense),
            dense_residual_max: residual_norm(&dense, params)?.max,
            follower_check_retailer: follower_stationarity_check(&traj, params, Follower::Retailer, &opts)?,
            follower_check_manufacturer: follower_stationarity_check(
                &traj,
                params,
                Follower::Manufacturer,
                &opts,
            )?,
            leader_check: leader_stationarity_check(&traj, params, &opts)?,
        });
    }
    Ok((traj, report))
}

/// 17 significant digits; negative zero is written as zero.
pub fn format_number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_owned(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_owned(), source },
        other => Error::Parse { path: path.to_owned(), message: format!("{other:?}") },
    }
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    traj.check_shape()?;
    let horizon = traj.horizon();
    let mut w = csv::Writer::from_writer(Vec::new());
    let n = &traj.nesting;
    let to_csv = |e: csv::Error| Error::Shape(e.to_string());
    w.write_record(CSV_HEADER).map_err(to_csv)?;
    for k in 0..=horizon {
        let f = |v: f64| format_number(v);
        let period = |v: &[f64]| v.get(k).copied().map(f).unwrap_or_default();
        let c = traj.controls.get(k);
        let ctrl = |get: fn(&Controls) -> f64| c.map(|c| f(get(c))).unwrap_or_default();
        let row = [
            (k + 1).to_string(),
            f(traj.x[k]),
            ctrl(|c| c.i_s),
            ctrl(|c| c.i_m),
            ctrl(|c| c.i_r),
            period(&traj.q),
            f(traj.p_s[k]),
            f(traj.p_m[k]),
            f(traj.p_r[k]),
            f(traj.u[k]),
            f(traj.u_prime[k]),
            period(&n.lambda),
            period(&n.mu_r),
            period(&n.mu_m),
            period(&n.nu),
            f(n.w[k]),
            f(n.y[k]),
        ];
        w.write_record(&row).map_err(to_csv)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Shape(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn emit_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, trajectory_csv(traj)?).map_err(io_err(path))
}

/// Reads a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse { path: path.to_owned(), message: "unexpected CSV header".into() });
    }
    let rows: Vec<csv::StringRecord> =
        reader.records().collect::<std::result::Result<_, _>>().map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        return Err(Error::Parse { path: path.to_owned(), message: "no data rows".into() });
    }
    let horizon = rows.len() - 1;
    let mut traj = Trajectory::zeros(horizon);
    let bad = |row: usize, col: &str| Error::Parse {
        path: path.to_owned(),
        message: format!("row {}: bad value in column {col}", row + 1),
    };
    for (k, row) in rows.iter().enumerate() {
        let get = |col: usize| -> Result<f64> {
            row.get(col).and_then(|s| s.parse().ok()).ok_or_else(|| bad(k, CSV_HEADER[col]))
        };
        traj.x[k] = get(1)?;
        traj.p_s[k] = get(6)?;
        traj.p_m[k] = get(7)?;
        traj.p_r[k] = get(8)?;
        traj.u[k] = get(9)?;
        traj.u_prime[k] = get(10)?;
        traj.nesting.w[k] = get(15)?;
        traj.nesting.y[k] = get(16)?;
        if k < horizon {
            traj.controls[k] = Controls::new(get(2)?, get(3)?, get(4)?);
            traj.q[k] = get(5)?;
            traj.nesting.lambda[k] = get(11)?;
            traj.nesting.mu_r[k] = get(12)?;
            traj.nesting.mu_m[k] = get(13)?;
            traj.nesting.nu[k] = get(14)?;
        }
    }
    Ok(traj)
}

/// `key: value` lines in a fixed order. Oracle fields appear only when the
/// oracle ran.
pub fn format_report(report: &SolveReport, scenario: &Scenario) -> String {
    let f = format_number;
    let status = if report.residual_max <= scenario.options.tolerance {
        "ok"
    } else {
        "residual_above_tolerance"
    };
    let mut out = String::new();
    let mut line = |key: &str, value: String| {
        let _ = writeln!(out, "{key}: {value}");
    };
    line("scenario", scenario.name.clone());
    line("solver_path", report.solver_path.as_str().into());
    line("horizon_T", report.horizon.to_string());
    line("seed", report.seed.to_string());
    line("tolerance", f(scenario.options.tolerance));
    line("status", status.into());
    line("residual_max", f(report.residual_max));
    line("residual_rms", f(report.residual_rms));
    line("objective_supplier", f(report.objectives.supplier));
    line("objective_manufacturer", f(report.objectives.manufacturer));
    line("objective_retailer", f(report.objectives.retailer));
    line("convexity_warning", report.convexity_warning.to_string());
    line("negative_investment_warning", report.negative_investment_warning.to_string());
    line("follower_consistency", f(report.follower_consistency));
    if let Some(o) = &report.oracle {
        line("oracle_delta", f(o.delta));
        line("oracle_dense_residual_max", f(o.dense_residual_max));
        line("oracle_follower_check_retailer", f(o.follower_check_retailer));
        line("oracle_follower_check_manufacturer", f(o.follower_check_manufacturer));
        line("oracle_leader_check", f(o.leader_check));
    }
    out
}

pub fn emit_report(report: &SolveReport, scenario: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, format_report(report, scenario)).map_err(io_err(path))
}
