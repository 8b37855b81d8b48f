//! Python bindings: `import csrgame`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use csr_game::model::{self, Controls, Player};
use csr_game::oracle::{self, CheckOptions, Follower};
use csr_game::report::DEFAULT_SEED;
use csr_game::{stationarity, sweep};

fn to_py(e: csr_game::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_player(name: &str) -> PyResult<Player> {
    match name {
        "supplier" => Ok(Player::Supplier),
        "manufacturer" => Ok(Player::Manufacturer),
        "retailer" => Ok(Player::Retailer),
        _ => Err(PyValueError::new_err(format!("unknown player {name:?}"))),
    }
}

#[pyclass(name = "ModelParams", get_all, set_all)]
#[allow(non_snake_case)]
pub struct PyModelParams {
    alpha: f64,
    beta_s: f64,
    beta_m: f64,
    beta_r: f64,
    tau: f64,
    theta: f64,
    delta_s: f64,
    delta_m: f64,
    delta_r: f64,
    d: f64,
    d_hat: f64,
    a: f64,
    b: f64,
    v: f64,
    z: f64,
    c: f64,
    x1: f64,
    horizon_T: usize,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (*, alpha, beta_s, beta_m, beta_r, tau, theta, delta_s, delta_m, delta_r,
                        d, d_hat, a, b, v, z, c, x1, horizon_T))]
    #[allow(clippy::too_many_arguments, non_snake_case)]
    fn new(
        alpha: f64,
        beta_s: f64,
        beta_m: f64,
        beta_r: f64,
        tau: f64,
        theta: f64,
        delta_s: f64,
        delta_m: f64,
        delta_r: f64,
        d: f64,
        d_hat: f64,
        a: f64,
        b: f64,
        v: f64,
        z: f64,
        c: f64,
        x1: f64,
        horizon_T: usize,
    ) -> Self {
        Self {
            alpha, beta_s, beta_m, beta_r, tau, theta, delta_s, delta_m, delta_r,
            d, d_hat, a, b, v, z, c, x1, horizon_T,
        }
    }

    #[pyo3(signature = (strict_alpha = true))]
    fn validate(&self, strict_alpha: bool) -> PyResult<()> {
        self.core().validate(strict_alpha).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.core())
    }
}

impl PyModelParams {
    fn core(&self) -> model::ModelParams {
        model::ModelParams {
            alpha: self.alpha,
            beta_s: self.beta_s,
            beta_m: self.beta_m,
            beta_r: self.beta_r,
            tau: self.tau,
            theta: self.theta,
            delta_s: self.delta_s,
            delta_m: self.delta_m,
            delta_r: self.delta_r,
            d: self.d,
            d_hat: self.d_hat,
            a: self.a,
            b: self.b,
            v: self.v,
            z: self.z,
            c: self.c,
            x1: self.x1,
            horizon: self.horizon_T,
        }
    }
}

/// Solved path. Series are 0-based lists; index `k` is period `k + 1`.
#[pyclass(name = "Trajectory")]
pub struct PyTrajectory {
    inner: model::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }
    #[getter]
    fn i_s(&self) -> Vec<f64> {
        self.inner.controls.iter().map(|c| c.i_s).collect()
    }
    #[getter]
    fn i_m(&self) -> Vec<f64> {
        self.inner.controls.iter().map(|c| c.i_m).collect()
    }
    #[getter]
    fn i_r(&self) -> Vec<f64> {
        self.inner.controls.iter().map(|c| c.i_r).collect()
    }
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.clone()
    }
    #[getter]
    fn p_s(&self) -> Vec<f64> {
        self.inner.p_s.clone()
    }
    #[getter]
    fn p_m(&self) -> Vec<f64> {
        self.inner.p_m.clone()
    }
    #[getter]
    fn p_r(&self) -> Vec<f64> {
        self.inner.p_r.clone()
    }

    fn max_abs_diff(&self, other: &PyTrajectory) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }

    fn objective(&self, player: &str, params: &PyModelParams) -> PyResult<f64> {
        model::total_objective(parse_player(player)?, &self.inner, &params.core()).map_err(to_py)
    }
}

#[pyclass(name = "SolveReport", get_all)]
pub struct PySolveReport {
    solver_path: &'static str,
    horizon: usize,
    residual_max: f64,
    residual_rms: f64,
    objective_supplier: f64,
    objective_manufacturer: f64,
    objective_retailer: f64,
    convexity_warning: bool,
    negative_investment_warning: bool,
    follower_consistency: f64,
}

/// Solves the game with the backward sweep; returns `(trajectory, report)`.
#[pyfunction]
fn solve_game(params: &PyModelParams) -> PyResult<(PyTrajectory, PySolveReport)> {
    let (traj, r) = sweep::solve_game(&params.core()).map_err(to_py)?;
    let report = PySolveReport {
        solver_path: r.solver_path.as_str(),
        horizon: r.horizon,
        residual_max: r.residual_max,
        residual_rms: r.residual_rms,
        objective_supplier: r.objectives.supplier,
        objective_manufacturer: r.objectives.manufacturer,
        objective_retailer: r.objectives.retailer,
        convexity_warning: r.convexity_warning,
        negative_investment_warning: r.negative_investment_warning,
        follower_consistency: r.follower_consistency,
    };
    Ok((PyTrajectory { inner: traj }, report))
}

/// Solves the assembled stationarity system by dense LU.
#[pyfunction]
fn dense_solve(params: &PyModelParams) -> PyResult<PyTrajectory> {
    oracle::dense_solve(&params.core()).map(|inner| PyTrajectory { inner }).map_err(to_py)
}

#[pyfunction]
fn optimal_quantity(params: &PyModelParams) -> PyResult<f64> {
    model::optimal_quantity(&params.core()).map_err(to_py)
}

#[pyfunction]
fn stage_payoff(
    player: &str,
    x: f64,
    q: f64,
    i_s: f64,
    i_m: f64,
    i_r: f64,
    params: &PyModelParams,
) -> PyResult<f64> {
    let controls = Controls::new(i_s, i_m, i_r);
    Ok(model::stage_payoff(parse_player(player)?, x, q, &controls, &params.core()))
}

/// Returns `(max, rms)` of the stationarity residuals.
#[pyfunction]
fn residual_norm(traj: &PyTrajectory, params: &PyModelParams) -> PyResult<(f64, f64)> {
    let n = stationarity::residual_norm(&traj.inner, &params.core()).map_err(to_py)?;
    Ok((n.max, n.rms))
}

#[pyfunction]
#[pyo3(signature = (traj, params, follower, seed = DEFAULT_SEED))]
fn follower_check(traj: &PyTrajectory, params: &PyModelParams, follower: &str, seed: u64) -> PyResult<f64> {
    let follower = match follower {
        "retailer" => Follower::Retailer,
        "manufacturer" => Follower::Manufacturer,
        _ => return Err(PyValueError::new_err(format!("unknown follower {follower:?}"))),
    };
    let opts = CheckOptions { seed, ..CheckOptions::default() };
    oracle::follower_stationarity_check(&traj.inner, &params.core(), follower, &opts).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (traj, params, seed = DEFAULT_SEED))]
fn leader_check(traj: &PyTrajectory, params: &PyModelParams, seed: u64) -> PyResult<f64> {
    let opts = CheckOptions { seed, ..CheckOptions::default() };
    oracle::leader_stationarity_check(&traj.inner, &params.core(), &opts).map_err(to_py)
}

#[pymodule]
fn csrgame(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PySolveReport>()?;
    m.add_function(wrap_pyfunction!(solve_game, m)?)?;
    m.add_function(wrap_pyfunction!(dense_solve, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(stage_payoff, m)?)?;
    m.add_function(wrap_pyfunction!(residual_norm, m)?)?;
    m.add_function(wrap_pyfunction!(follower_check, m)?)?;
    m.add_function(wrap_pyfunction!(leader_check, m)?)?;
    Ok(())
}
