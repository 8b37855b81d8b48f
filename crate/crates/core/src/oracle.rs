//! Independent verification: one dense factorization of the full stacked
//! system, and finite-difference checks that a trajectory is a nested
//! Stackelberg stationary point of the coded objectives.
//!
//! The checks never use the leaders' multipliers. Followers are re-solved
//! from their own stationarity systems and the objectives are differentiated
//! along the composed reaction maps.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{objective_along, optimal_quantity, Controls, ModelParams, Player, Trajectory};
use crate::report::DEFAULT_SEED;
use crate::stationarity::{assemble_level, complete_trajectory, Level, StationaritySystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Number of random directions; at least 10 are always used.
    pub directions: usize,
    pub seed: u64,
    /// Relative central-difference step, scaled by `1 + max |control|`.
    pub step: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { directions: 12, seed: DEFAULT_SEED, step: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Follower {
    Retailer,
    Manufacturer,
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve_system(sys: &StationaritySystem, context: &Trajectory) -> Result<Trajectory> {
    let (a, b) = sys.dense(context);
    let solution = a.clone().lu().solve(&b).filter(|z| z.iter().all(|v| v.is_finite()));
    let Some(z) = solution else {
        return Err(Error::SingularSystem { condition: condition_estimate(&a) });
    };
    let mut traj = context.clone();
    for (&var, &value) in sys.unknowns.iter().zip(z.iter()) {
        var.set(&mut traj, value);
    }
    Ok(traj)
}

/// Solves the whole game as one linear system.
pub fn dense_solve(params: &ModelParams) -> Result<Trajectory> {
    params.validate(false)?;
    let sys = assemble_level(params, Level::Supplier)?;
    let mut traj = solve_system(&sys, &Trajectory::zeros(params.horizon))?;
    complete_trajectory(&mut traj, params)?;
    Ok(traj)
}

/// Stationary response of the players at `level` and below, with the
/// investments of higher levels taken from `context`.
pub fn solve_level(params: &ModelParams, level: Level, context: &[Controls]) -> Result<Trajectory> {
    let params = ModelParams { horizon: context.len(), ..*params };
    let sys = assemble_level(&params, level)?;
    let mut base = Trajectory::zeros(context.len());
    base.controls = context.to_vec();
    let mut traj = solve_system(&sys, &base)?;
    traj.q.fill(optimal_quantity(&params)?);
    Ok(traj)
}

fn objective(player: Player, traj: &Trajectory, params: &ModelParams) -> f64 {
    objective_along(player, &traj.x, &traj.q, &traj.controls, params)
}

fn random_directions(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count.max(10))
        .map(|_| {
            let mut d: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect()
}

/// Max over random unit directions `dir` of the central difference of
/// `f(base + h dir)`.
fn max_directional_derivative<F>(base: &[f64], opts: &CheckOptions, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let scale = 1.0 + base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = opts.step * scale;
    let mut worst: f64 = 0.0;
    for dir in random_directions(opts.directions, base.len(), opts.seed) {
        let shifted = |sign: f64| -> Vec<f64> {
            base.iter().zip(&dir).map(|(b, d)| b + sign * h * d).collect()
        };
        let plus = f(&shifted(1.0))?;
        let minus = f(&shifted(-1.0))?;
        worst = worst.max(((plus - minus) / (2.0 * h)).abs());
    }
    Ok(worst)
}

/// Directional-derivative magnitude of a follower's objective along its own
/// investment path.
///
/// Retailer: the other investments stay fixed and the state is rolled out.
/// Manufacturer: the retailer is re-solved to stationarity for every probe.
pub fn follower_stationarity_check(
    traj: &Trajectory,
    params: &ModelParams,
    follower: Follower,
    opts: &CheckOptions,
) -> Result<f64> {
    traj.check_shape()?;
    let q = vec![optimal_quantity(params)?; traj.horizon()];
    match follower {
        Follower::Retailer => {
            let base: Vec<f64> = traj.controls.iter().map(|c| c.i_r).collect();
            max_directional_derivative(&base, opts, |path| {
                let controls: Vec<Controls> = traj
                    .controls
                    .iter()
                    .zip(path)
                    .map(|(c, &i_r)| Controls { i_r, ..*c })
                    .collect();
                let x = crate::model::state_path(&controls, params);
                Ok(objective_along(Player::Retailer, &x, &q, &controls, params))
            })
        }
        Follower::Manufacturer => {
            let base: Vec<f64> = traj.controls.iter().map(|c| c.i_m).collect();
            max_directional_derivative(&base, opts, |path| {
                let context: Vec<Controls> = traj
                    .controls
                    .iter()
                    .zip(path)
                    .map(|(c, &i_m)| Controls { i_m, ..*c })
                    .collect();
                let response = solve_level(params, Level::Retailer, &context)?;
                Ok(objective(Player::Manufacturer, &response, params))
            })
        }
    }
}

/// Directional-derivative magnitude of the supplier's objective along its
/// investment path, with the manufacturer/retailer subgame re-solved for
/// every probe.
pub fn leader_stationarity_check(
    traj: &Trajectory,
    params: &ModelParams,
    opts: &CheckOptions,
) -> Result<f64> {
    traj.check_shape()?;
    let base: Vec<f64> = traj.controls.iter().map(|c| c.i_s).collect();
    max_directional_derivative(&base, opts, |path| {
        let response = follower_subgame(params, path)?;
        Ok(objective(Player::Supplier, &response, params))
    })
}

/// Manufacturer/retailer stationary response to a supplier investment path.
pub fn follower_subgame(params: &ModelParams, supplier_path: &[f64]) -> Result<Trajectory> {
    let context: Vec<Controls> =
        supplier_path.iter().map(|&i_s| Controls { i_s, ..Default::default() }).collect();
    solve_level(params, Level::Manufacturer, &context)
}

/// One-period brute force: evaluates the supplier objective on a grid of its
/// investment (followers re-solved per point) and returns the interior
/// stationary point, refined by the parabola through the extreme grid point
/// and its neighbours. `None` if the extremum sits on the grid boundary.
pub fn scan_leader_investment(
    params: &ModelParams,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Option<f64>> {
    assert!(params.horizon == 1, "grid scan is only defined for a single period");
    assert!(points >= 3 && hi > lo);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let values = grid
        .iter()
        .map(|&i_s| Ok(objective(Player::Supplier, &follower_subgame(params, &[i_s])?, params)))
        .collect::<Result<Vec<f64>>>()?;

    let argmax = (0..points).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let argmin = (0..points).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let interior = |i: usize| i > 0 && i + 1 < points;
    let Some(i) = [argmax, argmin].into_iter().find(|&i| interior(i)) else {
        return Ok(None);
    };
    let (f0, f1, f2) = (values[i - 1], values[i], values[i + 1]);
    let curvature = f0 - 2.0 * f1 + f2;
    if curvature == 0.0 {
        return Ok(Some(grid[i]));
    }
    Ok(Some(grid[i] + 0.5 * step * (f0 - f2) / curvature))
}
