//! Augmented discrete Hamiltonian recursion and its affine backward sweep.
//!
//! After each period's control conditions are eliminated, the game reduces to
//!
//! ```text
//! xa[t+1] = A xa[t] + B pa[t+1] + f[t]
//! pa[t]   = C xa[t] + D pa[t+1] + e[t]
//! ```
//!
//! with forward variables `xa` fixed at `t = 1` and backward variables `pa`
//! zero at `t = T + 1`. The sweep posits `pa[t] = S[t] xa[t] + s[t]`, recurses
//! `(S, s)` backward from zero, then rolls `xa` forward.
//!
//! Two levels are built. The inner level is the manufacturer/retailer game for
//! a given supplier path, with `xa = [x, u]` and `pa = [p_m, p_r]`. The outer
//! level is the supplier's problem over the embedded follower system, with
//! `xa = [x, u, w, u_prime]` and `pa = [p_s, y, p_r, p_m]`.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::model::{total_objective, Controls, ModelParams, Player, Trajectory};
use crate::report::{PlayerValues, SolveReport, SolverPath, DEFAULT_SEED};
use crate::stationarity::{complete_trajectory, residual_norm, FollowerBlock, StaticBlock};

/// Blocks of the augmented recursion. `N` is the augmented state size, `K`
/// the number of eliminated per-period unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem<const N: usize, const K: usize> {
    pub block_a: SMatrix<f64, N, N>,
    pub block_b: SMatrix<f64, N, N>,
    pub block_c: SMatrix<f64, N, N>,
    pub block_d22: SMatrix<f64, N, N>,
    /// Per period `t = 1..=T`.
    pub affine_f: Vec<SVector<f64, N>>,
    pub affine_e: Vec<SVector<f64, N>>,
    /// Eliminated unknowns of period `t`: `gain * pa[t+1] + offset[t]`.
    pub statics_gain: SMatrix<f64, K, N>,
    pub statics_offset: Vec<SVector<f64, K>>,
    pub initial_state: SVector<f64, N>,
}

/// Manufacturer/retailer level.
pub type InnerSystem = AugmentedSystem<2, 3>;
/// Supplier level.
pub type OuterSystem = AugmentedSystem<4, 7>;

impl<const N: usize, const K: usize> AugmentedSystem<N, K> {
    pub fn horizon(&self) -> usize {
        self.affine_f.len()
    }
}

/// Outer-level blocks.
pub fn assemble_outer(params: &ModelParams) -> Result<OuterSystem> {
    let block = StaticBlock::new(params)?;
    let lu = block.matrix.lu();
    let undetermined = || Error::UndeterminedControls { tau_theta: params.tau_theta() };

    // StaticBlock orders costates [p_s, p_m, p_r, y]; the sweep pairs them
    // with [x, u, w, u_prime] as [p_s, y, p_r, p_m].
    let map = &block.costate_map;
    let permuted = SMatrix::<f64, 7, 4>::from_columns(&[
        map.column(0).into_owned(),
        map.column(3).into_owned(),
        map.column(2).into_owned(),
        map.column(1).into_owned(),
    ]);
    let gain = lu.solve(&permuted).ok_or_else(undetermined)?;
    let offset = lu.solve(&block.offset).ok_or_else(undetermined)?;

    let (bs, bm, br) = params.betas();
    #[rustfmt::skip]
    let forward = SMatrix::<f64, 4, 7>::from_row_slice(&[
        // i_s i_m  i_r  lam  mu_r mu_m nu
        bs,  bm,  br,  0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, br,  0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, br,  0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, bm,  br,
    ]);
    let (ds, dm, dr) = (2.0 * params.delta_s, 2.0 * params.delta_m, 2.0 * params.delta_r);
    #[rustfmt::skip]
    let block_c = SMatrix::<f64, 4, 4>::from_row_slice(&[
        // x    u    w    u'
        ds,  0.0, dr,  dm,
        0.0, 0.0, 0.0, dr,
        dr,  0.0, 0.0, 0.0,
        dm,  dr,  0.0, 0.0,
    ]);
    let horizon = params.horizon;
    let identity = SMatrix::<f64, 4, 4>::identity();
    Ok(OuterSystem {
        block_a: identity * params.alpha,
        block_b: forward * gain,
        block_c,
        block_d22: identity * params.alpha,
        affine_f: vec![forward * offset; horizon],
        affine_e: vec![SVector::zeros(); horizon],
        statics_gain: gain,
        statics_offset: vec![offset; horizon],
        initial_state: SVector::<f64, 4>::new(params.x1, 0.0, 0.0, 0.0),
    })
}

/// Inner-level blocks for a fixed supplier investment path.
pub fn assemble_inner(params: &ModelParams, supplier_path: &[f64]) -> Result<InnerSystem> {
    let block = FollowerBlock::new(params)?;
    let lu = block.matrix.lu();
    let undetermined = || Error::UndeterminedControls { tau_theta: params.tau_theta() };
    let gain = lu.solve(&block.costate_map).ok_or_else(undetermined)?;

    let (bs, bm, br) = params.betas();
    #[rustfmt::skip]
    let forward = SMatrix::<f64, 2, 3>::from_row_slice(&[
        bm,  br,  0.0,
        0.0, 0.0, br,
    ]);
    let mut statics_offset = Vec::with_capacity(supplier_path.len());
    let mut affine_f = Vec::with_capacity(supplier_path.len());
    for &i_s in supplier_path {
        let offset = lu.solve(&block.offset(i_s)).ok_or_else(undetermined)?;
        affine_f.push(forward * offset + SVector::<f64, 2>::new(bs * i_s, 0.0));
        statics_offset.push(offset);
    }
    let (dm, dr) = (2.0 * params.delta_m, 2.0 * params.delta_r);
    let identity = SMatrix::<f64, 2, 2>::identity();
    Ok(InnerSystem {
        block_a: identity * params.alpha,
        block_b: forward * gain,
        block_c: SMatrix::<f64, 2, 2>::new(dm, dr, dr, 0.0),
        block_d22: identity * params.alpha,
        affine_e: vec![SVector::zeros(); supplier_path.len()],
        affine_f,
        statics_gain: gain,
        statics_offset,
        initial_state: SVector::<f64, 2>::new(params.x1, 0.0),
    })
}

/// Affine costate-to-state relation `pa[t] = gain[t] xa[t] + offset[t]`.
///
/// Index `k` holds `t = k + 1`; the last entry (`t = T + 1`) is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCoefficients<const N: usize> {
    pub gain: Vec<SMatrix<f64, N, N>>,
    pub offset: Vec<SVector<f64, N>>,
}

fn step_inverse<const N: usize, const K: usize>(
    aug: &AugmentedSystem<N, K>,
    gain_next: &SMatrix<f64, N, N>,
    t: usize,
) -> Result<SMatrix<f64, N, N>> {
    (SMatrix::<f64, N, N>::identity() - aug.block_b * gain_next)
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularSweepStep { t })
}

pub fn backward_sweep<const N: usize, const K: usize>(
    aug: &AugmentedSystem<N, K>,
) -> Result<SweepCoefficients<N>> {
    let horizon = aug.horizon();
    let mut gain = vec![SMatrix::<f64, N, N>::zeros(); horizon + 1];
    let mut offset = vec![SVector::<f64, N>::zeros(); horizon + 1];
    for t in (1..=horizon).rev() {
        let (s_next, o_next) = (gain[t], offset[t]);
        let inv = step_inverse(aug, &s_next, t)?;
        let k = t - 1;
        gain[k] = aug.block_c + aug.block_d22 * s_next * inv * aug.block_a;
        offset[k] = aug.block_d22 * (s_next * inv * (aug.block_b * o_next + aug.affine_f[k]) + o_next)
            + aug.affine_e[k];
    }
    Ok(SweepCoefficients { gain, offset })
}

/// Forward roll-out of the augmented variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath<const N: usize, const K: usize> {
    /// `t = 1..=T+1`
    pub states: Vec<SVector<f64, N>>,
    /// `t = 1..=T+1`; the first entry is the recursion value at the fixed
    /// initial state.
    pub costates: Vec<SVector<f64, N>>,
    /// `t = 1..=T`
    pub statics: Vec<SVector<f64, K>>,
}

pub fn forward_pass<const N: usize, const K: usize>(
    sweep: &SweepCoefficients<N>,
    aug: &AugmentedSystem<N, K>,
) -> Result<AugmentedPath<N, K>> {
    let horizon = aug.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut costates = Vec::with_capacity(horizon + 1);
    let mut statics = Vec::with_capacity(horizon);
    let mut state = aug.initial_state;
    states.push(state);
    costates.push(sweep.gain[0] * state + sweep.offset[0]);
    for t in 1..=horizon {
        let k = t - 1;
        let (s_next, o_next) = (&sweep.gain[t], &sweep.offset[t]);
        let inv = step_inverse(aug, s_next, t)?;
        state = inv * (aug.block_a * state + aug.block_b * o_next + aug.affine_f[k]);
        let costate = s_next * state + o_next;
        statics.push(aug.statics_gain * costate + aug.statics_offset[k]);
        states.push(state);
        costates.push(costate);
    }
    Ok(AugmentedPath { states, costates, statics })
}

fn outer_to_trajectory(path: &AugmentedPath<4, 7>, params: &ModelParams) -> Result<Trajectory> {
    let horizon = path.statics.len();
    let mut traj = Trajectory::zeros(horizon);
    for (k, (xa, pa)) in path.states.iter().zip(&path.costates).enumerate() {
        traj.x[k] = xa[0];
        traj.u[k] = xa[1];
        traj.nesting.w[k] = xa[2];
        traj.u_prime[k] = xa[3];
        traj.p_s[k] = pa[0];
        traj.nesting.y[k] = pa[1];
        traj.p_r[k] = pa[2];
        traj.p_m[k] = pa[3];
    }
    for (k, z) in path.statics.iter().enumerate() {
        traj.controls[k] = Controls::new(z[0], z[1], z[2]);
        traj.nesting.lambda[k] = z[3];
        traj.nesting.mu_r[k] = z[4];
        traj.nesting.mu_m[k] = z[5];
        traj.nesting.nu[k] = z[6];
    }
    complete_trajectory(&mut traj, params)?;
    Ok(traj)
}

/// Manufacturer/retailer reaction to a supplier investment path, by the
/// inner-level sweep. Supplier-level fields of the result are zero.
pub fn follower_response(params: &ModelParams, supplier_path: &[f64]) -> Result<Trajectory> {
    let aug = assemble_inner(params, supplier_path)?;
    let sweep = backward_sweep(&aug)?;
    let path = forward_pass(&sweep, &aug)?;
    let mut traj = Trajectory::zeros(supplier_path.len());
    for (k, (xa, pa)) in path.states.iter().zip(&path.costates).enumerate() {
        traj.x[k] = xa[0];
        traj.u[k] = xa[1];
        traj.p_m[k] = pa[0];
        traj.p_r[k] = pa[1];
    }
    for (k, z) in path.statics.iter().enumerate() {
        traj.controls[k] = Controls::new(supplier_path[k], z[0], z[1]);
        traj.nesting.lambda[k] = z[2];
    }
    traj.q.fill(crate::model::optimal_quantity(params)?);
    Ok(traj)
}

fn follower_delta(outer: &Trajectory, inner: &Trajectory) -> f64 {
    let mut delta: f64 = 0.0;
    let mut cmp = |a: &[f64], b: &[f64]| {
        for (x, y) in a.iter().zip(b) {
            delta = delta.max((x - y).abs());
        }
    };
    cmp(&outer.x, &inner.x);
    cmp(&outer.u, &inner.u);
    cmp(&outer.p_m[1..], &inner.p_m[1..]);
    cmp(&outer.p_r[1..], &inner.p_r[1..]);
    cmp(&outer.nesting.lambda, &inner.nesting.lambda);
    let im: Vec<_> = outer.controls.iter().map(|c| c.i_m).collect();
    let jm: Vec<_> = inner.controls.iter().map(|c| c.i_m).collect();
    cmp(&im, &jm);
    let ir: Vec<_> = outer.controls.iter().map(|c| c.i_r).collect();
    let jr: Vec<_> = inner.controls.iter().map(|c| c.i_r).collect();
    cmp(&ir, &jr);
    delta
}

/// Full solve: outer sweep for the supplier level, inner sweep to recover the
/// followers' reaction to the supplier's path, then diagnostics.
pub fn solve_game(params: &ModelParams) -> Result<(Trajectory, SolveReport)> {
    params.validate(false)?;
    let aug = assemble_outer(params)?;
    let sweep = backward_sweep(&aug)?;
    let path = forward_pass(&sweep, &aug)?;
    let traj = outer_to_trajectory(&path, params)?;

    let supplier_path: Vec<f64> = traj.controls.iter().map(|c| c.i_s).collect();
    let inner = follower_response(params, &supplier_path)?;

    let report = build_report(params, &traj, SolverPath::Sweep, follower_delta(&traj, &inner))?;
    Ok((traj, report))
}

pub(crate) fn build_report(
    params: &ModelParams,
    traj: &Trajectory,
    solver_path: SolverPath,
    follower_consistency: f64,
) -> Result<SolveReport> {
    let norms = residual_norm(traj, params)?;
    let objectives = PlayerValues {
        supplier: total_objective(Player::Supplier, traj, params)?,
        manufacturer: total_objective(Player::Manufacturer, traj, params)?,
        retailer: total_objective(Player::Retailer, traj, params)?,
    };
    let (convexity_warning, negative_investment_warning) = SolveReport::flags(params, traj);
    Ok(SolveReport {
        solver_path,
        horizon: params.horizon,
        residual_max: norms.max,
        residual_rms: norms.rms,
        objectives,
        convexity_warning,
        negative_investment_warning,
        follower_consistency,
        seed: DEFAULT_SEED,
        oracle: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::reference;
    use crate::stationarity::{residuals, static_residuals, EqKind, PeriodPoint};

    fn no_benefit() -> ModelParams {
        ModelParams {
            delta_s: 0.0,
            delta_m: 0.0,
            delta_r: 0.0,
            d: 0.0,
            d_hat: 0.0,
            ..reference()
        }
    }

    #[test]
    fn c_block_vanishes_without_social_benefit() {
        let p = no_benefit();
        assert_eq!(assemble_outer(&p).unwrap().block_c, SMatrix::<f64, 4, 4>::zeros());
        assert_eq!(assemble_inner(&p, &[0.5; 3]).unwrap().block_c, SMatrix::<f64, 2, 2>::zeros());
        let sweep = backward_sweep(&assemble_outer(&p).unwrap()).unwrap();
        assert!(sweep.gain.iter().all(|g| *g == SMatrix::<f64, 4, 4>::zeros()));
    }

    #[test]
    fn blocks_are_symmetric_pairs() {
        let aug = assemble_outer(&reference()).unwrap();
        assert_eq!(aug.block_c, aug.block_c.transpose());
        assert_eq!(aug.block_d22, aug.block_a.transpose());
    }

    #[test]
    fn one_period_sweep_is_a_single_step() {
        let p = ModelParams { horizon: 1, ..reference() };
        let aug = assemble_outer(&p).unwrap();
        let sweep = backward_sweep(&aug).unwrap();
        assert_eq!(sweep.gain.len(), 2);
        assert_eq!(sweep.gain[0], aug.block_c);
        assert_eq!(sweep.offset[0], aug.affine_e[0]);
    }

    #[test]
    fn outer_blocks_reproduce_the_period_conditions() {
        // Pick an arbitrary augmented state at t and costate at t+1, push them
        // through the blocks, and evaluate the stationarity residuals.
        let p = ModelParams { horizon: 2, ..reference() };
        let aug = assemble_outer(&p).unwrap();
        let xa = SVector::<f64, 4>::new(0.7, -0.3, 0.4, 1.1);
        let pa_next = SVector::<f64, 4>::new(0.2, -0.5, 0.9, 0.3);
        let z = aug.statics_gain * pa_next + aug.statics_offset[0];
        let xa_next = aug.block_a * xa + aug.block_b * pa_next + aug.affine_f[0];
        let pa = aug.block_c * xa + aug.block_d22 * pa_next + aug.affine_e[0];

        let mut traj = Trajectory::zeros(2);
        traj.x[1] = xa[0];
        traj.u[1] = xa[1];
        traj.nesting.w[1] = xa[2];
        traj.u_prime[1] = xa[3];
        traj.x[2] = xa_next[0];
        traj.u[2] = xa_next[1];
        traj.nesting.w[2] = xa_next[2];
        traj.u_prime[2] = xa_next[3];
        traj.p_s[1] = pa[0];
        traj.nesting.y[1] = pa[1];
        traj.p_r[1] = pa[2];
        traj.p_m[1] = pa[3];
        traj.p_s[2] = pa_next[0];
        traj.nesting.y[2] = pa_next[1];
        traj.p_r[2] = pa_next[2];
        traj.p_m[2] = pa_next[3];
        traj.controls[1] = Controls::new(z[0], z[1], z[2]);
        traj.nesting.lambda[1] = z[3];
        traj.nesting.mu_r[1] = z[4];
        traj.nesting.mu_m[1] = z[5];
        traj.nesting.nu[1] = z[6];

        let pt = PeriodPoint::from_trajectory(&traj, 2);
        for r in static_residuals(&pt, &p) {
            assert!(r.abs() <= 1e-12, "{r}");
        }
        for r in residuals(&traj, &p).unwrap() {
            let dynamic = matches!(
                r.kind,
                EqKind::StateEquation | EqKind::Forward(_) | EqKind::Costate(_) | EqKind::MultiplierCostate
            );
            if r.t == 2 && dynamic {
                assert!(r.value.abs() <= 1e-12, "{:?}: {}", r.kind, r.value);
            }
        }
    }

    #[test]
    fn reference_solution_satisfies_every_condition() {
        let (traj, report) = solve_game(&reference()).unwrap();
        assert!(report.residual_max <= 1e-9, "{}", report.residual_max);
        assert!(report.follower_consistency <= 1e-9);
        assert!(report.convexity_warning);
        for p in [&traj.p_s, &traj.p_m, &traj.p_r] {
            assert_eq!(*p.last().unwrap(), 0.0);
        }
        assert_eq!(traj.u[0], 0.0);
        assert_eq!(traj.u_prime[0], 0.0);
    }

    #[test]
    fn zero_input_gives_zero_trajectory() {
        let p = ModelParams { x1: 0.0, tau: 1.0, theta: 0.4, ..no_benefit() };
        let (traj, _) = solve_game(&p).unwrap();
        // q is set by the quantity subgame, not by the sweep
        let mut t = traj.clone();
        t.q.fill(0.0);
        assert!(t.flatten().iter().all(|v| v.abs() < 1e-15), "{t:?}");
    }

    #[test]
    fn collapse_without_social_benefit() {
        let p = ModelParams { horizon: 6, ..no_benefit() };
        let (traj, _) = solve_game(&p).unwrap();
        for series in [&traj.p_s, &traj.p_m, &traj.p_r] {
            assert!(series.iter().all(|v| *v == 0.0));
        }
        let first = traj.controls[0];
        for c in &traj.controls {
            assert!((c.i_s - first.i_s).abs() <= 1e-10);
            assert!((c.i_m - first.i_m).abs() <= 1e-10);
            assert!((c.i_r - first.i_r).abs() <= 1e-10);
        }
    }

    #[test]
    fn solution_is_affine_in_initial_stock() {
        let solve = |x1: f64| solve_game(&ModelParams { x1, ..reference() }).unwrap().0.flatten();
        let (z, a, b) = (solve(0.0), solve(1.0), solve(2.0));
        for ((z, a), b) in z.iter().zip(&a).zip(&b) {
            assert!(((b - z) - 2.0 * (a - z)).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn deterministic() {
        let (a, ra) = solve_game(&reference()).unwrap();
        let (b, rb) = solve_game(&reference()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn degenerate_params_are_rejected() {
        let p = ModelParams { theta: 0.0, ..reference() };
        assert!(matches!(solve_game(&p), Err(Error::UndeterminedControls { .. })));
    }
}
