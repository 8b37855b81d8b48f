//! Necessary conditions of the nested open-loop Stackelberg game.
//!
//! The retailer solves a discrete optimal control problem given the other two
//! investment paths. The manufacturer optimizes subject to the retailer's
//! conditions: it adjoins the retailer investment FOC with a per-period value
//! `lambda` and the retailer costate recursion with a forward multiplier `u`.
//! The supplier optimizes subject to the whole manufacturer/retailer system,
//! which needs values `mu_r`, `mu_m`, `nu` on the three follower FOCs, forward
//! multipliers `w` (retailer costate) and `u_prime` (manufacturer costate), and
//! a backward costate `y` for the manufacturer's own multiplier `u`.
//!
//! Every condition is the derivative of one of the three period Hamiltonians
//! below. All conditions are affine in the stacked unknowns.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::model::{
    optimal_quantity, stage_payoff, state_transition, Controls, ModelParams, Player, Trajectory,
};

/// `tau * theta` below this is treated as zero curvature.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Everything that enters the period-`t` Hamiltonians.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeriodPoint {
    pub x: f64,
    pub q: f64,
    pub controls: Controls,
    pub lambda: f64,
    pub mu_r: f64,
    pub mu_m: f64,
    pub nu: f64,
    pub u: f64,
    pub w: f64,
    pub u_prime: f64,
    pub p_s_next: f64,
    pub p_m_next: f64,
    pub p_r_next: f64,
    pub y_next: f64,
}

impl PeriodPoint {
    /// Extracts period `t` (1-based) from a trajectory.
    pub fn from_trajectory(traj: &Trajectory, t: usize) -> Self {
        let k = t - 1;
        let n = &traj.nesting;
        Self {
            x: traj.x[k],
            q: traj.q[k],
            controls: traj.controls[k],
            lambda: n.lambda[k],
            mu_r: n.mu_r[k],
            mu_m: n.mu_m[k],
            nu: n.nu[k],
            u: traj.u[k],
            w: n.w[k],
            u_prime: traj.u_prime[k],
            p_s_next: traj.p_s[t],
            p_m_next: traj.p_m[t],
            p_r_next: traj.p_r[t],
            y_next: n.y[t],
        }
    }

    pub fn next_costates(&self) -> NextCostates {
        NextCostates {
            p_s: self.p_s_next,
            p_m: self.p_m_next,
            p_r: self.p_r_next,
            y: self.y_next,
        }
    }
}

/// Costate values that enter period `t` (their `t + 1` entries).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NextCostates {
    pub p_s: f64,
    pub p_m: f64,
    pub p_r: f64,
    pub y: f64,
}

/// Forward multipliers that couple a leader's costate to a follower's.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coupling {
    pub u: f64,
    pub w: f64,
    pub u_prime: f64,
}

/// Per-period Lagrange values the leaders place on follower FOCs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FocMultipliers {
    pub lambda: f64,
    pub mu_r: f64,
    pub mu_m: f64,
    pub nu: f64,
}

/// Solution of one period's stacked control conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeriodStatics {
    pub controls: Controls,
    pub foc: FocMultipliers,
}

/// Retailer costate equation right-hand side `2 delta_r x + alpha p_r'`.
fn retailer_costate_rhs(x: f64, p_r_next: f64, params: &ModelParams) -> f64 {
    2.0 * params.delta_r * x + params.alpha * p_r_next
}

fn manufacturer_costate_rhs(x: f64, p_m_next: f64, u: f64, params: &ModelParams) -> f64 {
    2.0 * params.delta_m * x + params.alpha * p_m_next + 2.0 * params.delta_r * u
}

/// `H^R = g^R + p_r' f`.
pub fn retailer_hamiltonian(pt: &PeriodPoint, params: &ModelParams) -> f64 {
    stage_payoff(Player::Retailer, pt.x, pt.q, &pt.controls, params)
        + pt.p_r_next * state_transition(pt.x, &pt.controls, params)
}

/// `H^M = g^M + p_m' f + lambda FOC^R + u (2 delta_r x + alpha p_r')`.
pub fn manufacturer_hamiltonian(pt: &PeriodPoint, params: &ModelParams) -> f64 {
    stage_payoff(Player::Manufacturer, pt.x, pt.q, &pt.controls, params)
        + pt.p_m_next * state_transition(pt.x, &pt.controls, params)
        + pt.lambda * retailer_foc_residual(&pt.controls, pt.p_r_next, params)
        + pt.u * retailer_costate_rhs(pt.x, pt.p_r_next, params)
}

/// Supplier Hamiltonian over the composed follower system.
pub fn supplier_hamiltonian(pt: &PeriodPoint, params: &ModelParams) -> f64 {
    let c = &pt.controls;
    stage_payoff(Player::Supplier, pt.x, pt.q, c, params)
        + pt.p_s_next * state_transition(pt.x, c, params)
        + pt.mu_r * retailer_foc_residual(c, pt.p_r_next, params)
        + pt.mu_m * manufacturer_foc_residual(c, pt.p_m_next, pt.lambda, params)
        + pt.nu * manufacturer_response_residual(c, pt.p_m_next, pt.lambda, params)
        + pt.w * retailer_costate_rhs(pt.x, pt.p_r_next, params)
        + pt.u_prime * manufacturer_costate_rhs(pt.x, pt.p_m_next, pt.u, params)
        + pt.y_next * (params.alpha * pt.u + params.beta_r * pt.lambda)
}

/// `dH^R/dI^R`.
pub fn retailer_foc_residual(controls: &Controls, p_r_next: f64, params: &ModelParams) -> f64 {
    let c = controls;
    params.tau * (1.0 + params.theta * (c.i_s + c.i_m + 2.0 * c.i_r)) - 1.0
        + params.beta_r * p_r_next
}

/// `dH^M/dI^M`.
pub fn manufacturer_foc_residual(
    controls: &Controls,
    p_m_next: f64,
    lambda: f64,
    params: &ModelParams,
) -> f64 {
    let c = controls;
    let k = params.tau_theta();
    params.tau * (1.0 + params.theta * (c.i_s + 2.0 * c.i_m + c.i_r)) - 1.0
        + params.beta_m * p_m_next
        + k * lambda
}

/// `dH^M/dI^R`: the manufacturer's condition on the retailer investment it
/// steers through `lambda`.
pub fn manufacturer_response_residual(
    controls: &Controls,
    p_m_next: f64,
    lambda: f64,
    params: &ModelParams,
) -> f64 {
    let k = params.tau_theta();
    k * controls.i_m + params.d_hat + params.beta_r * p_m_next + 2.0 * k * lambda
}

/// Supplier conditions `dH^S/d(I^S, I^M, I^R, lambda)`.
pub fn supplier_foc_residuals(pt: &PeriodPoint, params: &ModelParams) -> [f64; 4] {
    let c = &pt.controls;
    let k = params.tau_theta();
    let (beta_s, beta_m, beta_r) = params.betas();
    [
        params.tau * (1.0 + params.theta * (2.0 * c.i_s + c.i_m + c.i_r)) - 1.0
            + beta_s * pt.p_s_next
            + k * (pt.mu_r + pt.mu_m),
        k * c.i_s + params.d + beta_m * pt.p_s_next + k * (pt.mu_r + 2.0 * pt.mu_m + pt.nu),
        k * c.i_s + beta_r * pt.p_s_next + k * (2.0 * pt.mu_r + pt.mu_m),
        k * (pt.mu_m + 2.0 * pt.nu) + beta_r * pt.y_next,
    ]
}

/// All seven control conditions of a period, ordered
/// `[R, M, M-on-I^R, S-on-I^S, S-on-I^M, S-on-I^R, S-on-lambda]`.
pub fn static_residuals(pt: &PeriodPoint, params: &ModelParams) -> [f64; 7] {
    let s = supplier_foc_residuals(pt, params);
    [
        retailer_foc_residual(&pt.controls, pt.p_r_next, params),
        manufacturer_foc_residual(&pt.controls, pt.p_m_next, pt.lambda, params),
        manufacturer_response_residual(&pt.controls, pt.p_m_next, pt.lambda, params),
        s[0],
        s[1],
        s[2],
        s[3],
    ]
}

/// Backward costate value at `t` from the value at `t + 1`.
///
/// The retailer ignores `coupling`; the manufacturer uses `u`, the supplier
/// uses `w` and `u_prime`.
pub fn costate_step(
    player: Player,
    x: f64,
    p_next: f64,
    coupling: &Coupling,
    params: &ModelParams,
) -> f64 {
    match player {
        Player::Retailer => retailer_costate_rhs(x, p_next, params),
        Player::Manufacturer => manufacturer_costate_rhs(x, p_next, coupling.u, params),
        Player::Supplier => {
            2.0 * params.delta_s * x
                + params.alpha * p_next
                + 2.0 * params.delta_m * coupling.u_prime
                + 2.0 * params.delta_r * coupling.w
        }
    }
}

/// Backward step of the supplier's costate on `u`.
pub fn multiplier_costate_step(u_prime: f64, y_next: f64, params: &ModelParams) -> f64 {
    2.0 * params.delta_r * u_prime + params.alpha * y_next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Multiplier {
    /// Manufacturer on the retailer costate.
    U,
    /// Supplier on the retailer costate.
    W,
    /// Supplier on the manufacturer costate.
    UPrime,
}

/// Forward step of a Stackelberg multiplier.
pub fn multiplier_step(
    which: Multiplier,
    current: f64,
    foc: &FocMultipliers,
    params: &ModelParams,
) -> f64 {
    let drive = match which {
        Multiplier::U => params.beta_r * foc.lambda,
        Multiplier::W => params.beta_r * foc.mu_r,
        Multiplier::UPrime => params.beta_m * foc.mu_m + params.beta_r * foc.nu,
    };
    params.alpha * current + drive
}

fn check_curvature(params: &ModelParams) -> Result<f64> {
    let k = params.tau_theta();
    if !(k.abs() > DEGENERACY_EPS) {
        return Err(Error::UndeterminedControls { tau_theta: k });
    }
    Ok(k)
}

/// Pattern of the seven period conditions over
/// `[i_s, i_m, i_r, lambda, mu_r, mu_m, nu]`, in units of `tau * theta`.
const STATIC_PATTERN: [[f64; 7]; 7] = [
    [1.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0],
    [2.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
    [1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0],
];

/// The period conditions written as `K z = r0 + R [p_s', p_m', p_r', y']`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticBlock {
    pub matrix: SMatrix<f64, 7, 7>,
    pub offset: SVector<f64, 7>,
    pub costate_map: SMatrix<f64, 7, 4>,
}

impl StaticBlock {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let k = check_curvature(params)?;
        let matrix = SMatrix::<f64, 7, 7>::from_fn(|i, j| k * STATIC_PATTERN[i][j]);
        let one_minus_tau = 1.0 - params.tau;
        let offset = SVector::<f64, 7>::from_column_slice(&[
            one_minus_tau,
            one_minus_tau,
            -params.d_hat,
            one_minus_tau,
            -params.d,
            0.0,
            0.0,
        ]);
        let (bs, bm, br) = params.betas();
        #[rustfmt::skip]
        let costate_map = SMatrix::<f64, 7, 4>::from_row_slice(&[
            // p_s  p_m  p_r  y
            0.0, 0.0, -br, 0.0,
            0.0, -bm, 0.0, 0.0,
            0.0, -br, 0.0, 0.0,
            -bs, 0.0, 0.0, 0.0,
            -bm, 0.0, 0.0, 0.0,
            -br, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, -br,
        ]);
        Ok(Self { matrix, offset, costate_map })
    }
}

/// Solves one period's seven stacked conditions for the investments and the
/// leaders' Lagrange values, given the costates entering the period.
pub fn eliminate_controls(next: &NextCostates, params: &ModelParams) -> Result<PeriodStatics> {
    let block = StaticBlock::new(params)?;
    let rhs = block.offset
        + block.costate_map * SVector::<f64, 4>::new(next.p_s, next.p_m, next.p_r, next.y);
    let z = block
        .matrix
        .lu()
        .solve(&rhs)
        .ok_or(Error::UndeterminedControls { tau_theta: params.tau_theta() })?;
    Ok(PeriodStatics {
        controls: Controls::new(z[0], z[1], z[2]),
        foc: FocMultipliers { lambda: z[3], mu_r: z[4], mu_m: z[5], nu: z[6] },
    })
}

/// The followers' part of a period over `[i_m, i_r, lambda]`:
/// `K z = offset(i_s) + R [p_m', p_r']`.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerBlock {
    pub matrix: SMatrix<f64, 3, 3>,
    pub costate_map: SMatrix<f64, 3, 2>,
    tau_theta: f64,
    one_minus_tau: f64,
    d_hat: f64,
}

impl FollowerBlock {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let k = check_curvature(params)?;
        #[rustfmt::skip]
        let matrix = SMatrix::<f64, 3, 3>::from_row_slice(&[
            k, 2.0 * k, 0.0,
            2.0 * k, k, k,
            k, 0.0, 2.0 * k,
        ]);
        #[rustfmt::skip]
        let costate_map = SMatrix::<f64, 3, 2>::from_row_slice(&[
            0.0, -params.beta_r,
            -params.beta_m, 0.0,
            -params.beta_r, 0.0,
        ]);
        Ok(Self {
            matrix,
            costate_map,
            tau_theta: k,
            one_minus_tau: 1.0 - params.tau,
            d_hat: params.d_hat,
        })
    }

    pub fn offset(&self, i_s: f64) -> SVector<f64, 3> {
        let base = self.one_minus_tau - self.tau_theta * i_s;
        SVector::<f64, 3>::new(base, base, -self.d_hat)
    }
}

/// The followers' part of a period: given the supplier's investment and the
/// followers' next costates, returns `(i_m, i_r, lambda)`.
pub fn eliminate_follower_controls(
    i_s: f64,
    p_m_next: f64,
    p_r_next: f64,
    params: &ModelParams,
) -> Result<(f64, f64, f64)> {
    let block = FollowerBlock::new(params)?;
    let rhs = block.offset(i_s) + block.costate_map * SVector::<f64, 2>::new(p_m_next, p_r_next);
    let z = block
        .matrix
        .lu()
        .solve(&rhs)
        .ok_or(Error::UndeterminedControls { tau_theta: params.tau_theta() })?;
    Ok((z[0], z[1], z[2]))
}

/// Unknowns of the stacked system; the index is the 1-based period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Is(usize),
    Im(usize),
    Ir(usize),
    Lambda(usize),
    MuR(usize),
    MuM(usize),
    Nu(usize),
    Ps(usize),
    Pm(usize),
    Pr(usize),
    Y(usize),
    U(usize),
    W(usize),
    UPrime(usize),
}

impl Var {
    pub fn value(self, traj: &Trajectory) -> f64 {
        let n = &traj.nesting;
        match self {
            Var::X(t) => traj.x[t - 1],
            Var::Is(t) => traj.controls[t - 1].i_s,
            Var::Im(t) => traj.controls[t - 1].i_m,
            Var::Ir(t) => traj.controls[t - 1].i_r,
            Var::Lambda(t) => n.lambda[t - 1],
            Var::MuR(t) => n.mu_r[t - 1],
            Var::MuM(t) => n.mu_m[t - 1],
            Var::Nu(t) => n.nu[t - 1],
            Var::Ps(t) => traj.p_s[t - 1],
            Var::Pm(t) => traj.p_m[t - 1],
            Var::Pr(t) => traj.p_r[t - 1],
            Var::Y(t) => n.y[t - 1],
            Var::U(t) => traj.u[t - 1],
            Var::W(t) => n.w[t - 1],
            Var::UPrime(t) => traj.u_prime[t - 1],
        }
    }

    pub fn set(self, traj: &mut Trajectory, value: f64) {
        let n = &mut traj.nesting;
        let slot = match self {
            Var::X(t) => &mut traj.x[t - 1],
            Var::Is(t) => &mut traj.controls[t - 1].i_s,
            Var::Im(t) => &mut traj.controls[t - 1].i_m,
            Var::Ir(t) => &mut traj.controls[t - 1].i_r,
            Var::Lambda(t) => &mut n.lambda[t - 1],
            Var::MuR(t) => &mut n.mu_r[t - 1],
            Var::MuM(t) => &mut n.mu_m[t - 1],
            Var::Nu(t) => &mut n.nu[t - 1],
            Var::Ps(t) => &mut traj.p_s[t - 1],
            Var::Pm(t) => &mut traj.p_m[t - 1],
            Var::Pr(t) => &mut traj.p_r[t - 1],
            Var::Y(t) => &mut n.y[t - 1],
            Var::U(t) => &mut traj.u[t - 1],
            Var::W(t) => &mut n.w[t - 1],
            Var::UPrime(t) => &mut traj.u_prime[t - 1],
        };
        *slot = value;
    }
}

/// Which player's problem a system describes. Each level contains the
/// conditions of every player below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Retailer,
    Manufacturer,
    Supplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EqKind {
    InitialState,
    InitialMultiplier(Multiplier),
    Terminal(Player),
    TerminalMultiplierCostate,
    StateEquation,
    Forward(Multiplier),
    Costate(Player),
    MultiplierCostate,
    FocRetailer,
    FocManufacturer,
    FocManufacturerResponse,
    FocSupplierIs,
    FocSupplierIm,
    FocSupplierIr,
    FocSupplierLambda,
}

impl EqKind {
    /// Lowest level whose system contains this equation.
    pub fn level(self) -> Level {
        use EqKind::*;
        match self {
            InitialState | StateEquation | FocRetailer => Level::Retailer,
            Terminal(Player::Retailer) | Costate(Player::Retailer) => Level::Retailer,
            Terminal(Player::Manufacturer) | Costate(Player::Manufacturer) => Level::Manufacturer,
            InitialMultiplier(Multiplier::U) | Forward(Multiplier::U) => Level::Manufacturer,
            FocManufacturer | FocManufacturerResponse => Level::Manufacturer,
            _ => Level::Supplier,
        }
    }
}

/// `sum(coeff * var) + constant = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub kind: EqKind,
    pub t: usize,
    pub coeffs: Vec<(Var, f64)>,
    pub constant: f64,
}

impl Equation {
    pub fn eval(&self, traj: &Trajectory) -> f64 {
        self.coeffs
            .iter()
            .map(|&(var, c)| c * var.value(traj))
            .sum::<f64>()
            + self.constant
    }
}

/// The stacked stationarity conditions of one level over the full horizon.
#[derive(Debug, Clone)]
pub struct StationaritySystem {
    pub level: Level,
    pub horizon: usize,
    pub unknowns: Vec<Var>,
    /// Equations for each period `t = 1..=T`.
    pub blocks: Vec<Vec<Equation>>,
    pub boundary: Vec<Equation>,
}

impl StationaritySystem {
    pub fn n_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    pub fn n_equations(&self) -> usize {
        self.boundary.len() + self.blocks.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_square(&self) -> bool {
        self.n_unknowns() == self.n_equations()
    }

    pub fn equations(&self) -> impl Iterator<Item = &Equation> {
        self.boundary.iter().chain(self.blocks.iter().flatten())
    }

    /// Dense `A z = b` over this level's unknowns. Variables outside the level
    /// are read from `context`.
    pub fn dense(&self, context: &Trajectory) -> (DMatrix<f64>, DVector<f64>) {
        let index: HashMap<Var, usize> =
            self.unknowns.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = self.n_unknowns();
        let m = self.n_equations();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for (row, eq) in self.equations().enumerate() {
            let mut rhs = -eq.constant;
            for &(var, c) in &eq.coeffs {
                match index.get(&var) {
                    Some(&col) => a[(row, col)] += c,
                    None => rhs -= c * var.value(context),
                }
            }
            b[row] = rhs;
        }
        (a, b)
    }
}

fn level_unknowns(level: Level, horizon: usize) -> Vec<Var> {
    let periods = 1..=horizon;
    let states = 1..=horizon + 1;
    let costates = 2..=horizon + 1;
    let mut out: Vec<Var> = Vec::new();
    out.extend(states.clone().map(Var::X));
    out.extend(periods.clone().map(Var::Ir));
    out.extend(costates.clone().map(Var::Pr));
    if level >= Level::Manufacturer {
        out.extend(periods.clone().map(Var::Im));
        out.extend(periods.clone().map(Var::Lambda));
        out.extend(costates.clone().map(Var::Pm));
        out.extend(states.clone().map(Var::U));
    }
    if level >= Level::Supplier {
        out.extend(periods.clone().map(Var::Is));
        out.extend(periods.clone().map(Var::MuR));
        out.extend(periods.clone().map(Var::MuM));
        out.extend(periods.map(Var::Nu));
        out.extend(costates.clone().map(Var::Ps));
        out.extend(costates.map(Var::Y));
        out.extend(states.clone().map(Var::W));
        out.extend(states.map(Var::UPrime));
    }
    out
}

/// Full system: all three levels.
pub fn assemble_system(params: &ModelParams) -> Result<StationaritySystem> {
    assemble_level(params, Level::Supplier)
}

/// Stacked conditions of `level`, with higher-level variables as data.
pub fn assemble_level(params: &ModelParams, level: Level) -> Result<StationaritySystem> {
    check_curvature(params)?;
    let horizon = params.horizon;
    let k = params.tau_theta();
    let (bs, bm, br) = params.betas();
    let alpha = params.alpha;
    let two = |d: f64| 2.0 * d;
    let eq = |kind: EqKind, t: usize, coeffs: Vec<(Var, f64)>, constant: f64| Equation {
        kind,
        t,
        coeffs,
        constant,
    };
    let end = horizon + 1;

    let mut boundary = vec![
        eq(EqKind::InitialState, 1, vec![(Var::X(1), 1.0)], -params.x1),
        eq(EqKind::Terminal(Player::Retailer), end, vec![(Var::Pr(end), 1.0)], 0.0),
        eq(EqKind::Terminal(Player::Manufacturer), end, vec![(Var::Pm(end), 1.0)], 0.0),
        eq(EqKind::Terminal(Player::Supplier), end, vec![(Var::Ps(end), 1.0)], 0.0),
        eq(EqKind::TerminalMultiplierCostate, end, vec![(Var::Y(end), 1.0)], 0.0),
        eq(EqKind::InitialMultiplier(Multiplier::U), 1, vec![(Var::U(1), 1.0)], 0.0),
        eq(EqKind::InitialMultiplier(Multiplier::W), 1, vec![(Var::W(1), 1.0)], 0.0),
        eq(EqKind::InitialMultiplier(Multiplier::UPrime), 1, vec![(Var::UPrime(1), 1.0)], 0.0),
    ];
    boundary.retain(|e| e.kind.level() <= level);

    let mut blocks = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        use Var::*;
        let n = t + 1;
        let mut rows = vec![
            eq(
                EqKind::StateEquation,
                t,
                vec![(X(n), 1.0), (X(t), -alpha), (Is(t), -bs), (Im(t), -bm), (Ir(t), -br)],
                0.0,
            ),
            eq(
                EqKind::Forward(Multiplier::U),
                t,
                vec![(U(n), 1.0), (U(t), -alpha), (Lambda(t), -br)],
                0.0,
            ),
            eq(
                EqKind::Forward(Multiplier::W),
                t,
                vec![(W(n), 1.0), (W(t), -alpha), (MuR(t), -br)],
                0.0,
            ),
            eq(
                EqKind::Forward(Multiplier::UPrime),
                t,
                vec![(UPrime(n), 1.0), (UPrime(t), -alpha), (MuM(t), -bm), (Nu(t), -br)],
                0.0,
            ),
            eq(
                EqKind::FocRetailer,
                t,
                vec![(Is(t), k), (Im(t), k), (Ir(t), 2.0 * k), (Pr(n), br)],
                params.tau - 1.0,
            ),
            eq(
                EqKind::FocManufacturer,
                t,
                vec![(Is(t), k), (Im(t), 2.0 * k), (Ir(t), k), (Lambda(t), k), (Pm(n), bm)],
                params.tau - 1.0,
            ),
            eq(
                EqKind::FocManufacturerResponse,
                t,
                vec![(Im(t), k), (Lambda(t), 2.0 * k), (Pm(n), br)],
                params.d_hat,
            ),
            eq(
                EqKind::FocSupplierIs,
                t,
                vec![
                    (Is(t), 2.0 * k),
                    (Im(t), k),
                    (Ir(t), k),
                    (MuR(t), k),
                    (MuM(t), k),
                    (Ps(n), bs),
                ],
                params.tau - 1.0,
            ),
            eq(
                EqKind::FocSupplierIm,
                t,
                vec![(Is(t), k), (MuR(t), k), (MuM(t), 2.0 * k), (Nu(t), k), (Ps(n), bm)],
                params.d,
            ),
            eq(
                EqKind::FocSupplierIr,
                t,
                vec![(Is(t), k), (MuR(t), 2.0 * k), (MuM(t), k), (Ps(n), br)],
                0.0,
            ),
            eq(
                EqKind::FocSupplierLambda,
                t,
                vec![(MuM(t), k), (Nu(t), 2.0 * k), (Y(n), br)],
                0.0,
            ),
        ];
        if t >= 2 {
            rows.extend([
                eq(
                    EqKind::Costate(Player::Retailer),
                    t,
                    vec![(Pr(t), 1.0), (X(t), -two(params.delta_r)), (Pr(n), -alpha)],
                    0.0,
                ),
                eq(
                    EqKind::Costate(Player::Manufacturer),
                    t,
                    vec![
                        (Pm(t), 1.0),
                        (X(t), -two(params.delta_m)),
                        (Pm(n), -alpha),
                        (U(t), -two(params.delta_r)),
                    ],
                    0.0,
                ),
                eq(
                    EqKind::Costate(Player::Supplier),
                    t,
                    vec![
                        (Ps(t), 1.0),
                        (X(t), -two(params.delta_s)),
                        (Ps(n), -alpha),
                        (W(t), -two(params.delta_r)),
                        (UPrime(t), -two(params.delta_m)),
                    ],
                    0.0,
                ),
                eq(
                    EqKind::MultiplierCostate,
                    t,
                    vec![(Y(t), 1.0), (UPrime(t), -two(params.delta_r)), (Y(n), -alpha)],
                    0.0,
                ),
            ]);
        }
        rows.retain(|e| e.kind.level() <= level);
        blocks.push(rows);
    }

    let system = StationaritySystem {
        level,
        horizon,
        unknowns: level_unknowns(level, horizon),
        blocks,
        boundary,
    };
    assert!(
        system.is_square(),
        "{} equations for {} unknowns",
        system.n_equations(),
        system.n_unknowns()
    );
    Ok(system)
}

/// One evaluated condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub kind: EqKind,
    pub t: usize,
    pub value: f64,
}

/// Every condition of the full game evaluated through the Hamiltonian-derived
/// residual functions (not through the assembled coefficients).
///
/// Ordered like [`assemble_system`]: boundary rows first, then period blocks.
pub fn residuals(traj: &Trajectory, params: &ModelParams) -> Result<Vec<Residual>> {
    traj.check_shape()?;
    let horizon = traj.horizon();
    let end = horizon;
    let n = &traj.nesting;
    let mut out = vec![
        Residual { kind: EqKind::InitialState, t: 1, value: traj.x[0] - params.x1 },
        Residual { kind: EqKind::Terminal(Player::Retailer), t: end + 1, value: traj.p_r[end] },
        Residual { kind: EqKind::Terminal(Player::Manufacturer), t: end + 1, value: traj.p_m[end] },
        Residual { kind: EqKind::Terminal(Player::Supplier), t: end + 1, value: traj.p_s[end] },
        Residual { kind: EqKind::TerminalMultiplierCostate, t: end + 1, value: n.y[end] },
        Residual { kind: EqKind::InitialMultiplier(Multiplier::U), t: 1, value: traj.u[0] },
        Residual { kind: EqKind::InitialMultiplier(Multiplier::W), t: 1, value: n.w[0] },
        Residual { kind: EqKind::InitialMultiplier(Multiplier::UPrime), t: 1, value: traj.u_prime[0] },
    ];
    let kinds = [
        EqKind::FocRetailer,
        EqKind::FocManufacturer,
        EqKind::FocManufacturerResponse,
        EqKind::FocSupplierIs,
        EqKind::FocSupplierIm,
        EqKind::FocSupplierIr,
        EqKind::FocSupplierLambda,
    ];
    for t in 1..=horizon {
        let k = t - 1;
        let pt = PeriodPoint::from_trajectory(traj, t);
        let foc = FocMultipliers { lambda: pt.lambda, mu_r: pt.mu_r, mu_m: pt.mu_m, nu: pt.nu };
        let mut push = |kind, value| out.push(Residual { kind, t, value });
        push(EqKind::StateEquation, traj.x[t] - state_transition(pt.x, &pt.controls, params));
        push(
            EqKind::Forward(Multiplier::U),
            traj.u[t] - multiplier_step(Multiplier::U, pt.u, &foc, params),
        );
        push(
            EqKind::Forward(Multiplier::W),
            n.w[t] - multiplier_step(Multiplier::W, pt.w, &foc, params),
        );
        push(
            EqKind::Forward(Multiplier::UPrime),
            traj.u_prime[t] - multiplier_step(Multiplier::UPrime, pt.u_prime, &foc, params),
        );
        for (kind, value) in kinds.into_iter().zip(static_residuals(&pt, params)) {
            push(kind, value);
        }
        if t >= 2 {
            let coupling = Coupling { u: pt.u, w: pt.w, u_prime: pt.u_prime };
            for (player, series) in [
                (Player::Retailer, &traj.p_r),
                (Player::Manufacturer, &traj.p_m),
                (Player::Supplier, &traj.p_s),
            ] {
                let step = costate_step(player, pt.x, series[t], &coupling, params);
                push(EqKind::Costate(player), series[k] - step);
            }
            push(
                EqKind::MultiplierCostate,
                n.y[k] - multiplier_costate_step(pt.u_prime, n.y[t], params),
            );
        }
    }
    Ok(out)
}

/// Max and RMS of all condition residuals, in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub max: f64,
    pub rms: f64,
}

pub fn residual_norm(traj: &Trajectory, params: &ModelParams) -> Result<ResidualNorms> {
    let r = residuals(traj, params)?;
    let max = r.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    let rms = (r.iter().map(|r| r.value * r.value).sum::<f64>() / r.len() as f64).sqrt();
    Ok(ResidualNorms { max, rms })
}

/// Fills the `t = 1` costate entries from their recursions and sets the
/// traded quantity. The `t = 1` entries are not unknowns of the game.
pub fn complete_trajectory(traj: &mut Trajectory, params: &ModelParams) -> Result<()> {
    let q = optimal_quantity(params)?;
    traj.q.iter_mut().for_each(|v| *v = q);
    let coupling = Coupling { u: traj.u[0], w: traj.nesting.w[0], u_prime: traj.u_prime[0] };
    let x = traj.x[0];
    traj.p_r[0] = costate_step(Player::Retailer, x, traj.p_r[1], &coupling, params);
    traj.p_m[0] = costate_step(Player::Manufacturer, x, traj.p_m[1], &coupling, params);
    traj.p_s[0] = costate_step(Player::Supplier, x, traj.p_s[1], &coupling, params);
    traj.nesting.y[0] = multiplier_costate_step(coupling.u_prime, traj.nesting.y[1], params);
    Ok(())
}
