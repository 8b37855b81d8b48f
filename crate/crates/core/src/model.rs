//! Economic primitives of the three-tier chain: CSR stock dynamics, demand,
//! tax return, social benefit and the per-period payoffs of each member.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Scalar parameters of the game. All of them are constant over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// CSR stock carryover rate.
    pub alpha: f64,
    pub beta_s: f64,
    pub beta_m: f64,
    pub beta_r: f64,
    /// Individual post-tax return on investment.
    pub tau: f64,
    /// Chain-level post-tax return on investment.
    pub theta: f64,
    pub delta_s: f64,
    pub delta_m: f64,
    pub delta_r: f64,
    /// Share of manufacturer investment paid to the supplier.
    pub d: f64,
    /// Share of retailer investment paid to the manufacturer.
    pub d_hat: f64,
    /// Inverse-demand intercept.
    pub a: f64,
    /// Inverse-demand slope.
    pub b: f64,
    /// Supplier raw-material price.
    pub v: f64,
    /// Retailer consumer price.
    pub z: f64,
    /// Supplier unit cost.
    pub c: f64,
    /// Initial CSR stock.
    pub x1: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: usize,
}

impl ModelParams {
    /// Checks every invariant and reports all violations at once.
    ///
    /// `strict_alpha` enforces `0 < alpha <= 1`; without it only `alpha > 0`
    /// is required.
    pub fn validate(&self, strict_alpha: bool) -> Result<()> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &'static str, bound: &'static str, value: f64| {
            if !ok {
                out.push(Violation { field, bound, value });
            }
        };

        let fields = [
            ("alpha", self.alpha),
            ("beta_s", self.beta_s),
            ("beta_m", self.beta_m),
            ("beta_r", self.beta_r),
            ("tau", self.tau),
            ("theta", self.theta),
            ("delta_s", self.delta_s),
            ("delta_m", self.delta_m),
            ("delta_r", self.delta_r),
            ("d", self.d),
            ("d_hat", self.d_hat),
            ("a", self.a),
            ("b", self.b),
            ("v", self.v),
            ("z", self.z),
            ("c", self.c),
            ("x1", self.x1),
        ];
        for (name, value) in fields {
            check(value.is_finite(), name, "finite", value);
        }

        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if strict_alpha {
            check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", "(0, 1]", self.alpha);
        } else {
            check(self.alpha > 0.0, "alpha", "(0, inf)", self.alpha);
        }
        check(open_unit(self.beta_s), "beta_s", "(0, 1)", self.beta_s);
        check(open_unit(self.beta_m), "beta_m", "(0, 1)", self.beta_m);
        check(open_unit(self.beta_r), "beta_r", "(0, 1)", self.beta_r);
        check(self.b > 0.0, "b", "(0, inf)", self.b);
        check(self.tau >= 0.0, "tau", "[0, inf)", self.tau);
        check(self.theta >= 0.0, "theta", "[0, inf)", self.theta);
        check(self.delta_s >= 0.0, "delta_s", "[0, inf)", self.delta_s);
        check(self.delta_m >= 0.0, "delta_m", "[0, inf)", self.delta_m);
        check(self.delta_r >= 0.0, "delta_r", "[0, inf)", self.delta_r);
        check((0.0..1.0).contains(&self.d), "d", "[0, 1)", self.d);
        check((0.0..1.0).contains(&self.d_hat), "d_hat", "[0, 1)", self.d_hat);
        check(self.c >= 0.0, "c", "[0, inf)", self.c);
        check(self.horizon >= 1, "horizon_T", ">= 1", self.horizon as f64);

        if out.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(out))
        }
    }

    /// Curvature of each player's tax return in its own investment, `tau * theta`.
    pub fn tau_theta(&self) -> f64 {
        self.tau * self.theta
    }

    /// Conversion rates as `(beta_s, beta_m, beta_r)`.
    pub fn betas(&self) -> (f64, f64, f64) {
        (self.beta_s, self.beta_m, self.beta_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Supplier,
    Manufacturer,
    Retailer,
}

impl Player {
    pub const ALL: [Player; 3] = [Player::Supplier, Player::Manufacturer, Player::Retailer];
}

/// One period's CSR investments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub i_s: f64,
    pub i_m: f64,
    pub i_r: f64,
}

impl Controls {
    pub fn new(i_s: f64, i_m: f64, i_r: f64) -> Self {
        Self { i_s, i_m, i_r }
    }

    pub fn total(&self) -> f64 {
        self.i_s + self.i_m + self.i_r
    }

    pub fn own(&self, player: Player) -> f64 {
        match player {
            Player::Supplier => self.i_s,
            Player::Manufacturer => self.i_m,
            Player::Retailer => self.i_r,
        }
    }
}

/// Lagrange values that the leaders attach to their followers' optimality
/// conditions.
///
/// `lambda` is the manufacturer's value on the retailer investment FOC.
/// `mu_r`, `mu_m`, `nu` are the supplier's values on the retailer FOC, the
/// manufacturer's own-investment FOC and the manufacturer's FOC in the
/// retailer investment. `w` is the supplier's forward multiplier on the
/// retailer costate recursion and `y` the supplier's backward costate of `u`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NestingMultipliers {
    /// t = 1..=T
    pub lambda: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub mu_m: Vec<f64>,
    pub nu: Vec<f64>,
    /// t = 1..=T+1
    pub w: Vec<f64>,
    /// t = 1..=T+1, terminal entry zero; the t = 1 entry is the recursion value.
    pub y: Vec<f64>,
}

/// Full-horizon path of the game.
///
/// Vectors are stored 0-based: index `k` holds period `t = k + 1`. State-like
/// series (`x`, costates, `u`, `u_prime`, `w`, `y`) have `T + 1` entries,
/// per-period series have `T`. The costate entry at `t = 1` is not an
/// unknown of the game; it carries the value of the backward recursion at the
/// fixed initial state (the marginal value of initial CSR stock).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub controls: Vec<Controls>,
    pub q: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_m: Vec<f64>,
    pub p_r: Vec<f64>,
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub nesting: NestingMultipliers,
}

impl Trajectory {
    pub fn zeros(horizon: usize) -> Self {
        let n = horizon + 1;
        Self {
            x: vec![0.0; n],
            controls: vec![Controls::default(); horizon],
            q: vec![0.0; horizon],
            p_s: vec![0.0; n],
            p_m: vec![0.0; n],
            p_r: vec![0.0; n],
            u: vec![0.0; n],
            u_prime: vec![0.0; n],
            nesting: NestingMultipliers {
                lambda: vec![0.0; horizon],
                mu_r: vec![0.0; horizon],
                mu_m: vec![0.0; horizon],
                nu: vec![0.0; horizon],
                w: vec![0.0; n],
                y: vec![0.0; n],
            },
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn check_shape(&self) -> Result<()> {
        let t = self.horizon();
        let n = t + 1;
        let long = [
            ("x", self.x.len()),
            ("p_s", self.p_s.len()),
            ("p_m", self.p_m.len()),
            ("p_r", self.p_r.len()),
            ("u", self.u.len()),
            ("u_prime", self.u_prime.len()),
            ("w", self.nesting.w.len()),
            ("y", self.nesting.y.len()),
        ];
        let short = [
            ("q", self.q.len()),
            ("lambda", self.nesting.lambda.len()),
            ("mu_r", self.nesting.mu_r.len()),
            ("mu_m", self.nesting.mu_m.len()),
            ("nu", self.nesting.nu.len()),
        ];
        for (name, len) in long {
            if len != n {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {n}")));
            }
        }
        for (name, len) in short {
            if len != t {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {t}")));
            }
        }
        Ok(())
    }

    /// Largest absolute difference over every stored component.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// All components in a fixed order; used for comparisons and affinity checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(&self.x);
        for c in &self.controls {
            out.extend([c.i_s, c.i_m, c.i_r]);
        }
        out.extend(&self.q);
        out.extend(&self.p_s);
        out.extend(&self.p_m);
        out.extend(&self.p_r);
        out.extend(&self.u);
        out.extend(&self.u_prime);
        out.extend(&self.nesting.lambda);
        out.extend(&self.nesting.mu_r);
        out.extend(&self.nesting.mu_m);
        out.extend(&self.nesting.nu);
        out.extend(&self.nesting.w);
        out.extend(&self.nesting.y);
        out
    }
}

pub fn inverse_demand(q: f64, params: &ModelParams) -> f64 {
    params.a - params.b * q
}

/// `tau * I_own * (1 + theta * I_total)`.
pub fn tax_return(i_own: f64, i_total: f64, params: &ModelParams) -> f64 {
    params.tau * i_own * (1.0 + params.theta * i_total)
}

pub fn social_benefit(x: f64, delta: f64) -> f64 {
    delta * x * x
}

pub fn state_transition(x: f64, controls: &Controls, params: &ModelParams) -> f64 {
    params.alpha * x
        + params.beta_s * controls.i_s
        + params.beta_m * controls.i_m
        + params.beta_r * controls.i_r
}

/// Rolls the state equation forward from `params.x1`.
pub fn state_path(controls: &[Controls], params: &ModelParams) -> Vec<f64> {
    let mut x = Vec::with_capacity(controls.len() + 1);
    x.push(params.x1);
    for c in controls {
        let last = *x.last().unwrap();
        x.push(state_transition(last, c, params));
    }
    x
}

/// Traded quantity. The manufacturer's margin `(a - b q) q - v q` is the only
/// quantity term that is concave, and no quantity term touches the stock or
/// the investments, so the quantity decision is static.
pub fn optimal_quantity(params: &ModelParams) -> Result<f64> {
    if !(params.b > 0.0) {
        return Err(Error::Validation(vec![Violation {
            field: "b",
            bound: "(0, inf)",
            value: params.b,
        }]));
    }
    Ok(((params.a - params.v) / (2.0 * params.b)).max(0.0))
}

/// The period summand of `player`'s objective.
pub fn stage_payoff(
    player: Player,
    x: f64,
    q: f64,
    controls: &Controls,
    params: &ModelParams,
) -> f64 {
    let total = controls.total();
    match player {
        Player::Supplier => {
            (params.v - params.c) * q
                + social_benefit(x, params.delta_s)
                + tax_return(controls.i_s, total, params)
                - controls.i_s
                + params.d * controls.i_m
        }
        Player::Manufacturer => {
            inverse_demand(q, params) * q - params.v * q
                + social_benefit(x, params.delta_m)
                + tax_return(controls.i_m, total, params)
                - controls.i_m
                + params.d_hat * controls.i_r
        }
        Player::Retailer => {
            params.z * q - inverse_demand(q, params) * q
                + social_benefit(x, params.delta_r)
                + tax_return(controls.i_r, total, params)
                - controls.i_r
        }
    }
}

/// Sum of stage payoffs over `t = 1..=T`.
///
/// Fails if the stored state path does not follow the state equation.
pub fn total_objective(player: Player, trajectory: &Trajectory, params: &ModelParams) -> Result<f64> {
    let horizon = trajectory.horizon();
    if trajectory.x.len() != horizon + 1 || trajectory.q.len() != horizon {
        return Err(Error::Shape(format!(
            "horizon {horizon} needs {} states and {horizon} quantities",
            horizon + 1
        )));
    }
    for (t, c) in trajectory.controls.iter().enumerate() {
        let next = state_transition(trajectory.x[t], c, params);
        let residual = (next - trajectory.x[t + 1]).abs();
        if residual > 1e-9 * next.abs().max(1.0) {
            return Err(Error::InconsistentTrajectory { t: t + 1, residual });
        }
    }
    Ok(objective_along(player, &trajectory.x, &trajectory.q, &trajectory.controls, params))
}

/// Objective of `player` along an explicit state/control path, no consistency check.
pub fn objective_along(
    player: Player,
    x: &[f64],
    q: &[f64],
    controls: &[Controls],
    params: &ModelParams,
) -> f64 {
    controls
        .iter()
        .enumerate()
        .map(|(t, c)| stage_payoff(player, x[t], q[t], c, params))
        .sum()
}
