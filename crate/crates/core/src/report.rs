use crate::model::{ModelParams, Trajectory};

/// Seed used for finite-difference directions when none is given.
pub const DEFAULT_SEED: u64 = 20_241_017;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    Sweep,
    Dense,
}

impl SolverPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPath::Sweep => "sweep",
            SolverPath::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlayerValues {
    pub supplier: f64,
    pub manufacturer: f64,
    pub retailer: f64,
}

/// Results of the independent verification path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSummary {
    /// Max abs difference between sweep and dense trajectories.
    pub delta: f64,
    pub dense_residual_max: f64,
    pub follower_check_retailer: f64,
    pub follower_check_manufacturer: f64,
    pub leader_check: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver_path: SolverPath,
    pub horizon: usize,
    pub residual_max: f64,
    pub residual_rms: f64,
    pub objectives: PlayerValues,
    /// Every own-investment Hamiltonian is convex when `tau * theta > 0`, so
    /// the stationary point is not a local maximum in own control.
    pub convexity_warning: bool,
    pub negative_investment_warning: bool,
    /// Max abs difference between the followers' variables from the outer
    /// solve and an inner-level re-solve against the supplier's path.
    pub follower_consistency: f64,
    pub seed: u64,
    pub oracle: Option<OracleSummary>,
}

impl SolveReport {
    pub fn flags(params: &ModelParams, traj: &Trajectory) -> (bool, bool) {
        let convex = params.tau_theta() > 0.0;
        let negative = traj
            .controls
            .iter()
            .any(|c| c.i_s < 0.0 || c.i_m < 0.0 || c.i_r < 0.0);
        (convex, negative)
    }
}
