use std::fmt;
use std::path::PathBuf;

/// A single violated parameter bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub bound: &'static str,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} violates {}", self.field, self.value, self.bound)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("controls undetermined by FOC: tau*theta = {tau_theta:e} removes every investment from the stationarity conditions")]
    UndeterminedControls { tau_theta: f64 },

    #[error("sweep breakdown at t = {t}: (I - B S_{{t+1}}) is singular")]
    SingularSweepStep { t: usize },

    #[error("stationarity system is singular (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("trajectory violates the state equation at t = {t} (|residual| = {residual:e})")]
    InconsistentTrajectory { t: usize, residual: f64 },

    #[error("trajectory shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
