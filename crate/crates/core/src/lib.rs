//! Finite-horizon open-loop Stackelberg equilibria of a supplier →
//! manufacturer → retailer chain investing in a shared CSR stock.
//!
//! [`sweep::solve_game`] is the main entry point. [`oracle`] holds an
//! independent dense solve and finite-difference stationarity checks.

pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod report;
pub mod stationarity;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{Controls, ModelParams, NestingMultipliers, Player, Trajectory};
pub use report::SolveReport;
pub use sweep::solve_game;
