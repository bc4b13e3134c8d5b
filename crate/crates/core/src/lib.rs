//! Optimal control of an underdamped stochastic heat engine in contact with
//! a bath whose temperature varies periodically in time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod exec;
pub mod montecarlo;
pub mod ode;
pub mod params;
pub mod profiles;
pub mod quadrature;
pub mod roots;
pub mod synthesis;
pub mod sweeps;

pub use dynamics::{CovarianceState, Model, Trajectory};
pub use error::{Error, Result};
pub use profiles::{Piece, ProfileMoments, ProfileSpec, Segment, TemperatureProfile};
pub use exec::Execution;
pub use params::EngineParams;
pub use synthesis::{Protocol, SigmaTrajectory};

/// Library version, stamped on every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
