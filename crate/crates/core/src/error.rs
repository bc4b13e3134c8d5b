use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid temperature profile: {0}")]
    InvalidProfile(String),

    #[error("invalid engine parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature did not converge after {levels} refinement levels on [{a}, {b}]")]
    NonConvergent { levels: u32, a: f64, b: f64 },

    #[error("power {power} outside the admissible range [0, {max_power})")]
    PowerOutOfRange { power: f64, max_power: f64 },

    #[error("no sign change of the multiplier residual up to mu = {mu_hi:e}")]
    BracketFailure { mu_hi: f64 },

    #[error("profile has no fluctuation in sqrt(T) (Var = {variance:e})")]
    DegenerateProfile { variance: f64 },

    #[error("efficiency formulas disagree: {direct} vs {third_moment} (tolerance {tolerance:e})")]
    FormulaMismatch { direct: f64, third_moment: f64, tolerance: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("integration needs about {estimated} steps per period, above the budget of {max_steps}")]
    StepBudget { estimated: usize, max_steps: usize },

    #[error("covariance lost positive definiteness at t = {t}")]
    PositivityLoss { t: f64 },

    #[error("periodic orbit not reached after {cycles} cycles (residual {residual:e})")]
    NoConvergence { cycles: usize, residual: f64 },

    #[error("trajectory is not periodic (boundary mismatch {mismatch:e})")]
    NotPeriodic { mismatch: f64 },

    #[error("profile is not a two-level Carnot profile")]
    NotCarnotProfile,

    #[error("cycle is degenerate: no work is exchanged")]
    DegenerateCycle,

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),

    #[error("unstable integration step at t = {t} for particle {particle}")]
    UnstableStep { t: f64, particle: usize },
}
