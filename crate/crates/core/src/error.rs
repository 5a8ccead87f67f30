use thiserror::Error;

/// Every failure the solver, simulator and verifier can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("standing assumption violated: {condition} (got {value})")]
    StandingAssumptionViolated { condition: &'static str, value: f64 },

    #[error("horizon must be positive, got T = {0}")]
    NonpositiveHorizon(f64),

    #[error("initial inventory variance must be nonnegative, got {0}")]
    NegativeVariance(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{system} system blew up near t = {t}")]
    NonFiniteCoefficient { system: &'static str, t: f64 },

    #[error("time {t} is outside the coefficient range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("no shift constant certifies the transformed driver (best min eigenvalue {best_min_eigenvalue:e} at Lambda = {lambda:e})")]
    NoPsdLambdaFound { best_min_eigenvalue: f64, lambda: f64 },

    #[error("{n_paths} paths exceed the number of independent per-path streams")]
    SeedCollision { n_paths: usize },

    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("path {path} ends with inventory {inventory} but the strategy has no terminal block")]
    LiquidationViolation { path: usize, inventory: f64 },

    #[error("ensemble carries no diffusion-loading record")]
    MissingDiffusionRecord,

    #[error("step {n}: {which} = {value} is not positive")]
    SingularDenominator { n: usize, which: &'static str, value: f64 },

    #[error("bisection bounds do not bracket a threshold: {0}")]
    BoundsDoNotBracket(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
