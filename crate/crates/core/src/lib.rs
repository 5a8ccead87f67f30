//! Optimal liquidation under transient price impact with self-exciting child
//! order flow and a mean-field interaction.
//!
//! The crate computes the linear-quadratic value function coefficients,
//! certifies that the Riccati system for them has a global solution,
//! simulates the optimal strategy and verifies its optimality by Monte Carlo
//! and against an independent discrete-time dynamic program.

pub mod cli;
pub mod config;
pub mod cost;
pub mod discrete;
pub mod error;
pub mod grid;
pub mod model;
pub mod ode;
pub mod report;
pub mod riccati;
pub mod simulate;
pub mod wellposedness;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{InitialLaw, ModelParams, StateMatrices, VolSchedule};
pub use riccati::{CoefficientPaths, FeedbackCoefficients};
pub use wellposedness::{select_lambda, WellposednessCertificate};
