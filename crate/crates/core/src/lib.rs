//! Sparse ODE discovery from noisy state measurements.
//!
//! The pipeline denoises measurements by projecting them onto the column
//! space of an integrated monomial library, then recovers state derivatives
//! and sparse dynamics coefficients simultaneously through an iteratively
//! reweighted second-order cone program. Baseline recovery methods
//! (Tikhonov differentiation + reweighted Lasso, weak-form regression) and
//! a Monte Carlo verification harness are included for comparison studies.

pub mod analysis;
pub mod basis;
pub mod denoise;
pub mod error;
pub mod operators;
pub mod pareto;
pub mod regression;
pub mod rng;
pub mod systems;
pub mod weakform;

pub use basis::MonomialBasis;
pub use error::{Error, Result};
pub use operators::{DifferenceStack, Projector, TrapezoidMatrix};
pub use systems::{OdeSystem, Trajectory, TrajectoryKind};
