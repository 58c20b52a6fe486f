//! Particle Monte Carlo laboratory for doubly coupled mean-field FBSDE systems:
//! time/noise discretization, convex-analysis kernel, coefficient models for the
//! linear-convex and input-constrained linear-quadratic control problems, a
//! Picard/continuation solver with least-squares regression backward passes,
//! assumption checkers, and independent reference solutions.

pub mod checks;
pub mod coefficients;
pub mod control;
pub mod convex;
pub mod ensemble;
pub mod error;
pub mod examples;
pub mod grid;
pub mod noise;
pub mod oracle;
pub mod norms;
pub mod solver;

pub use ensemble::{empirical_mean, EnsembleProcess, TripleProcess};
pub use error::{Error, Result};
pub use grid::{make_grid, TimeGrid};
pub use noise::{sample_brownian, BrownianEnsemble};
