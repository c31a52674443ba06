//! Simple and generalized Pareto processes on discretized compact domains.
//!
//! Processes are built constructively as `W = Y * V` with `Y` standard
//! Pareto and `V` a spectral profile whose supremum is `omega0`. On top of
//! that the crate evaluates the closed-form distribution functions by Monte
//! Carlo over `V`, simulates simple max-stable processes by the Poisson
//! (Penrose) construction, and implements the peaks-over-threshold lifting
//! procedure that maps moderately extreme fields to far more extreme ones.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod df;
pub mod error;
pub mod gp;
pub mod grid;
pub mod lifting;
pub mod maxstable;
pub mod pareto;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use grid::{Field, FieldOp, Grid};
pub use rng::RandomStream;
pub use spectral::{ProfileKind, ProfileSampler, SpectralProfileSpec};
