//! Simulation toolkit for stochastic differential equations driven by
//! stationary-increment Gaussian noise written as a moving average of a
//! two-sided Wiener process,
//!
//! ```text
//! dX = b(X) dt + σ dG,    G_t = ∫ [g(u - t) - g(u)] dW_u .
//! ```
//!
//! The crate covers the whole coupling pipeline: kernels and their
//! regularity certificates, noise synthesis with its memory decomposition,
//! drift fields and the Euler solution map, synchronous coupling with
//! stopping-time schedules, coalescent (Girsanov) coupling, and the distance
//! and rate estimators used to read off convergence speeds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coalescence;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod stats;

mod conv;
mod par;

pub use error::{Error, Result};

/// Version of the library, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
