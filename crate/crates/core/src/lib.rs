//! Blind source extraction from noisy instantaneous mixtures using
//! second-order statistics.
//!
//! The toolkit normalises lagged correlations by other lagged correlations
//! instead of variances, which cancels spatially and temporally white
//! noise without estimating its variance. It provides:
//!
//! - [`signal`]: seeded source generation, mixing, noise injection;
//! - [`stats`]: lagged correlation estimation and the normalised
//!   autocorrelation functionals that govern extraction order;
//! - [`pencil`]: batch extraction as a generalized eigenvector problem on
//!   a correlation pencil, plus deflation for sequential recovery;
//! - [`adaptive_direct`]: online extraction by gradient ascent on a
//!   weighted-lag correlation ratio;
//! - [`dual_lp`]: online extraction with a dual-linear-predictor
//!   structure, descending a ratio of noise-free power surrogates;
//! - [`metrics`]: the global demixing vector and its performance index;
//! - [`experiment`]: reproducible seeded Monte-Carlo experiment runs.

pub mod adaptive_direct;
mod delay;
pub mod dual_lp;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pencil;
pub mod seed;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
