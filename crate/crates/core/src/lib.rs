//! Degree-balanced stochastic block models described by a matrix of
//! signal-to-noise ratios.
//!
//! The crate covers the whole pipeline: building a model `(n, d, p, R)` and
//! sampling graphs from it, evaluating the single-node Gaussian channel
//! functions `I_X(S)` and `M_X(S)`, minimizing the potential function whose
//! minimum gives the asymptotic per-node mutual information, running belief
//! propagation on sampled graphs, exact enumeration on tiny instances, and a
//! sweep harness that produces phase-diagram tables.

pub mod bp;
pub mod channel;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod potential;
pub mod sweep;

pub use error::{Error, Result};
