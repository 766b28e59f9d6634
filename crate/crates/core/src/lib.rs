//! Semi-supervised learning with explicit relationship regularization.
//!
//! Besides the usual graph smoothness penalty on a function `f`, the solvers
//! penalize the pairwise relationships `K_ij = exp(-|f_i - f_j|^2 / sigma_f^2)`
//! through `tr[K^T L^p K]`, a sparse neighborhood variant, and a loss on
//! must-link / cannot-link labels.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod relreg;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
