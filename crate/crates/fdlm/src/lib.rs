//! Bayesian inference for functional time series under a linear-Gaussian
//! state-space model whose states and observations are curves.
//!
//! Curves live in a reproducing-kernel Hilbert space induced by an
//! Ornstein--Uhlenbeck covariance kernel; on a finite grid every operation
//! reduces to dense linear algebra against Gram matrices. The crate provides:
//!
//! - [`kernel`]: the OU kernel, evaluation grids, Gram matrices, and a
//!   jitter-laddered Cholesky used everywhere a factorization can fail;
//! - [`statespace`]: model specification, grid restriction and refinement
//!   operators, and forward simulation;
//! - [`kalman`]: filtering, smoothing, forecasting, and backward sampling of
//!   state trajectories;
//! - [`mcmc`]: a Gibbs sampler for the kernel hyperparameters (conjugate
//!   scale updates, Metropolis steps for the length-scale), along with chain
//!   diagnostics and posterior band extraction;
//! - [`oracle`]: an explicit joint-Gaussian construction of the same model,
//!   kept deliberately naive so the recursive implementations can be checked
//!   against direct conditioning;
//! - [`verify`]: self-contained pass/fail checks built on the oracle and on
//!   closed-form examples.

pub mod error;
pub mod kalman;
pub mod kernel;
pub mod mcmc;
pub mod oracle;
pub mod statespace;
pub mod verify;

pub use error::{FdlmError, Result};

/// Library version, recorded in run manifests by front ends.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
