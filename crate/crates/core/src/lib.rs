//! Supervised classification of discretely observed one-dimensional diffusion
//! paths.
//!
//! Each class `i` is a diffusion `dX = b_i(X) dt + sigma(X) dW`, `X_0 = 0`,
//! observed on the grid `{0, 1/n, ..., 1}`. The drifts and the shared
//! diffusion coefficient are estimated by constrained least squares on a
//! clamped B-spline space; the Bayes rule (a weighted softmax of Girsanov
//! log-likelihood statistics) is then evaluated with the estimates plugged in.
//!
//! Modules, bottom-up:
//! - [`spline`]: knots, basis evaluation, spline functions with post-transforms
//! - [`models`]: the generative mixture models used for simulation
//! - [`simulate`]: Euler-Maruyama path generation and the dataset file format
//! - [`regress`]: ball-constrained least squares, empirical norms, Gram matrices
//! - [`estimate`]: drift / diffusion / weight estimators and dimension selection
//! - [`classify`]: Girsanov statistics, plug-in and Bayes classifiers, risks
//! - [`harness`]: experiment runner, table reproduction, persistence, CLI

pub mod classify;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod models;
pub mod regress;
pub mod simulate;
pub mod spline;

pub use error::{Error, Result};
