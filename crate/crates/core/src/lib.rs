//! Delay-Doppler parameter estimation for OFDM-style channel frames.
//!
//! Two estimators share one synthetic data path:
//!
//! * [`cfar`]: background subtraction, 2D Hamming window, periodogram,
//!   ordered-statistics CFAR and quadratic sub-bin refinement.
//! * [`mle`]: iterative maximum-likelihood estimation with joint damped
//!   Gauss-Newton refinement, a Cramer-Rao validity test and successive
//!   cancellation.
//!
//! [`signal_model`] generates frames and analytic ground truth for a rotating
//! two-sphere bistatic scene, and [`eval`] scores estimates against it.

pub mod cfar;
pub mod error;
pub mod eval;
pub mod io;
pub mod mle;
pub mod signal_model;
pub mod spectrum;

pub use error::{Error, Result};
