//! Controlled feature selection with Gaussian model-X knockoffs.
//!
//! The crate builds Gaussian knockoff copies of a design matrix, scores each
//! feature by how often swapping it for its knockoff increases the held-out
//! prediction error, converts those scores into exact binomial p-values, and
//! selects features under FDR, FDP-exceedance, or k-FWER guarantees. A seeded
//! simulation harness generates single-index benchmark data and aggregates
//! error-control and power metrics over many trials.
//!
//! Modules:
//! - [`data`]: validated design-matrix and response containers
//! - [`knockoffs`]: covariance models and the Gaussian knockoff sampler
//! - [`predictors`]: coordinate-descent lasso and sigmoid-kernel ridge
//! - [`stats`]: error-difference and lasso-coefficient-difference importance
//!   statistics plus exact binomial p-values
//! - [`selection`]: knockoff+ thresholding and stepdown procedures
//! - [`sim`]: benchmark generator and the multi-trial experiment runner
//!
//! Trial and per-feature loops run on rayon when the default `parallel`
//! feature is enabled; results are identical to the sequential fallback
//! because every unit of work derives its own random stream.

pub mod data;
pub mod error;
pub mod knockoffs;
pub mod predictors;
pub mod seeds;
pub mod selection;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
