//! Robust, dimension-free estimation of Gram and covariance matrices.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`influence`] | the influence function `ψ`, its envelope `χ`, universal constants |
//! | [`mestimator`] | direction-wise estimators `α̂`, `Ñ_λ`, the scale solver `S(p, λ)` |
//! | [`bounds`] | parameter grid, bound coefficients, confidence envelopes |
//! | [`gram`] | empirical and iterative robust Gram matrices |
//! | [`covariance`] | unknown-mean covariance via within-block differences |
//! | [`harness`] | data generation, benchmark, moment plug-ins, CSV/JSON I/O |
//!
//! The shipped matrix estimator is the iterative polarization scheme in
//! [`gram::robust_gram`]; each entry is a robust scale of projected data
//! in the eigenbasis of the previous iterate.

pub mod bounds;
pub mod covariance;
pub mod error;
pub mod gram;
pub mod harness;
pub mod influence;
pub mod mestimator;

pub use error::{Error, Result};
pub use mestimator::Sample;
