//! Data generation, the heavy-tail benchmark, plug-in moments and file I/O.
//!
//! The benchmark draws from `(1−α)·N(0, M₁) + α·N(0, s·I)` where `M₁` has
//! the block `[[2, 1], [1, 1]]` on the first two coordinates and `0.01` on
//! the rest of the diagonal. Its Gram matrix is `(1−α)M₁ + sαI`.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`); trial `k` uses the
//! stream seeded with `seed + k`, so every trial can be reproduced alone.

mod benchmark;
mod io;
mod moments;

pub use benchmark::{
    quantile_curve, run_benchmark, sample_hash, write_outputs, BenchmarkReport, EstimatorSummary,
    Summary, TrialFailure, TrialResult,
};
pub use io::{read_matrix_csv, read_matrix_file, write_matrix_csv, write_matrix_file};
pub use moments::{
    estimate_moment_bounds, max_directional_kurtosis, DEFAULT_DIRECTIONS, DEFAULT_SAFETY_FACTOR,
};

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{DEFAULT_STOP_TOL, DEFAULT_UPDATES};
use crate::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Robust,
    Empirical,
    Covariance,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Robust => "robust",
            Estimator::Empirical => "empirical",
            Estimator::Covariance => "covariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub alpha_mix: f64,
    /// Variance of the contaminating component.
    pub contaminant_scale: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub estimators: BTreeSet<Estimator>,
    pub output_path: String,
    pub num_updates: usize,
    pub stop_tol: f64,
    /// Block size for the covariance estimator.
    pub q: usize,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 100,
            d: 10,
            trials: 500,
            alpha_mix: 0.05,
            contaminant_scale: 16.0,
            seed: 0,
            epsilon: 0.1,
            estimators: [Estimator::Robust, Estimator::Empirical].into_iter().collect(),
            output_path: "out".into(),
            num_updates: DEFAULT_UPDATES,
            stop_tol: DEFAULT_STOP_TOL,
            q: crate::covariance::DEFAULT_Q,
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error as E;
        if self.trials < 1 {
            return Err(E::param("trials", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return Err(E::param("alpha_mix", format!("must lie in [0, 1], got {}", self.alpha_mix)));
        }
        if !(self.contaminant_scale > 0.0 && self.contaminant_scale.is_finite()) {
            return Err(E::param("contaminant_scale", "must be a finite positive number"));
        }
        if self.n < 2 {
            return Err(E::param("n", "must be >= 2"));
        }
        if self.d < 2 {
            return Err(E::param("d", "must be >= 2 (the covariance block is 2 x 2)"));
        }
        crate::mestimator::check_epsilon(self.epsilon)?;
        if self.num_updates < 1 {
            return Err(E::param("num_updates", "must be >= 1"));
        }
        if self.estimators.is_empty() {
            return Err(E::param("estimators", "must not be empty"));
        }
        if self.estimators.contains(&Estimator::Covariance) && (self.q < 2 || self.q > self.n) {
            return Err(E::param("q", format!("must satisfy 2 <= q <= n, got {}", self.q)));
        }
        Ok(())
    }

    /// Seed of trial `k`.
    pub fn trial_seed(&self, trial_index: usize) -> u64 {
        self.seed.wrapping_add(trial_index as u64)
    }
}

/// The light-tailed component's covariance `M₁`.
pub fn m1(d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_diagonal_element(d, d, 0.01);
    m[(0, 0)] = 2.0;
    m[(0, 1)] = 1.0;
    m[(1, 0)] = 1.0;
    m[(1, 1)] = 1.0;
    m
}

/// `(1−α)M₁ + sαI`.
pub fn true_gram(config: &ExperimentConfig) -> DMatrix<f64> {
    let d = config.d;
    m1(d) * (1.0 - config.alpha_mix)
        + DMatrix::identity(d, d) * (config.contaminant_scale * config.alpha_mix)
}

/// Draws `n` observations from the mixture with the given seed.
///
/// Per observation the generator first draws a uniform to pick the
/// component, then `d` standard normals.
pub fn gen_mixture(config: &ExperimentConfig, seed: u64) -> Result<Sample> {
    config.validate()?;
    let (n, d) = (config.n, config.d);
    let chol = m1(d)
        .cholesky()
        .expect("M1 is positive definite")
        .l();
    let spread = config.contaminant_scale.sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(n, d);
    for i in 0..n {
        let u: f64 = rng.random();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = if u < config.alpha_mix { z * spread } else { &chol * z };
        data.set_row(i, &x.transpose());
    }
    Sample::new(data).map_err(|e| match e {
        Error::InvalidSample(s) => Error::InvalidSample(format!("generated sample: {s}")),
        other => other,
    })
}
