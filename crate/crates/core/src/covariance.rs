//! Covariance estimation with an unknown mean.
//!
//! The sample is cut into contiguous blocks of `q` observations. Each block
//! gives the PSD matrix `Aᵢ = (1/(q(q−1))) Σ_{j<k} (X_j − X_k)(X_j − X_k)ᵀ`,
//! which is the unbiased empirical covariance of the block and does not
//! depend on the mean. The robust estimate of `Σ = E[Aᵢ]` then runs the
//! polarization scheme on the energies `θᵀAᵢθ`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{grid_points, grid_size, select_from_energies, tau_q, Grid, LOG_K_CAP};
use crate::error::{Error, Result};
use crate::gram::{polarize, positive_part, sym_eigen_desc, symmetrize, GramEstimate};
use crate::gram::{DEFAULT_STOP_TOL, DEFAULT_UPDATES};
use crate::harness::max_directional_kurtosis;
use crate::influence::psi;
use crate::mestimator::{adaptive_lambda_energies, adaptive_scale_energies, fallback_lambda, Sample};

pub const DEFAULT_Q: usize = 2;
const KURTOSIS_DIRECTIONS: usize = 32;
const KURTOSIS_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub blocks: Vec<DMatrix<f64>>,
    pub q: usize,
    pub m: usize,
}

impl BlockSet {
    /// Energies `θᵀAᵢθ`, one per block.
    pub fn energies(&self, theta: &DVector<f64>) -> Result<Vec<f64>> {
        let d = self.blocks[0].nrows();
        if theta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: theta.len(),
            });
        }
        Ok(self
            .blocks
            .iter()
            .map(|a| (theta.transpose() * a * theta)[(0, 0)].max(0.0))
            .collect())
    }

    pub fn mean(&self) -> DMatrix<f64> {
        let d = self.blocks[0].nrows();
        let sum = self
            .blocks
            .iter()
            .fold(DMatrix::zeros(d, d), |acc, a| acc + a);
        sum / self.m as f64
    }
}

pub fn make_blocks(sample: &Sample, q: usize) -> Result<BlockSet> {
    if q < 2 {
        return Err(Error::param("q", format!("must be >= 2, got {q}")));
    }
    let n = sample.n();
    if n < q {
        return Err(Error::SampleTooSmall {
            n,
            required: format!("n >= q = {q}"),
        });
    }
    let m = n / q;
    if !n.is_multiple_of(q) {
        warn!("discarding the last {} observations (n = {n}, q = {q})", n % q);
    }
    let y = sample.data();
    let d = sample.d();
    let norm = 1.0 / (q * (q - 1)) as f64;
    let blocks = (0..m)
        .map(|b| {
            let mut a = DMatrix::zeros(d, d);
            for j in b * q..(b + 1) * q {
                for k in (j + 1)..(b + 1) * q {
                    let diff = (y.row(j) - y.row(k)).transpose();
                    a.ger(norm, &diff, &diff, 1.0);
                }
            }
            symmetrize(&mut a);
            a
        })
        .collect();
    Ok(BlockSet { blocks, q, m })
}

/// `(1/m) Σ ψ(θᵀAᵢθ − λ)`.
pub fn r_lambda_sym(blocks: &BlockSet, theta: &DVector<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    let e = blocks.energies(theta)?;
    Ok(e.iter().map(|&v| psi(v - lambda)).sum::<f64>() / e.len() as f64)
}

/// The two right-hand sides for the block matrices: the coefficient `C₁`
/// with `E[‖Aθ‖²] ≤ C₁·θᵀΣθ` on the unit sphere, and the bound on
/// `E[Tr(A²)]`.
pub fn block_moment_bounds(sigma: &DMatrix<f64>, kappa: f64, q: usize) -> Result<(f64, f64)> {
    if q < 2 {
        return Err(Error::param("q", format!("must be >= 2, got {q}")));
    }
    if !sigma.is_square() {
        return Err(Error::ShapeMismatch {
            left_rows: sigma.nrows(),
            left_cols: sigma.ncols(),
            right_rows: sigma.ncols(),
            right_cols: sigma.nrows(),
        });
    }
    let qf = q as f64;
    let shrink = 1.0 - (qf - 2.0) / (qf * (qf - 1.0));
    let inflate = (kappa + 1.0 / (qf - 1.0)) / qf;
    let (values, _) = sym_eigen_desc(sigma).ok_or(Error::NonFinite { iteration: 0 })?;
    let op = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tr = sigma.trace();
    let tr2 = (sigma * sigma).trace();
    Ok((shrink * op + inflate * tr, shrink * tr2 + inflate * tr * tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// Per-direction estimator selected on the certified grid.
    GridCertified,
    /// Adaptive scale on the block energies.
    IterativePractical,
}

/// Moment inputs for [`CovarianceMode::GridCertified`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    /// Kurtosis bound `κ′` of the block matrices.
    pub kappa_prime: f64,
    /// `E[‖A‖∞²]`.
    pub e_opnorm_a2: f64,
    /// `E[Tr(A²)]`.
    pub e_tr_a2: f64,
    /// `Tr(Σ)`.
    pub trace_sigma: f64,
    pub certified: bool,
}

impl BlockMoments {
    /// Plug-in estimates from the blocks. The kurtosis of `X` is read off
    /// consecutive differences, for which
    /// `E⟨θ,D⟩⁴ / (E⟨θ,D⟩²)² = (κ_θ + 3)/2`.
    pub fn plug_in(sample: &Sample, blocks: &BlockSet) -> Result<Self> {
        let y = sample.data();
        let pairs = sample.n() / 2;
        if pairs < 2 {
            return Err(Error::SampleTooSmall {
                n: sample.n(),
                required: "n >= 4".into(),
            });
        }
        let diffs = DMatrix::from_fn(pairs, sample.d(), |i, k| y[(2 * i, k)] - y[(2 * i + 1, k)]);
        let ratio = max_directional_kurtosis(&diffs, KURTOSIS_DIRECTIONS, KURTOSIS_SEED)
            .ok_or(Error::DegenerateSample)?;
        let kappa = (2.0 * ratio - 3.0).max(1.0);
        let kappa_prime = 1.0 + tau_q(kappa, blocks.q)? / blocks.q as f64;
        let m = blocks.m as f64;
        let mut e_op = 0.0;
        let mut e_tr2 = 0.0;
        let mut tr = 0.0;
        for a in &blocks.blocks {
            let (values, _) = sym_eigen_desc(a).ok_or(Error::NonFinite { iteration: 0 })?;
            e_op += values[0].max(0.0).powi(2);
            e_tr2 += a.norm_squared();
            tr += a.trace();
        }
        if !(e_op > 0.0) {
            return Err(Error::DegenerateSample);
        }
        Ok(BlockMoments {
            kappa_prime,
            e_opnorm_a2: e_op / m,
            e_tr_a2: e_tr2 / m,
            trace_sigma: tr / m,
            certified: false,
        })
    }

    fn grid(&self, m: usize, epsilon: f64) -> Grid {
        let k = grid_size(m as f64, self.kappa_prime, crate::bounds::DEFAULT_A).max(1) as usize;
        grid_points(
            m,
            self.kappa_prime,
            self.e_opnorm_a2,
            self.e_tr_a2 / self.e_opnorm_a2,
            crate::bounds::DEFAULT_A,
            epsilon,
            k,
        )
    }

    /// Energy threshold in `]0, E[‖A‖∞²]^{1/2}]`.
    fn sigma(&self, m: usize, epsilon: f64) -> f64 {
        let cap = self.e_opnorm_a2.sqrt();
        let denom = m as f64 / 128.0 - LOG_K_CAP - (1.0 / epsilon).ln();
        if denom > 0.0 {
            (100.0 * self.kappa_prime * self.trace_sigma / denom).min(cap)
        } else {
            cap
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    pub q: usize,
    pub epsilon: f64,
    pub mode: CovarianceMode,
    pub num_updates: usize,
    pub stop_tol: f64,
    pub positive_part: bool,
    /// Supplied moment bounds for the certified mode; plug-in when absent.
    pub moments: Option<BlockMoments>,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        CovarianceOptions {
            q: DEFAULT_Q,
            epsilon: 0.1,
            mode: CovarianceMode::IterativePractical,
            num_updates: DEFAULT_UPDATES,
            stop_tol: DEFAULT_STOP_TOL,
            positive_part: false,
            moments: None,
        }
    }
}

pub fn robust_covariance(
    sample: &Sample,
    q: usize,
    epsilon: f64,
    mode: CovarianceMode,
) -> Result<GramEstimate> {
    robust_covariance_with(
        sample,
        &CovarianceOptions {
            q,
            epsilon,
            mode,
            ..CovarianceOptions::default()
        },
    )
}

pub fn robust_covariance_with(sample: &Sample, opts: &CovarianceOptions) -> Result<GramEstimate> {
    crate::mestimator::check_epsilon(opts.epsilon)?;
    if opts.num_updates == 0 {
        return Err(Error::param("num_updates", "must be >= 1"));
    }
    let blocks = make_blocks(sample, opts.q)?;
    let m = blocks.m;
    let eps = opts.epsilon;

    let certified = match opts.mode {
        CovarianceMode::IterativePractical => None,
        CovarianceMode::GridCertified => {
            let mb = match opts.moments {
                Some(mb) => mb,
                None => BlockMoments::plug_in(sample, &blocks)?,
            };
            let grid = mb.grid(m, eps);
            let sigma = mb.sigma(m, eps);
            Some((mb, grid, sigma))
        }
    };

    let mut current = blocks.mean();
    let mut deltas = Vec::new();
    let mut lambdas = Vec::new();
    let mut iterations = 0;
    for k in 0..opts.num_updates {
        let (_, basis) = sym_eigen_desc(&current).ok_or(Error::NonFinite { iteration: k })?;
        let rotated: Vec<DMatrix<f64>> = blocks
            .blocks
            .iter()
            .map(|a| basis.transpose() * a * &basis)
            .collect();
        let energies = |i: usize, j: usize, sign: f64| -> Vec<f64> {
            rotated
                .iter()
                .map(|b| {
                    if i == j {
                        4.0 * b[(i, i)]
                    } else {
                        b[(i, i)] + b[(j, j)] + sign * 2.0 * b[(i, j)]
                    }
                    .max(0.0)
                })
                .collect()
        };

        let c = match &certified {
            None => {
                let d = basis.ncols();
                let mean_lambda = (0..d)
                    .map(|i| {
                        adaptive_lambda_energies(&energies(i, i, 1.0), eps)
                            .unwrap_or_else(|_| fallback_lambda(m))
                    })
                    .sum::<f64>()
                    / d as f64;
                lambdas.push(mean_lambda);
                polarize(d, |i, j, s| adaptive_scale_energies(&energies(i, j, s), eps))?
            }
            Some((mb, grid, sigma)) => {
                let d = basis.ncols();
                let select = |i: usize, j: usize, s: f64| {
                    let norm_sq = if i == j { 4.0 } else { 2.0 };
                    select_from_energies(
                        &energies(i, j, s),
                        norm_sq,
                        grid,
                        *sigma,
                        mb.kappa_prime,
                        mb.e_opnorm_a2.sqrt(),
                    )
                };
                let mean_lambda = (0..d)
                    .map(|i| select(i, i, 1.0).map(|sel| sel.lambda_hat))
                    .sum::<Result<f64>>()?
                    / d as f64;
                lambdas.push(mean_lambda);
                polarize(d, |i, j, s| select(i, j, s).map(|sel| sel.value))?
            }
        };

        let mut next = &basis * c * basis.transpose();
        symmetrize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k });
        }
        let delta = (&next - &current).norm();
        deltas.push(delta);
        current = next;
        iterations += 1;
        if k > 0 && delta < opts.stop_tol {
            break;
        }
    }

    if opts.positive_part {
        current = positive_part(&current);
    }
    Ok(GramEstimate {
        matrix: current,
        iterations,
        frobenius_deltas: deltas,
        lambda_used: lambdas,
    })
}

/// `(1/(n−1)) Σ (Xᵢ − X̄)(Xᵢ − X̄)ᵀ`.
pub fn empirical_covariance(sample: &Sample) -> Result<DMatrix<f64>> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::SampleTooSmall {
            n,
            required: "n >= 2".into(),
        });
    }
    let y = sample.data();
    let mean = y.row_mean();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut c = centered.tr_mul(&centered) / (n - 1) as f64;
    symmetrize(&mut c);
    Ok(c)
}
