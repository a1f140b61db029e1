//! Plug-in moment bounds.
//!
//! The bound formulas need `κ`, `s₄` and `Tr(G)`. When these are not known
//! they are estimated from the sample itself; the result is marked as not
//! certified.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::MomentBounds;
use crate::error::{Error, Result};
use crate::Sample;

pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;
pub const DEFAULT_DIRECTIONS: usize = 20;

/// Largest empirical `mean(p⁴)/mean(p²)²` over the coordinate axes and
/// `n_directions` random Gaussian directions. Directions along which the
/// data has no energy are skipped; `None` if every direction is skipped.
pub fn max_directional_kurtosis(data: &DMatrix<f64>, n_directions: usize, seed: u64) -> Option<f64> {
    let d = data.ncols();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let axes = (0..d).map(|k| {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        e
    });
    let random: Vec<DVector<f64>> = (0..n_directions)
        .map(|_| DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    axes.chain(random)
        .filter_map(|theta| {
            let p = data * theta;
            let n = p.len() as f64;
            let m2 = p.iter().map(|x| x * x).sum::<f64>() / n;
            let m4 = p.iter().map(|x| x.powi(4)).sum::<f64>() / n;
            (m2 > 0.0).then(|| m4 / (m2 * m2))
        })
        .reduce(f64::max)
}

/// Plug-in [`MomentBounds`]: `κ̂` is the largest directional kurtosis
/// times `safety`, `ŝ₄ = (mean ‖X‖⁴)^{1/4}`, `Tr̂(G) = mean ‖X‖²` and
/// `Tr̂(G²) = ‖Ḡ‖²_F`. `κ̂` is raised if needed so that the result is
/// internally consistent (`ŝ₄² ≤ √κ̂ Tr̂(G)`).
pub fn estimate_moment_bounds(
    sample: &Sample,
    n_directions: usize,
    seed: u64,
    safety: f64,
) -> Result<MomentBounds> {
    let n = sample.n();
    if n < 4 {
        return Err(Error::SampleTooSmall {
            n,
            required: "n >= 4".into(),
        });
    }
    if !(safety >= 1.0) {
        return Err(Error::param("safety", format!("must be >= 1, got {safety}")));
    }
    let y = sample.data();
    let kurt = max_directional_kurtosis(y, n_directions, seed).ok_or(Error::DegenerateSample)?;
    let nf = n as f64;
    let sq_norms: Vec<f64> = y.row_iter().map(|r| r.norm_squared()).collect();
    let trace_g = sq_norms.iter().sum::<f64>() / nf;
    let s4 = (sq_norms.iter().map(|v| v * v).sum::<f64>() / nf).powf(0.25);
    let gbar = y.tr_mul(y) / nf;
    let trace_g2 = gbar.norm_squared();
    let consistency = (s4 * s4 / trace_g).powi(2);
    let kappa = (kurt * safety).max(consistency).max(1.0);
    Ok(MomentBounds::new(kappa, s4, trace_g, trace_g2)?.uncertified())
}
