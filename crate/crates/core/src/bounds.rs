//! Non-asymptotic bound calculators.
//!
//! Everything here is a closed-form formula or a monotone inversion of
//! one. The functions take moment information as *upper bounds*; feeding
//! true moments gives the tightest certified envelopes, while plug-in
//! estimates (see [`crate::harness::estimate_moment_bounds`]) are not
//! certified.
//!
//! Quantities that may be infinite are returned as [`Bound`] so that
//! argmin/argmax logic never has to reason about IEEE infinities.

use std::cmp::Ordering;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::CONSTANTS;
use crate::mestimator::{alpha_hat_from_projections, check_epsilon, tilde_n_from_alpha, Sample};

/// Rounded constant `2 cosh(1/8)²` (rounded up).
pub const ZETA_VARIANCE_COEFF: f64 = 2.032;
/// Rounded constant `(2 + 3c) / (4 (2 + c))` (rounded up).
pub const ZETA_ENTROPY_COEFF: f64 = 0.73;
/// Rounded constant `2 (2 + c) cosh(1/4)²` (rounded up).
pub const ZETA_PERTURBATION_COEFF: f64 = 98.5;
/// Upper bound of `log K` for `n ≤ 10²⁰` and `a = 1/2`.
pub const LOG_K_CAP: f64 = 4.35;
/// Default grid spacing parameter.
pub const DEFAULT_A: f64 = 0.5;

/// A possibly infinite non-negative quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }

    /// The value as `f64`, with `Unbounded` mapped to `+∞`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Bound::Finite(v)
        } else {
            Bound::Unbounded
        }
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Bound::Finite(a), Bound::Finite(b)) => a.partial_cmp(b),
            (Bound::Finite(_), Bound::Unbounded) => Some(Ordering::Less),
            (Bound::Unbounded, Bound::Finite(_)) => Some(Ordering::Greater),
            (Bound::Unbounded, Bound::Unbounded) => Some(Ordering::Equal),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => f.write_str("inf"),
        }
    }
}

/// Upper bounds on the moments of the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBounds {
    /// Kurtosis ratio `sup_θ E⟨θ,X⟩⁴ / (E⟨θ,X⟩²)²`.
    pub kappa: f64,
    /// `E[‖X‖⁴]^{1/4}`.
    pub s4: f64,
    /// `Tr(G) = E‖X‖²`.
    pub trace_g: f64,
    /// `Tr(G²)`.
    pub trace_g2: f64,
    /// False for plug-in estimates.
    #[serde(default = "default_true")]
    pub certified: bool,
}

fn default_true() -> bool {
    true
}

impl MomentBounds {
    pub fn new(kappa: f64, s4: f64, trace_g: f64, trace_g2: f64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be >= 1, got {kappa}")));
        }
        if !(s4 > 0.0 && s4.is_finite()) {
            return Err(Error::param("s4", format!("must be > 0, got {s4}")));
        }
        if !(trace_g > 0.0 && trace_g.is_finite()) {
            return Err(Error::param("trace_g", format!("must be > 0, got {trace_g}")));
        }
        if !(trace_g2 >= 0.0 && trace_g2.is_finite()) {
            return Err(Error::param("trace_g2", format!("must be >= 0, got {trace_g2}")));
        }
        // s4² ≤ κ^{1/2} Tr(G), with a little room for rounding
        if s4 * s4 > kappa.sqrt() * trace_g * (1.0 + 1e-12) {
            return Err(Error::param(
                "s4",
                format!(
                    "s4² = {} exceeds kappa^(1/2) * trace_g = {}",
                    s4 * s4,
                    kappa.sqrt() * trace_g
                ),
            ));
        }
        Ok(MomentBounds {
            kappa,
            s4,
            trace_g,
            trace_g2,
            certified: true,
        })
    }

    pub fn uncertified(mut self) -> Self {
        self.certified = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
}

/// Finite set of `(λ_j, β_j)`, `0 ≤ j < K`, geometrically spaced in `j·a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<GridPoint>,
    pub k: usize,
    pub a: f64,
    pub epsilon: f64,
    pub n: usize,
}

/// Sample size below which the grid is empty: `72 (2 + c) κ^{1/2}`.
pub fn grid_threshold(kappa: f64) -> f64 {
    72.0 * (2.0 + CONSTANTS.c) * kappa.sqrt()
}

/// `1 + ⌈a⁻¹ log(n / (72 (2 + c) κ^{1/2}))⌉`, which is < 1 below the
/// threshold.
pub fn grid_size(n: f64, kappa: f64, a: f64) -> i64 {
    1 + ((n / grid_threshold(kappa)).ln() / a).ceil() as i64
}

/// The grid for the Gram-matrix estimator.
///
/// Fails when `n` is at or below [`grid_threshold`] (the grid would be
/// empty) and when `κ = 1` (the `λ_j` divide by `κ − 1`).
pub fn make_grid(n: usize, mb: &MomentBounds, a: f64, epsilon: f64) -> Result<Grid> {
    let k = checked_grid_size(n, mb.kappa, a, epsilon)?;
    if k < 1 {
        return Err(Error::SampleTooSmall {
            n,
            required: format!("n > {:.1}", grid_threshold(mb.kappa)),
        });
    }
    Ok(grid_points(n, mb.kappa, mb.s4.powi(4), 1.0, a, epsilon, k as usize))
}

/// Same as [`make_grid`] but with `K` clamped to at least 1, for sample
/// sizes below the threshold. The resulting bounds are typically vacuous.
pub fn make_grid_clamped(n: usize, mb: &MomentBounds, a: f64, epsilon: f64) -> Result<Grid> {
    let k = checked_grid_size(n, mb.kappa, a, epsilon)?.max(1);
    Ok(grid_points(n, mb.kappa, mb.s4.powi(4), 1.0, a, epsilon, k as usize))
}

fn checked_grid_size(n: usize, kappa: f64, a: f64, epsilon: f64) -> Result<i64> {
    check_epsilon(epsilon)?;
    if !(a > 0.0) {
        return Err(Error::param("a", "must be > 0"));
    }
    if n == 0 {
        return Err(Error::SampleTooSmall {
            n,
            required: "n >= 1".into(),
        });
    }
    if !(kappa > 1.0) {
        return Err(Error::param(
            "kappa",
            "must be > 1 to build the grid (use kappa >= 1 + 1e-6)",
        ));
    }
    Ok(grid_size(n as f64, kappa, a))
}

/// Shared grid construction.
///
/// `fourth_moment` is `s₄⁴` (Gram case) or `E‖A‖∞²` (symmetric matrices);
/// `trace_ratio` is `E Tr(A²) / E‖A‖∞²`, which is 1 in the Gram case.
pub(crate) fn grid_points(
    n: usize,
    kappa: f64,
    fourth_moment: f64,
    trace_ratio: f64,
    a: f64,
    epsilon: f64,
    k: usize,
) -> Grid {
    let c = CONSTANTS.c;
    let nf = n as f64;
    let log_term = (k as f64 / epsilon).ln();
    let points = (0..k)
        .map(|j| {
            let j = j as f64;
            let entropy =
                trace_ratio * (2.0 + 3.0 * c) / (4.0 * (2.0 + c) * kappa.sqrt()) * (j * a).exp();
            let lambda = (2.0 / (nf * (kappa - 1.0)) * (entropy + log_term)).sqrt();
            let beta = (2.0 * (2.0 + c) * kappa.sqrt() * fourth_moment * nf * (-(j - 0.5) * a).exp())
                .sqrt();
            GridPoint { lambda, beta }
        })
        .collect();
    Grid {
        points,
        k,
        a,
        epsilon,
        n,
    }
}

/// The quadruple `(ξ, μ, γ, δ)` attached to one `(λ, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCoeffs {
    pub xi: f64,
    pub mu: f64,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub beta: f64,
}

pub fn bound_coeffs(
    lambda: f64,
    beta: f64,
    n: usize,
    mb: &MomentBounds,
    grid_size: usize,
    epsilon: f64,
) -> BoundCoeffs {
    coeffs_from_moments(lambda, beta, n, mb.kappa, mb.s4 * mb.s4, grid_size, epsilon)
}

/// `s4_sq` is `s₄²`; for symmetric matrices pass `E[‖A‖∞²]^{1/2}`.
pub(crate) fn coeffs_from_moments(
    lambda: f64,
    beta: f64,
    n: usize,
    kappa: f64,
    s4_sq: f64,
    grid_size: usize,
    epsilon: f64,
) -> BoundCoeffs {
    let c = CONSTANTS.c;
    let nf = n as f64;
    let perturbation = (2.0 + c) * kappa.sqrt() * s4_sq / beta;
    let xi = kappa * lambda / 2.0;
    let mu = lambda * (kappa - 1.0) + perturbation;
    let gamma = lambda / 2.0 * (kappa - 1.0)
        + perturbation
        + (2.0 + 3.0 * c) * s4_sq * s4_sq / (2.0 * beta * beta * lambda)
        + (grid_size as f64 / epsilon).ln() / (nf * lambda);
    let delta = beta / (2.0 * nf * lambda);
    BoundCoeffs {
        xi,
        mu,
        gamma,
        delta,
        lambda,
        beta,
    }
}

/// Lower confidence function `Φ₋`.
pub fn phi_minus(t: f64, coeffs: &BoundCoeffs, norm_theta_sq: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let BoundCoeffs {
        xi,
        mu,
        gamma,
        delta,
        lambda,
        ..
    } = *coeffs;
    let r = delta * lambda * norm_theta_sq / t;
    if xi - mu + 2.0 * gamma + 2.0 * r < 1.0 {
        t * (1.0 - (gamma + r) / (1.0 + mu - gamma - r))
    } else {
        0.0
    }
}

/// Upper confidence function `Φ₊`; its generalized inverse gives the
/// upper end of the confidence interval.
pub fn phi_plus(t: f64, coeffs: &BoundCoeffs, norm_theta_sq: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let BoundCoeffs {
        xi,
        mu,
        gamma,
        delta,
        lambda,
        ..
    } = *coeffs;
    let r = delta * lambda * norm_theta_sq / t;
    if xi + mu + gamma + 2.0 * r < 1.0 {
        t / (1.0 + (gamma + r) / (1.0 - mu - gamma - 2.0 * r))
    } else {
        0.0
    }
}

/// `sup{t ≥ 0 : Φ₊(t) ≤ u}`, by bisection.
///
/// `Unbounded` when the gate of `Φ₊` never opens, i.e. `Φ₊ ≡ 0`.
pub fn phi_plus_inverse(u: f64, coeffs: &BoundCoeffs, norm_theta_sq: f64) -> Bound {
    let BoundCoeffs {
        xi,
        mu,
        gamma,
        delta,
        lambda,
        ..
    } = *coeffs;
    let open = 1.0 - (xi + mu + gamma);
    if !(open > 0.0) {
        return Bound::Unbounded;
    }
    // the gate holds exactly for t > gate
    let gate = 2.0 * delta * lambda * norm_theta_sq / open;
    let u = u.max(0.0);
    // Φ₊(t) ≥ t (1 − μ − γ − 2r)/(1 − μ) − ..., so this start is close;
    // doubling makes it a valid upper bracket.
    let slope = (1.0 - mu - gamma) / (1.0 - mu);
    let mut hi = if slope > 0.0 { u / slope } else { u };
    hi = hi.max(gate).max(f64::MIN_POSITIVE) * 2.0;
    let mut guard = 0;
    while phi_plus(hi, coeffs, norm_theta_sq) <= u {
        hi *= 2.0;
        guard += 1;
        if guard > 2_000 || !hi.is_finite() {
            return Bound::Unbounded;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if phi_plus(mid, coeffs, norm_theta_sq) <= u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Bound::Finite(lo)
}

/// The relative-error bound `B_{λ,β}(t)` at energy level `σ`.
pub fn b_bound(t: f64, sigma: f64, coeffs: &BoundCoeffs) -> Bound {
    let m = t.max(sigma);
    let BoundCoeffs {
        xi,
        mu,
        gamma,
        delta,
        lambda,
        ..
    } = *coeffs;
    let r = lambda * delta / m;
    if xi + mu + gamma + 2.0 * r < 1.0 {
        Bound::Finite((gamma + r) / (1.0 - mu - gamma - 2.0 * r))
    } else {
        Bound::Unbounded
    }
}

/// Output of [`select_hat_n`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub value: f64,
    pub lambda_hat: f64,
    pub beta_hat: f64,
    pub index: usize,
    pub bound: Bound,
    /// Every grid point had an infinite bound; the smallest `λ` was used.
    pub vacuous: bool,
}

/// The adaptive estimator `N̂(θ) = Ñ_λ̂(θ)`, with `(λ̂, β̂)` minimizing
/// `B_{λ,β}(‖θ‖⁻² Ñ_λ(θ))` over the grid. Ties go to the smallest index.
pub fn select_hat_n(
    sample: &Sample,
    theta: &DVector<f64>,
    grid: &Grid,
    sigma: f64,
    mb: &MomentBounds,
) -> Result<Selection> {
    let p = sample.project(theta)?;
    let energies: Vec<f64> = p.iter().map(|x| x * x).collect();
    select_from_energies(
        &energies,
        theta.norm_squared(),
        grid,
        sigma,
        mb.kappa,
        mb.s4 * mb.s4,
    )
}

/// Selection on precomputed energies `eᵢ = ⟨θ, Xᵢ⟩²` (or `θᵀAᵢθ`).
pub(crate) fn select_from_energies(
    energies: &[f64],
    norm_theta_sq: f64,
    grid: &Grid,
    sigma: f64,
    kappa: f64,
    s4_sq: f64,
) -> Result<Selection> {
    if grid.points.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    let p: Vec<f64> = energies.iter().map(|e| e.sqrt()).collect();
    let mut best: Option<Selection> = None;
    for (j, pt) in grid.points.iter().enumerate() {
        let value = tilde_n_from_alpha(alpha_hat_from_projections(&p, pt.lambda), pt.lambda);
        let coeffs = coeffs_from_moments(
            pt.lambda,
            pt.beta,
            energies.len(),
            kappa,
            s4_sq,
            grid.k,
            grid.epsilon,
        );
        let t = if norm_theta_sq > 0.0 {
            value / norm_theta_sq
        } else {
            0.0
        };
        let bound = b_bound(t, sigma, &coeffs);
        let better = match &best {
            None => true,
            Some(b) => bound < b.bound,
        };
        if better {
            best = Some(Selection {
                value,
                lambda_hat: pt.lambda,
                beta_hat: pt.beta,
                index: j,
                bound,
                vacuous: false,
            });
        }
    }
    let mut sel = best.expect("grid is non-empty");
    if !sel.bound.is_finite() {
        // fall back to the smallest λ
        let (j, pt) = grid
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.lambda.total_cmp(&b.1.lambda))
            .expect("grid is non-empty");
        sel = Selection {
            value: tilde_n_from_alpha(alpha_hat_from_projections(&p, pt.lambda), pt.lambda),
            lambda_hat: pt.lambda,
            beta_hat: pt.beta,
            index: j,
            bound: Bound::Unbounded,
            vacuous: true,
        };
    }
    Ok(sel)
}

/// `ζ*(t)` for the Gram matrix, with the rounded constants.
pub fn zeta_star(t: f64, mb: &MomentBounds, k: usize, epsilon: f64) -> f64 {
    zeta_generic(t, mb.kappa - 1.0, mb.trace_g, mb.kappa * mb.trace_g, k, epsilon)
}

/// `√(2.032·v·(0.73·e/t + log K + log ε⁻¹)) + √(98.5·w/t)`.
fn zeta_generic(t: f64, v: f64, e: f64, w: f64, k: usize, epsilon: f64) -> f64 {
    let first = ZETA_VARIANCE_COEFF
        * v
        * (ZETA_ENTROPY_COEFF * e / t + (k as f64).ln() + (1.0 / epsilon).ln());
    first.max(0.0).sqrt() + (ZETA_PERTURBATION_COEFF * w / t).sqrt()
}

/// `B*(t)`: finite when `[6 + (κ−1)⁻¹] ζ*(max{t,σ}) ≤ √n`.
pub fn b_star(
    t: f64,
    sigma: f64,
    n: usize,
    mb: &MomentBounds,
    k: usize,
    epsilon: f64,
) -> Bound {
    let m = t.max(sigma);
    if !(m > 0.0) {
        return Bound::Unbounded;
    }
    let z = zeta_star(m, mb, k, epsilon);
    let sqrt_n = (n as f64).sqrt();
    let gate = 6.0 + 1.0 / (mb.kappa - 1.0);
    if gate * z <= sqrt_n {
        Bound::from_f64(z / sqrt_n / (1.0 - 4.0 * z / sqrt_n))
    } else {
        Bound::Unbounded
    }
}

/// Energy threshold `100 κ Tr(G) / (n/128 − 4.35 − log ε⁻¹)` that keeps
/// `B*` finite. Not clamped to `s₄²`.
pub fn sigma_default(n: usize, mb: &MomentBounds, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let denom = n as f64 / 128.0 - LOG_K_CAP - (1.0 / epsilon).ln();
    if !(denom > 0.0) {
        return Err(Error::SampleTooSmall {
            n,
            required: "n/128 - 4.35 - log(1/eps) > 0 for a finite threshold".into(),
        });
    }
    Ok(100.0 * mb.kappa * mb.trace_g / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: Bound,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && Bound::Finite(v) <= self.upper
    }

    pub fn is_vacuous(&self) -> bool {
        self.lower == 0.0 && !self.upper.is_finite()
    }
}

/// `[max_Λ Φ₋(Ñ_λ(θ)), min_Λ Φ₊⁻¹(Ñ_λ(θ))]`.
pub fn confidence_interval(
    sample: &Sample,
    theta: &DVector<f64>,
    grid: &Grid,
    mb: &MomentBounds,
    epsilon: f64,
) -> Result<ConfidenceInterval> {
    check_epsilon(epsilon)?;
    if grid.points.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    let p = sample.project(theta)?;
    let norm_sq = theta.norm_squared();
    let mut lower = 0.0f64;
    let mut upper = Bound::Unbounded;
    for pt in &grid.points {
        let value = tilde_n_from_alpha(alpha_hat_from_projections(&p, pt.lambda), pt.lambda);
        let coeffs = bound_coeffs(pt.lambda, pt.beta, sample.n(), mb, grid.k, epsilon);
        lower = lower.max(phi_minus(value, &coeffs, norm_sq));
        let up = phi_plus_inverse(value, &coeffs, norm_sq);
        if up < upper {
            upper = up;
        }
    }
    Ok(ConfidenceInterval { lower, upper })
}

/// Which data radius feeds [`empirical_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// `R = maxᵢ ‖Xᵢ‖`.
    R,
    /// `R̃ = ((1/n) Σ ‖Xᵢ‖⁶)^{1/6}`.
    RTilde,
}

/// The `λ` that optimizes the bound at energy `max{t, σ}`.
pub fn lambda_star(t: f64, sigma: f64, n: usize, mb: &MomentBounds, k: usize, epsilon: f64) -> f64 {
    let c = CONSTANTS.c;
    let m = t.max(sigma);
    let entropy = (2.0 + 3.0 * c) * mb.s4 * mb.s4 / (4.0 * (2.0 + c) * mb.kappa.sqrt() * m);
    (2.0 / (n as f64 * (mb.kappa - 1.0)) * (entropy + (k as f64 / epsilon).ln())).sqrt()
}

/// Relative deviation bound for the classical empirical estimator `N̄`.
///
/// `radius` is `R` or `R̃` according to `mode`; the grid size `K` is
/// derived from `n`, `κ` and `a` (clamped to at least 1).
#[allow(clippy::too_many_arguments)]
pub fn empirical_bounds(
    t: f64,
    n: usize,
    mb: &MomentBounds,
    sigma: f64,
    epsilon: f64,
    a: f64,
    radius: f64,
    mode: RadiusMode,
) -> Bound {
    let k = grid_size(n as f64, mb.kappa, a).max(1) as usize;
    let bs = match b_star(t, sigma, n, mb, k, epsilon) {
        Bound::Finite(v) => v,
        Bound::Unbounded => return Bound::Unbounded,
    };
    let m = t.max(sigma);
    let ls = lambda_star(t, sigma, n, mb, k, epsilon);
    let one_minus_b = (1.0 - bs).max(0.0);
    match mode {
        RadiusMode::R => {
            let tau = ls * ls * (a / 2.0).exp() * radius.powi(4) / (3.0 * m * m);
            if tau == 0.0 {
                return Bound::Finite(bs);
            }
            let denom = (1.0 - tau).max(0.0) * one_minus_b;
            if denom > 0.0 {
                Bound::from_f64(bs + tau / denom)
            } else {
                Bound::Unbounded
            }
        }
        RadiusMode::RTilde => {
            let zeta = ls * ls * (a / 2.0).exp() * radius.powi(6) / (3.0 * m * m * m);
            if zeta == 0.0 {
                return Bound::Finite(bs);
            }
            if one_minus_b > 0.0 {
                Bound::from_f64(bs + zeta / one_minus_b)
            } else {
                Bound::Unbounded
            }
        }
    }
}

/// High-probability bound on `R = maxᵢ ‖Xᵢ‖` under an exponential moment
/// condition with exponent `p` and constants `alpha`, `eta`.
pub fn radius_bound(trace_g: f64, eta: f64, p: f64, alpha: f64, n: usize, epsilon: f64) -> f64 {
    trace_g.sqrt()
        * (1.0 + eta.powf(2.0 / p) + 2.0 / alpha * (n as f64 / epsilon).ln()).powf(p / 2.0)
}

/// `maxᵢ ‖Xᵢ‖`.
pub fn sample_radius(sample: &Sample) -> f64 {
    sample
        .data()
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max)
}

/// `((1/n) Σ ‖Xᵢ‖⁶)^{1/6}`.
pub fn sample_radius_tilde(sample: &Sample) -> f64 {
    let s: f64 = sample.data().row_iter().map(|r| r.norm_squared().powi(3)).sum();
    (s / sample.n() as f64).powf(1.0 / 6.0)
}

/// `τ_q(κ) = κ − 1 + 2/(q − 1)`; the block matrices have kurtosis at most
/// `1 + τ_q(κ)/q`.
pub fn tau_q(kappa: f64, q: usize) -> Result<f64> {
    check_q(q)?;
    Ok(kappa - 1.0 + 2.0 / (q as f64 - 1.0))
}

fn check_q(q: usize) -> Result<()> {
    if q < 2 {
        Err(Error::param("q", format!("must be >= 2, got {q}")))
    } else {
        Ok(())
    }
}

/// `ζ_q(t)` for the `q`-block covariance estimator.
///
/// Uses the simplified form when `q ‖Σ‖∞ ≤ Tr(Σ)` and the refined
/// moment form otherwise.
#[allow(clippy::too_many_arguments)]
pub fn zeta_q(
    t: f64,
    q: usize,
    kappa: f64,
    trace_sigma: f64,
    trace_sigma2: f64,
    op_norm_sigma: f64,
    k: usize,
    epsilon: f64,
) -> Result<f64> {
    let tau = tau_q(kappa, q)?;
    let qf = q as f64;
    if qf * op_norm_sigma <= trace_sigma {
        let w = (kappa + 1.0 + 2.0 / (qf * (qf - 1.0))) * trace_sigma;
        return Ok(zeta_generic(t, tau, trace_sigma, w, k, epsilon));
    }
    let shrink = 1.0 - (qf - 2.0) / (qf * (qf - 1.0));
    let inflate = (kappa + 1.0 / (qf - 1.0)) / qf;
    let tr_a2 = shrink * trace_sigma2 + inflate * trace_sigma * trace_sigma;
    let a_theta = shrink * op_norm_sigma + inflate * trace_sigma;
    let w = qf * shrink * op_norm_sigma + (kappa + 1.0 / (qf - 1.0)) * trace_sigma;
    Ok(zeta_generic(t, tau, tr_a2 / a_theta, w, k, epsilon))
}

/// Which `ζ*` to use for a symmetric PSD random matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymZetaForm {
    /// Uses `E[Tr(A²)]` and `E[‖A‖∞²]`.
    Full,
    /// Uses only `E[Tr(A)]`, which dominates the full form's entropy terms.
    Trace,
}

/// `ζ*(t)` for the expectation of a symmetric PSD random matrix.
#[allow(clippy::too_many_arguments)]
pub fn sym_zeta_star(
    t: f64,
    e_tr_a: f64,
    e_tr_a2: f64,
    e_opnorm_a2: f64,
    kappa: f64,
    k: usize,
    epsilon: f64,
    form: SymZetaForm,
) -> f64 {
    match form {
        SymZetaForm::Full => {
            let root = e_opnorm_a2.sqrt();
            let entropy = e_tr_a2 / (kappa.sqrt() * root);
            zeta_generic(t, kappa - 1.0, entropy, kappa.sqrt() * root, k, epsilon)
        }
        SymZetaForm::Trace => zeta_generic(t, kappa - 1.0, e_tr_a, kappa * e_tr_a, k, epsilon),
    }
}
