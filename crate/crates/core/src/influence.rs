//! Scalar influence functions.
//!
//! [`psi`] is the bounded, odd, non-decreasing influence function used by
//! every criterion in this crate. [`chi`] is its smoothed upper envelope,
//! which is sandwiched between `psi` and `log(1 + z + z²/2)`.

use std::f64::consts::{LN_2, SQRT_2};

/// Universal numerical constants attached to `psi` and `chi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiConstants {
    /// Constant entering the bound coefficients and the grid size.
    pub c: f64,
    /// Point in (0, 1) where `psi''` equals −1/4.
    pub z1: f64,
    /// `psi'(z1)`.
    pub p1: f64,
    /// Maximum value of `chi`.
    pub sup_chi: f64,
}

pub const CONSTANTS: PsiConstants = PsiConstants {
    c: 44.287_777_205_412_795,
    z1: 0.189_534_547_625_637_4,
    p1: 0.978_318_343_478_515_9,
    sup_chi: 2.102_439_968_832_692_8,
};

impl PsiConstants {
    /// Evaluates every constant from its closed form.
    pub fn from_formulas() -> Self {
        let root = (4.0 * SQRT_2 - 5.0).sqrt();
        let c = 15.0 / (8.0 * LN_2 * (SQRT_2 - 1.0)) * ((1.0 + 2.0 * SQRT_2) / 2.0).exp();
        let z1 = 1.0 - root;
        let p1 = root / (2.0 * (SQRT_2 - 1.0));
        let sup_chi = -(2.0 * (SQRT_2 - 1.0)).ln() + (1.0 + 2.0 * SQRT_2) / 2.0;
        PsiConstants { c, z1, p1, sup_chi }
    }
}

/// The influence function: `log 2` beyond 1, `-log(1 - t + t²/2)` on
/// `[0, 1]`, extended to negative arguments by antisymmetry.
#[inline]
pub fn psi(t: f64) -> f64 {
    if t < 0.0 {
        -psi_nonneg(-t)
    } else {
        psi_nonneg(t)
    }
}

#[inline]
fn psi_nonneg(t: f64) -> f64 {
    if t >= 1.0 {
        LN_2
    } else {
        -(1.0 - t + 0.5 * t * t).ln()
    }
}

/// Derivative of [`psi`]. At `t = ±1` the value is taken from inside
/// `(-1, 1)`, which is 0.
#[inline]
pub fn psi_prime(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        0.0
    } else {
        (1.0 - a) / (1.0 - a + 0.5 * a * a)
    }
}

/// Second derivative of `psi` on `[0, 1)`; odd extension elsewhere.
#[inline]
pub fn psi_second(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - a + 0.5 * a * a;
    // d/da [(1-a)/q] = (-(q) - (1-a)(a-1)) / q²
    let v = (-q + (1.0 - a) * (1.0 - a)) / (q * q);
    if t < 0.0 {
        -v
    } else {
        v
    }
}

/// Smoothed upper envelope of [`psi`]: equal to `psi` up to `z1`, then a
/// concave parabola that reaches its maximum `sup_chi` at `z1 + 4 p1`.
pub fn chi(z: f64) -> f64 {
    let PsiConstants { z1, p1, .. } = CONSTANTS;
    if z <= z1 {
        psi(z)
    } else if z <= z1 + 4.0 * p1 {
        let h = z - z1;
        psi(z1) + p1 * h - h * h / 8.0
    } else {
        psi(z1) + 2.0 * p1 * p1
    }
}
