//! Closed-form quantities for filtered fractional Brownian motion.
//!
//! Everything is expressed on the unit lattice (`n = 1`); by
//! self-similarity the `n`-scale covariances are these values times
//! `n^{-2H}` and every correlation is scale free.
//!
//! The IR statistic averages `psi(x, y) = |x + y| / (|x| + |y|)` over
//! consecutive second-order variations. For a centered Gaussian pair with
//! correlation `rho` its mean is
//!
//! ```text
//! Lambda(rho) = acos(-rho)/pi + sqrt((1 + rho)/(1 - rho)) * log(2/(1 + rho))/pi
//! ```
//!
//! and `Lambda2^{(i)}(H) = Lambda(rho2^{(i)}(H))` with `rho2^{(i)}` the lag-one
//! correlation of the `i`-dilated second differences.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Filter;

/// Boundary margin for Hurst values returned by inversions and estimators.
pub const EPS_H: f64 = 1e-6;

/// Width of the `h -> 1` window handled by the L'Hopital branch.
const ONE_LIMIT_WINDOW: f64 = 1e-6;

/// Bisection stops once the bracket is narrower than this.
const INVERSE_TOL: f64 = 1e-10;

/// Step of the central difference used for `dLambda2/dH`.
pub const DERIVATIVE_STEP: f64 = 1e-5;

/// A Hurst exponent in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstValue(f64);

impl HurstValue {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("Hurst value {h} not in (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for HurstValue {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstValue> for f64 {
    fn from(h: HurstValue) -> f64 {
        h.0
    }
}

/// `-1/2 sum_{i,j} a_i b_j |lag + j - i|^{2h}`: the unit-scale covariance of
/// `V^a B_H(0)` and `V^b B_H(lag)`.
pub fn fbm_cross_covariance(a: &Filter, b: &Filter, h: HurstValue, lag: i64) -> f64 {
    let two_h = 2.0 * h.get();
    let mut acc = 0.0;
    for (i, &ai) in a.coeffs().iter().enumerate() {
        for (j, &bj) in b.coeffs().iter().enumerate() {
            let d = (lag + j as i64 - i as i64).unsigned_abs();
            if d != 0 {
                acc += ai * bj * (d as f64).powf(two_h);
            }
        }
    }
    -0.5 * acc
}

/// `Cov(V^a B_H(0), V^a B_H(lag))` at unit scale.
pub fn fbm_filtered_covariance(f: &Filter, h: HurstValue, lag: i64) -> f64 {
    fbm_cross_covariance(f, f, h, lag)
}

fn ln_or_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.ln()
    }
}

/// Lag-one correlation of the `i`-dilated second differences of FBM.
///
/// ```text
/// rho2^{(i)}(H) = (-(2i+1)^{2H} - (2i-1)^{2H} + 4(i+1)^{2H} + 4(i-1)^{2H} - 6)
///                 / (i^{2H} (8 - 2^{2H+1}))
/// ```
///
/// The `i^{2H}` factor is the variance scaling of the dilated filter; for
/// `i = 1` it is one. The numerator and `8 - 2^{2H+1}` both vanish at `H = 1`,
/// where the ratio of derivatives is used instead.
pub fn rho2_dilated(i: usize, h: HurstValue) -> f64 {
    rho2_dilated_raw(i, h.get())
}

fn rho2_dilated_raw(i: usize, h: f64) -> f64 {
    assert!(i >= 1, "dilatation index must be >= 1");
    let fi = i as f64;
    let terms = [
        (2.0 * fi + 1.0, -1.0),
        (2.0 * fi - 1.0, -1.0),
        (fi + 1.0, 4.0),
        (fi - 1.0, 4.0),
    ];
    if (h - 1.0).abs() < ONE_LIMIT_WINDOW {
        // d/dH of x^{2H} is 2 ln(x) x^{2H}; evaluated at H = 1.
        let num: f64 = terms
            .iter()
            .map(|&(x, c)| c * 2.0 * ln_or_zero(x) * x * x)
            .sum();
        // d/dH [i^{2H} (8 - 2^{2H+1})] at H = 1 is -16 ln(2) i^2 since the
        // bracket vanishes there.
        let den = -16.0 * LN_2 * fi * fi;
        return num / den;
    }
    let two_h = 2.0 * h;
    let num: f64 = terms
        .iter()
        .map(|&(x, c)| if x == 0.0 { 0.0 } else { c * x.powf(two_h) })
        .sum::<f64>()
        - 6.0;
    let den = fi.powf(two_h) * (8.0 - 2f64.powf(two_h + 1.0));
    num / den
}

/// `rho2(H) = (-3^{2H} + 2^{2H+2} - 7) / (8 - 2^{2H+1})`.
pub fn rho2(h: HurstValue) -> f64 {
    rho2_dilated(1, h)
}

/// Mean of `psi` for a centered Gaussian pair with correlation `rho`.
pub fn lambda_of_rho(rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!("correlation {rho} not in (-1, 1)")));
    }
    Ok(lambda_of_rho_unchecked(rho))
}

fn lambda_of_rho_unchecked(rho: f64) -> f64 {
    (-rho).acos() / PI + ((1.0 + rho) / (1.0 - rho)).sqrt() * (2.0 / (1.0 + rho)).ln() / PI
}

/// `Lambda2(H) = E psi(V^{a*} B_H(0), V^{a*} B_H(1))`.
pub fn lambda2(h: HurstValue) -> f64 {
    lambda2_dilated(1, h)
}

/// IR mean function for the `i`-dilated second differences.
pub fn lambda2_dilated(i: usize, h: HurstValue) -> f64 {
    lambda2_raw(i, h.get())
}

fn lambda2_raw(i: usize, h: f64) -> f64 {
    lambda_of_rho_unchecked(rho2_dilated_raw(i, h))
}

/// Result of inverting `Lambda2^{(i)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub h: f64,
    /// The statistic fell outside `[Lambda2(EPS_H), Lambda2(1 - EPS_H)]`.
    pub clamped: bool,
}

/// Inverts `Lambda2^{(i)}` by bisection, clamping to `[EPS_H, 1 - EPS_H]`.
pub fn lambda2_inverse(s: f64, i: usize) -> Result<Inversion> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("IR statistic {s} not in [0, 1]")));
    }
    let (mut lo, mut hi) = (EPS_H, 1.0 - EPS_H);
    if s <= lambda2_raw(i, lo) {
        return Ok(Inversion {
            h: lo,
            clamped: s < lambda2_raw(i, lo),
        });
    }
    if s >= lambda2_raw(i, hi) {
        return Ok(Inversion {
            h: hi,
            clamped: s > lambda2_raw(i, hi),
        });
    }
    while hi - lo > INVERSE_TOL {
        let mid = 0.5 * (lo + hi);
        if lambda2_raw(i, mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Inversion {
        h: 0.5 * (lo + hi),
        clamped: false,
    })
}

/// `dLambda2^{(i)}/dH` by central differences; the stencil is shifted
/// inwards when it would leave `(0, 1)`.
pub fn lambda2_derivative(h: HurstValue, i: usize) -> f64 {
    lambda2_derivative_with_step(h, i, DERIVATIVE_STEP)
}

pub fn lambda2_derivative_with_step(h: HurstValue, i: usize, step: f64) -> f64 {
    let c = h.get().clamp(1.5 * step, 1.0 - 1.5 * step);
    (lambda2_raw(i, c + step) - lambda2_raw(i, c - step)) / (2.0 * step)
}
