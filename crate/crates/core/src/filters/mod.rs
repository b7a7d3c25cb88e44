//! Scalar filter functions and their action as matrix functions of `hB̂`.
//!
//! Every analytic `f` of the skew matrix `hB̂` collapses to
//! `f(hB̂) = c0 I + c1 B̂ + c2 B̂²` because `B̂³ = −|B|² B̂`. The three
//! coefficients come from `f(i h b)` (real part → `c0`, `c2`; imaginary part
//! → `c1`), so applying a filter costs two cross products.
//!
//! Coefficients are written in terms of `y = h b` as `h·g(y)` or `h²·g(y)`
//! with `g` switching to a degree-8 Taylor polynomial for `|y| < 0.1`,
//! which removes the `0/0` at `y = 0` and keeps `b → 0` well defined.
//! The independent check is [`series::series_oracle`].

pub mod series;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3::{hat_apply, Vec3};

/// Magnitude below which a filter denominator counts as a pole.
pub const POLE_TOL: f64 = 1e-8;
/// `|ξ|` below which `sinc` and `tanc` use their Taylor polynomial.
pub const SERIES_SWITCH: f64 = 1e-3;
/// `|h b|` below which the Rodriguez coefficient functions use their degree-8
/// Taylor polynomial. The closed forms lose about `1e-16/y²` relative to
/// cancellation, the truncated series about `1e-15 (y/0.1)^10`.
pub const COEFF_SERIES_SWITCH: f64 = 0.1;

fn horner(y2: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * y2 + c)
}

/// `sin(ξ)/ξ`.
pub fn sinc(xi: f64) -> f64 {
    if xi.abs() < SERIES_SWITCH {
        horner(xi * xi, &[1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0, 1.0 / 362880.0])
    } else {
        xi.sin() / xi
    }
}

/// `tan(ξ)/ξ`.
pub fn tanc(xi: f64) -> Result<f64> {
    if xi.cos().abs() <= POLE_TOL {
        return Err(Error::FilterPole {
            function: "tanc",
            arg: xi,
        });
    }
    Ok(tanc_unchecked(xi))
}

fn tanc_unchecked(xi: f64) -> f64 {
    if xi.abs() < SERIES_SWITCH {
        horner(xi * xi, &[1.0, 1.0 / 3.0, 2.0 / 15.0, 17.0 / 315.0, 62.0 / 2835.0])
    } else {
        xi.tan() / xi
    }
}

/// The optimal evaluation-point weight `θ(ξ) = 1 / sinc(ξ/2)²`.
pub fn theta(xi: f64) -> Result<f64> {
    let s = sinc(0.5 * xi);
    if s.abs() <= POLE_TOL {
        return Err(Error::FilterPole {
            function: "theta",
            arg: xi,
        });
    }
    Ok(1.0 / (s * s))
}

fn check_sinc_pole(function: &'static str, arg: f64) -> Result<f64> {
    let s = sinc(arg);
    if s.abs() <= POLE_TOL {
        Err(Error::FilterPole { function, arg })
    } else {
        Ok(s)
    }
}

const G_SINC: [f64; 5] = [1.0 / 6.0, -1.0 / 120.0, 1.0 / 5040.0, -1.0 / 362880.0, 1.0 / 39916800.0];
const G_TANC: [f64; 5] = [
    -1.0 / 12.0,
    -1.0 / 120.0,
    -17.0 / 20160.0,
    -31.0 / 362880.0,
    -691.0 / 79833600.0,
];
const G_INV_SINC: [f64; 5] = [
    -1.0 / 6.0,
    -7.0 / 360.0,
    -31.0 / 15120.0,
    -127.0 / 604800.0,
    -73.0 / 3421440.0,
];
const G_INV_SINC2: [f64; 5] = [
    -1.0 / 12.0,
    -1.0 / 240.0,
    -1.0 / 6048.0,
    -1.0 / 172800.0,
    -1.0 / 5322240.0,
];
const G_SINC2: [f64; 5] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 20160.0,
    -1.0 / 1814400.0,
    1.0 / 239500800.0,
];
const G_INV_TANC: [f64; 5] = [
    1.0 / 12.0,
    1.0 / 720.0,
    1.0 / 30240.0,
    1.0 / 1209600.0,
    1.0 / 47900160.0,
];

fn series_or(y: f64, coeffs: &[f64; 5], closed: impl FnOnce() -> f64) -> f64 {
    if y.abs() < COEFF_SERIES_SWITCH {
        horner(y * y, coeffs)
    } else {
        closed()
    }
}

// (1 - sinc y)/y²
fn g_sinc_closed(y: f64) -> f64 {
    (1.0 - y.sin() / y) / (y * y)
}

fn g_sinc(y: f64) -> f64 {
    series_or(y, &G_SINC, || g_sinc_closed(y))
}

// (1 - cos y)/y² = sinc(y/2)²/2, no cancellation
fn g_cos(y: f64) -> f64 {
    let s = sinc(0.5 * y);
    0.5 * s * s
}

// (1 - tanc(y/2))/y²
fn g_tanc_closed(y: f64) -> f64 {
    (1.0 - tanc_unchecked(0.5 * y)) / (y * y)
}

fn g_tanc(y: f64) -> Result<f64> {
    if (0.5 * y).cos().abs() <= POLE_TOL {
        return Err(Error::FilterPole {
            function: "psi",
            arg: y,
        });
    }
    Ok(series_or(y, &G_TANC, || g_tanc_closed(y)))
}

// (1 - 1/sinc y)/y²
fn g_inv_sinc_closed(y: f64) -> f64 {
    (1.0 - 1.0 / sinc(y)) / (y * y)
}

fn g_inv_sinc(function: &'static str, y: f64) -> Result<f64> {
    check_sinc_pole(function, y)?;
    Ok(series_or(y, &G_INV_SINC, || g_inv_sinc_closed(y)))
}

// (1 - 1/sinc(y/2)²)/y²
fn g_inv_sinc2_closed(y: f64) -> f64 {
    let s = sinc(0.5 * y);
    (1.0 - 1.0 / (s * s)) / (y * y)
}

fn g_inv_sinc2(y: f64) -> Result<f64> {
    check_sinc_pole("phi2", 0.5 * y)?;
    Ok(series_or(y, &G_INV_SINC2, || g_inv_sinc2_closed(y)))
}

// (1 - sinc(y/2)²)/y²
fn g_sinc2_closed(y: f64) -> f64 {
    let s = sinc(0.5 * y);
    (1.0 - s * s) / (y * y)
}

fn g_sinc2(y: f64) -> f64 {
    series_or(y, &G_SINC2, || g_sinc2_closed(y))
}

// (1 - (y/2) cot(y/2))/y²
fn g_inv_tanc_closed(y: f64) -> f64 {
    (1.0 - (0.5 * y).cos() / sinc(0.5 * y)) / (y * y)
}

fn g_inv_tanc(y: f64) -> Result<f64> {
    check_sinc_pole("varphi1_inv", 0.5 * y)?;
    Ok(series_or(y, &G_INV_TANC, || g_inv_tanc_closed(y)))
}

/// The matrix functions the integrators apply, each as a function of `ζ = hB̂`.
///
/// `Varphi1 { sign }` follows the `Φ±` convention: `sign = +1` is
/// `φ₁(−hB̂)`, `sign = −1` is `φ₁(+hB̂)`, with `φ₁(ζ) = (e^ζ − 1)/ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterFn {
    /// `exp(−ζ)`
    ExpNeg,
    /// `Ψ(ζ) = tanh(ζ/2)/(ζ/2)`
    Psi,
    /// `Φ₁(ζ) = ζ / sinh ζ`
    Phi1,
    /// `Υ(ζ) = (Φ₁(ζ) − 1)/ζ`
    Upsilon,
    /// `Φ₂(ζ) = (ζ/2)² / sinh(ζ/2)²`
    Phi2,
    /// `φ₁(−sign·ζ)`
    Varphi1 { sign: i8 },
    /// `φ₁(−sign·ζ)⁻¹`
    Varphi1Inv { sign: i8 },
    /// `sinh(ζ)/ζ = Φ₁(ζ)⁻¹`
    Sinch,
    /// `sinh(ζ/2)²/(ζ/2)² = Φ₂(ζ)⁻¹`
    Sinch2Half,
    /// `(I + ζ/2)⁻¹`, the implicit midpoint rotation of the standard Boris scheme.
    CayleyInv,
}

impl FilterFn {
    pub const ALL: [FilterFn; 12] = [
        FilterFn::ExpNeg,
        FilterFn::Psi,
        FilterFn::Phi1,
        FilterFn::Upsilon,
        FilterFn::Phi2,
        FilterFn::Varphi1 { sign: 1 },
        FilterFn::Varphi1 { sign: -1 },
        FilterFn::Varphi1Inv { sign: 1 },
        FilterFn::Varphi1Inv { sign: -1 },
        FilterFn::Sinch,
        FilterFn::Sinch2Half,
        FilterFn::CayleyInv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterFn::ExpNeg => "exp_neg",
            FilterFn::Psi => "psi",
            FilterFn::Phi1 => "phi1",
            FilterFn::Upsilon => "upsilon",
            FilterFn::Phi2 => "phi2",
            FilterFn::Varphi1 { sign } if sign >= 0 => "varphi1_minus",
            FilterFn::Varphi1 { .. } => "varphi1_plus",
            FilterFn::Varphi1Inv { sign } if sign >= 0 => "varphi1_minus_inv",
            FilterFn::Varphi1Inv { .. } => "varphi1_plus_inv",
            FilterFn::Sinch => "sinch",
            FilterFn::Sinch2Half => "sinch2_half",
            FilterFn::CayleyInv => "cayley_inv",
        }
    }

    /// Smallest `|h b|` at which the function has a pole on the imaginary axis
    /// (`None` for entire functions and for `CayleyInv`, whose only
    /// singularity is off the imaginary axis).
    pub fn first_pole(self) -> Option<f64> {
        use std::f64::consts::PI;
        match self {
            FilterFn::Psi | FilterFn::Phi1 | FilterFn::Upsilon => Some(PI),
            FilterFn::Phi2 | FilterFn::Varphi1Inv { .. } => Some(2.0 * PI),
            _ => None,
        }
    }

    /// Radius of convergence in `|h b|` of the Taylor series at the origin.
    ///
    /// `(1 + z/2)⁻¹` is regular on the imaginary axis but its series still
    /// stops converging at `|z| = 2`.
    pub fn series_radius(self) -> Option<f64> {
        match self {
            FilterFn::CayleyInv => Some(2.0),
            _ => self.first_pole(),
        }
    }

    /// Distance from `|y|` to the nearest pole of the function.
    pub fn pole_distance(self, y: f64) -> f64 {
        use std::f64::consts::PI;
        let y = y.abs();
        let spacing = match self {
            // Ψ: poles at odd multiples of π
            FilterFn::Psi => {
                let k = ((y / PI - 1.0) / 2.0).round().max(0.0);
                return (y - (2.0 * k + 1.0) * PI).abs();
            }
            FilterFn::Phi1 | FilterFn::Upsilon => PI,
            FilterFn::Phi2 | FilterFn::Varphi1Inv { .. } => 2.0 * PI,
            _ => return f64::INFINITY,
        };
        let k = (y / spacing).round().max(1.0);
        (y - k * spacing).abs()
    }

    /// Rodriguez coefficients of `f(hB̂)` for `|B| = b`.
    pub fn coeffs(self, h: f64, b: f64) -> Result<RodriguezCoeffs> {
        if !(b > 0.0) {
            return Err(Error::ZeroField);
        }
        let y = h * b;
        let h2 = h * h;
        let c = match self {
            FilterFn::ExpNeg => RodriguezCoeffs::new(1.0, -h * sinc(y), h2 * g_cos(y)),
            FilterFn::Psi => RodriguezCoeffs::new(1.0, 0.0, h2 * g_tanc(y)?),
            FilterFn::Phi1 => RodriguezCoeffs::new(1.0, 0.0, h2 * g_inv_sinc("phi1", y)?),
            FilterFn::Upsilon => RodriguezCoeffs::new(0.0, h * g_inv_sinc("upsilon", y)?, 0.0),
            FilterFn::Phi2 => RodriguezCoeffs::new(1.0, 0.0, h2 * g_inv_sinc2(y)?),
            FilterFn::Varphi1 { sign } => {
                let tau = -f64::from(sign.signum()) * h;
                let yt = tau * b;
                RodriguezCoeffs::new(1.0, tau * g_cos(yt), tau * tau * g_sinc(yt))
            }
            FilterFn::Varphi1Inv { sign } => {
                let tau = -f64::from(sign.signum()) * h;
                let yt = tau * b;
                RodriguezCoeffs::new(1.0, -0.5 * tau, tau * tau * g_inv_tanc(yt)?)
            }
            FilterFn::Sinch => RodriguezCoeffs::new(1.0, 0.0, h2 * g_sinc(y)),
            FilterFn::Sinch2Half => RodriguezCoeffs::new(1.0, 0.0, h2 * g_sinc2(y)),
            FilterFn::CayleyInv => {
                let d = 1.0 + 0.25 * y * y;
                RodriguezCoeffs::new(1.0, -0.5 * h / d, 0.25 * h2 / d)
            }
        };
        Ok(c)
    }

    /// `f(hB̂) v`.
    pub fn apply(self, h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
        Ok(self.coeffs(h, b.norm())?.apply(b, v))
    }
}

/// `f(B̂) = c0 I + c1 B̂ + c2 B̂²` for a fixed field vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodriguezCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl RodriguezCoeffs {
    pub const fn new(c0: f64, c1: f64, c2: f64) -> Self {
        RodriguezCoeffs { c0, c1, c2 }
    }

    /// Applies the matrix function with two cross products.
    #[inline]
    pub fn apply(&self, b: Vec3, v: Vec3) -> Vec3 {
        let bv = hat_apply(b, v);
        let bbv = hat_apply(b, bv);
        v * self.c0 + bv * self.c1 + bbv * self.c2
    }

    pub fn is_finite(&self) -> bool {
        self.c0.is_finite() && self.c1.is_finite() && self.c2.is_finite()
    }
}

/// `exp(−hB̂) v`, an exact rotation about `B`.
pub fn apply_exp_neg(h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::ExpNeg.apply(h, b, v)
}

/// `Ψ(hB̂) v` with `Ψ(ζ) = tanch(ζ/2)`.
pub fn apply_psi(h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::Psi.apply(h, b, v)
}

/// `Φ₁(hB̂) v` with `Φ₁(ζ) = 1/sinch(ζ)`.
pub fn apply_phi1(h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::Phi1.apply(h, b, v)
}

/// `Υ(hB̂) v` with `Υ(ζ) = (Φ₁(ζ) − 1)/ζ`.
pub fn apply_upsilon(h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::Upsilon.apply(h, b, v)
}

/// `φ₁(∓hB̂) v`; `sign = +1` selects `φ₁(−hB̂)`.
pub fn apply_varphi1(sign: i8, h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::Varphi1 { sign }.apply(h, b, v)
}

/// `Φ₂(hB̂) v` with `Φ₂(ζ) = 1/sinch(ζ/2)²`.
pub fn apply_phi2(h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    FilterFn::Phi2.apply(h, b, v)
}
