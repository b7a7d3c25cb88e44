//! Brute-force Taylor-series evaluation of `f(hB̂) v`.
//!
//! Coefficients are generated from the elementary series of `exp`, `sinh`
//! and `cosh` by power-series arithmetic, so nothing here shares code with
//! the closed Rodriguez forms in the parent module.

use super::FilterFn;
use crate::geom3::{hat_apply, Vec3};

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n.max(1)];
    for k in 1..f.len() {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// `sinh(w)/w` up to `w^(n-1)`.
fn sinch_series(n: usize) -> Vec<f64> {
    let fact = factorials(n + 2);
    (0..n)
        .map(|k| if k % 2 == 0 { 1.0 / fact[k + 1] } else { 0.0 })
        .collect()
}

fn cosh_series(n: usize) -> Vec<f64> {
    let fact = factorials(n + 1);
    (0..n).map(|k| if k % 2 == 0 { 1.0 / fact[k] } else { 0.0 }).collect()
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n).map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum()).collect()
}

/// `a / b` as power series; `b[0]` must be nonzero.
fn div(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    let mut q = vec![0.0; n];
    for k in 0..n {
        let acc: f64 = (1..=k).map(|j| b[j] * q[k - j]).sum();
        q[k] = (a[k] - acc) / b[0];
    }
    q
}

fn reciprocal(b: &[f64]) -> Vec<f64> {
    let mut one = vec![0.0; b.len()];
    one[0] = 1.0;
    div(&one, b)
}

/// Substitutes `ζ → s ζ`.
fn rescale(mut a: Vec<f64>, s: f64) -> Vec<f64> {
    let mut p = 1.0;
    for c in a.iter_mut() {
        *c *= p;
        p *= s;
    }
    a
}

/// First `n` Taylor coefficients at the origin of `f(ζ)`.
pub fn taylor_coefficients(f: FilterFn, n: usize) -> Vec<f64> {
    let n = n.max(1);
    match f {
        FilterFn::ExpNeg => {
            let fact = factorials(n);
            (0..n).map(|k| (-1f64).powi(k as i32) / fact[k]).collect()
        }
        FilterFn::Varphi1 { sign } => {
            let fact = factorials(n + 1);
            let phi1: Vec<f64> = (0..n).map(|k| 1.0 / fact[k + 1]).collect();
            rescale(phi1, -f64::from(sign.signum()))
        }
        FilterFn::Varphi1Inv { sign } => {
            let fact = factorials(n + 1);
            let phi1: Vec<f64> = (0..n).map(|k| 1.0 / fact[k + 1]).collect();
            rescale(reciprocal(&phi1), -f64::from(sign.signum()))
        }
        FilterFn::Psi => {
            // tanh(w)/w at w = ζ/2
            let t = div(&sinch_series(n), &cosh_series(n));
            rescale(t, 0.5)
        }
        FilterFn::Phi1 => reciprocal(&sinch_series(n)),
        FilterFn::Upsilon => {
            let phi1 = reciprocal(&sinch_series(n + 1));
            phi1[1..].to_vec()
        }
        FilterFn::Phi2 => {
            let s = sinch_series(n);
            rescale(reciprocal(&mul(&s, &s)), 0.5)
        }
        FilterFn::Sinch => sinch_series(n),
        FilterFn::Sinch2Half => {
            let s = sinch_series(n);
            rescale(mul(&s, &s), 0.5)
        }
        FilterFn::CayleyInv => (0..n).map(|k| (-0.5f64).powi(k as i32)).collect(),
    }
}

/// Number of terms after which the tail of the series at `|y| = |h b|` is
/// below `1e-17` relative, never fewer than `min_terms`.
///
/// Entire functions converge within a few dozen terms for `|y| ≤ 3`; for the
/// filters with poles on the imaginary axis the term count grows like
/// `ln(1e-17) / ln(|y| / radius)`.
pub fn terms_for(f: FilterFn, y: f64, min_terms: usize) -> usize {
    match f.series_radius() {
        None => min_terms,
        Some(r) => {
            let q = (y.abs() / r).max(1e-3);
            if q >= 1.0 {
                return usize::MAX;
            }
            let needed = (1e-17f64.ln() - 10.0f64.ln()) / q.ln();
            min_terms.max(needed.ceil() as usize + 4)
        }
    }
}

/// `Σ_{n<terms} c_n (hB̂)^n v` with `c_n` the Taylor coefficients of `f`.
pub fn series_oracle(f: FilterFn, h: f64, b: Vec3, v: Vec3, terms: usize) -> Vec3 {
    let coeffs = taylor_coefficients(f, terms);
    let mut power = v;
    let mut sum = Vec3::ZERO;
    for (k, c) in coeffs.iter().enumerate() {
        if k > 0 {
            power = hat_apply(b, power) * h;
        }
        sum += power * *c;
    }
    sum
}
