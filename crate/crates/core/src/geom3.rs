//! Fixed-size 3-vectors and the single 3x3 dense solve the integrators need.
//!
//! Skew matrices are never stored: `B̂v` is applied as the cross product
//! `B × v`. The only dense matrix built anywhere is the two-point system,
//! which goes through [`solve3`].

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const E1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Vec3) -> Vec3 {
        cross(self, other)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest absolute component.
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// Right-handed cross product `a × b`.
#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

/// `B̂v = B × v = −(v × B)`.
#[inline]
pub fn hat_apply(b: Vec3, v: Vec3) -> Vec3 {
    cross(b, v)
}

/// Dense 3x3 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3 {
            rows: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    /// Materializes a linear map by applying it to the canonical basis.
    pub fn from_linear_map<F>(mut f: F) -> Result<Self>
    where
        F: FnMut(Vec3) -> Result<Vec3>,
    {
        Ok(Mat3::from_columns(f(Vec3::E1)?, f(Vec3::E2)?, f(Vec3::E3)?))
    }

    pub fn diag(d: Vec3) -> Self {
        Mat3 {
            rows: [[d.x, 0.0, 0.0], [0.0, d.y, 0.0], [0.0, 0.0, d.z]],
        }
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from(self.rows[i])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn det(&self) -> f64 {
        self.row(0).dot(cross(self.row(1), self.row(2)))
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..3).map(|i| self.row(i).norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.rows.iter().flatten().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|a| a.is_finite())
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut rows = self.rows;
        for (r, ro) in rows.iter_mut().zip(o.rows.iter()) {
            for (a, b) in r.iter_mut().zip(ro.iter()) {
                *a += b;
            }
        }
        Mat3 { rows }
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        let mut rows = self.rows;
        for (r, ro) in rows.iter_mut().zip(o.rows.iter()) {
            for (a, b) in r.iter_mut().zip(ro.iter()) {
                *a -= b;
            }
        }
        Mat3 { rows }
    }
}

/// Solves `A s = rhs` by Gaussian elimination with partial pivoting.
///
/// The system is rejected as singular when `|det A| ≤ 1e-13 · (max row norm)³`.
pub fn solve3(a: &Mat3, rhs: Vec3) -> Result<Vec3> {
    let scale = a.max_row_norm();
    let tol = 1e-13 * scale * scale * scale;

    let mut m = a.rows;
    let mut b = rhs.to_array();
    let mut det = 1.0;

    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if pivot != col {
            m.swap(pivot, col);
            b.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        if p == 0.0 {
            break;
        }
        for row in col + 1..3 {
            let f = m[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }

    if !(det.abs() > tol) {
        return Err(Error::SingularMatrix { det, tol });
    }

    let mut s = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * s[k]).sum();
        s[row] = (b[row] - tail) / m[row][row];
    }
    Ok(Vec3::from(s))
}
