use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An explicit Runge–Kutta method given by its Butcher tableau.
#[derive(Debug)]
pub struct Tableau {
    pub order: u32,
    pub c: &'static [f64],
    /// Strictly lower-triangular rows; row `i` has `i` entries.
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
}

/// Classical four-stage fourth-order method.
pub const RK4: Tableau = Tableau {
    order: 4,
    c: &[0.0, 0.5, 0.5, 1.0],
    a: &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]],
    b: &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
};

/// Butcher's seven-stage sixth-order method with rational coefficients.
pub const RK6: Tableau = Tableau {
    order: 6,
    c: &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.5, 0.5, 1.0],
    a: &[
        &[],
        &[1.0 / 3.0],
        &[0.0, 2.0 / 3.0],
        &[1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0],
        &[-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0],
        &[0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 0.5],
        &[9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0],
    ],
    b: &[
        11.0 / 120.0,
        0.0,
        27.0 / 40.0,
        27.0 / 40.0,
        -4.0 / 15.0,
        -4.0 / 15.0,
        11.0 / 120.0,
    ],
};

pub const MAX_STAGES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    #[default]
    Rk6,
}

impl Scheme {
    pub fn tableau(self) -> &'static Tableau {
        match self {
            Scheme::Rk4 => &RK4,
            Scheme::Rk6 => &RK6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rk4 => "rk4",
            Scheme::Rk6 => "rk6",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rk4" => Ok(Scheme::Rk4),
            "rk6" => Ok(Scheme::Rk6),
            other => Err(Error::InvalidInput(format!("unknown reference scheme `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_consistency(t: &Tableau) {
        assert_eq!(t.a.len(), t.c.len());
        assert_eq!(t.b.len(), t.c.len());
        assert!(t.c.len() <= MAX_STAGES);
        for (i, row) in t.a.iter().enumerate() {
            assert_eq!(row.len(), i);
            let sum: f64 = row.iter().sum();
            assert!((sum - t.c[i]).abs() < 1e-15);
        }
        assert!((t.b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tableaus_are_consistent() {
        check_consistency(&RK4);
        check_consistency(&RK6);
    }

    /// Quadrature conditions Σ bᵢ cᵢ^(k−1) = 1/k up to the order.
    #[test]
    fn quadrature_conditions() {
        for t in [&RK4, &RK6] {
            for k in 1..=t.order {
                let s: f64 = t.b.iter().zip(t.c).map(|(b, c)| b * c.powi(k as i32 - 1)).sum();
                assert!((s - 1.0 / k as f64).abs() < 1e-15, "order {} k {k}", t.order);
            }
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("RK6".parse::<Scheme>().unwrap(), Scheme::Rk6);
        assert!("euler".parse::<Scheme>().is_err());
        assert_eq!(Scheme::default(), Scheme::Rk6);
    }
}
