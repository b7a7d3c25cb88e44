//! Field models in the maximal-ordering scaling `B(x,t) = B₀(εx)/ε + B₁(x,t)`,
//! plus the guiding-center point, velocity splitting and the resonance guard.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{sinc, theta};
use crate::geom3::{cross, Vec3};

pub type StrongFieldFn = Arc<dyn Fn(Vec3) -> Vec3 + Send + Sync>;
pub type PerturbationFn = Arc<dyn Fn(Vec3, f64) -> Vec3 + Send + Sync>;
pub type ElectricFn = Arc<dyn Fn(Vec3, f64) -> Result<Vec3> + Send + Sync>;

/// Squared axis distance below which the preset potential `1/r` is singular.
pub const AXIS_TOL: f64 = 1e-12;

/// Named field presets reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// `B = (0,0,1)/ε + (−x₁, 0, x₃)`, `E = −∇(1/√(x₁²+x₂²))`.
    #[serde(rename = "paper-sec8")]
    Standard,
    /// `B = (0,0,1)/ε`, `E = 0`.
    #[serde(rename = "constant-B")]
    ConstantB,
    /// `B = (0,0,1)/ε`, `E = (0.3, −0.2, 0.5)`.
    #[serde(rename = "constant-BE")]
    ConstantBE,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Standard, Preset::ConstantB, Preset::ConstantBE];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Standard => "paper-sec8",
            Preset::ConstantB => "constant-B",
            Preset::ConstantBE => "constant-BE",
        }
    }

    pub fn build(self, epsilon: f64) -> Result<FieldModel> {
        match self {
            Preset::Standard => FieldModel::standard(epsilon),
            Preset::ConstantB => FieldModel::constant(self.name(), epsilon, Vec3::E3, Vec3::ZERO),
            Preset::ConstantBE => FieldModel::constant(self.name(), epsilon, Vec3::E3, CONSTANT_BE_ELECTRIC),
        }
    }
}

/// Electric field of the `constant-BE` preset.
pub const CONSTANT_BE_ELECTRIC: Vec3 = Vec3::new(0.3, -0.2, 0.5);

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown field preset `{s}`")))
    }
}

/// `B(x,t) = B₀(εx)/ε + B₁(x,t)` together with `E(x,t)`.
///
/// `B₀` and `B₁` are kept apart so the maximal-ordering structure can be
/// inspected and `ε` swept without redefining the fields.
#[derive(Clone)]
pub struct FieldModel {
    name: String,
    epsilon: f64,
    strong: StrongFieldFn,
    perturbation: PerturbationFn,
    electric: ElectricFn,
}

impl fmt::Debug for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldModel")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

impl FieldModel {
    /// Builds a model, checking `0 < ε` and `|B₀(0)| ≥ 1`.
    pub fn new(
        name: impl Into<String>,
        epsilon: f64,
        strong: StrongFieldFn,
        perturbation: PerturbationFn,
        electric: ElectricFn,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let b00 = strong(Vec3::ZERO);
        if !(b00.norm() >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "strong field must satisfy |B0(0)| >= 1, got {}",
                b00.norm()
            )));
        }
        Ok(Self::new_unchecked(name, epsilon, strong, perturbation, electric))
    }

    /// Builds a model without the `|B₀(0)| ≥ 1` check, e.g. for zero-field tests.
    pub fn new_unchecked(
        name: impl Into<String>,
        epsilon: f64,
        strong: StrongFieldFn,
        perturbation: PerturbationFn,
        electric: ElectricFn,
    ) -> Self {
        FieldModel {
            name: name.into(),
            epsilon,
            strong,
            perturbation,
            electric,
        }
    }

    pub fn standard(epsilon: f64) -> Result<Self> {
        FieldModel::new(
            Preset::Standard.name(),
            epsilon,
            Arc::new(|_| Vec3::E3),
            Arc::new(|x: Vec3, _t| Vec3::new(-x.x, 0.0, x.z)),
            Arc::new(|x: Vec3, _t| standard_electric(x)),
        )
    }

    /// Constant `B = b0/ε` and constant `E`.
    pub fn constant(name: &str, epsilon: f64, b0: Vec3, e: Vec3) -> Result<Self> {
        FieldModel::new(
            name,
            epsilon,
            Arc::new(move |_| b0),
            Arc::new(|_, _| Vec3::ZERO),
            Arc::new(move |_, _| Ok(e)),
        )
    }

    /// Same magnetic field, electric field replaced by zero.
    pub fn without_electric(&self) -> Self {
        FieldModel {
            name: format!("{}/E=0", self.name),
            electric: Arc::new(|_, _| Ok(Vec3::ZERO)),
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The strong part `B₀(εx)/ε`.
    pub fn strong_part(&self, x: Vec3) -> Vec3 {
        (self.strong)(x * self.epsilon) / self.epsilon
    }

    pub fn perturbation_part(&self, x: Vec3, t: f64) -> Vec3 {
        (self.perturbation)(x, t)
    }

    pub fn eval_b(&self, x: Vec3, t: f64) -> Vec3 {
        self.strong_part(x) + self.perturbation_part(x, t)
    }

    pub fn eval_e(&self, x: Vec3, t: f64) -> Result<Vec3> {
        (self.electric)(x, t)
    }
}

/// `E = −∇U` for `U = 1/√(x₁² + x₂²)`.
pub fn standard_electric(x: Vec3) -> Result<Vec3> {
    let r2 = x.x * x.x + x.y * x.y;
    if r2 <= AXIS_TOL {
        return Err(Error::DegenerateField { x });
    }
    let r3 = r2 * r2.sqrt();
    Ok(Vec3::new(x.x / r3, x.y / r3, 0.0))
}

/// `x + (v × B)/|B|²`.
pub fn guiding_center(x: Vec3, v: Vec3, b: Vec3) -> Result<Vec3> {
    let b2 = b.norm_sq();
    if !(b2 > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(x + cross(v, b) / b2)
}

/// How the point where `B` is evaluated in the rotation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaChoice {
    /// `θ ≡ 1`: evaluate at `xⁿ`.
    One,
    /// `θ(ξ) = 1/sinc(ξ/2)²`.
    Optimal,
}

/// `x̄ = θ x + (1 − θ) x_gc` with `θ = θ(h|B|)`.
pub fn eval_point(x: Vec3, x_gc: Vec3, hb: f64, choice: ThetaChoice) -> Result<Vec3> {
    match choice {
        ThetaChoice::One => Ok(x),
        ThetaChoice::Optimal => {
            let th = theta(hb)?;
            Ok(x * th + x_gc * (1.0 - th))
        }
    }
}

/// Splits `v` into components parallel and perpendicular to `B`.
pub fn split_velocity(v: Vec3, b: Vec3) -> Result<(Vec3, Vec3)> {
    let bn = b.norm();
    if !(bn > 0.0) {
        return Err(Error::ZeroField);
    }
    let u = b / bn;
    let par = u * u.dot(v);
    Ok((par, v - par))
}

/// Lower bound on `|sinc(k h |B| / 2)|` for the harmonics `k = 1..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceGuard {
    pub c_min: f64,
    pub k_max: u32,
}

impl Default for ResonanceGuard {
    fn default() -> Self {
        ResonanceGuard { c_min: 0.05, k_max: 3 }
    }
}

impl ResonanceGuard {
    pub fn new(c_min: f64, k_max: u32) -> Result<Self> {
        let g = ResonanceGuard { c_min, k_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min < 1.0) || self.k_max < 1 {
            return Err(Error::InvalidInput(format!(
                "resonance guard needs 0 < c_min < 1 and k_max >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ResonanceStatus {
    Ok,
    NearResonant { k: u32, value: f64 },
}

impl ResonanceStatus {
    pub fn is_flagged(&self) -> bool {
        matches!(self, ResonanceStatus::NearResonant { .. })
    }
}

/// Checks the non-resonance condition for the step size `h` and field strength `b`.
///
/// Reports the first harmonic that violates the bound.
pub fn check_resonance(guard: &ResonanceGuard, h: f64, b: f64) -> ResonanceStatus {
    for k in 1..=guard.k_max {
        let value = sinc(0.5 * f64::from(k) * h * b);
        if value.abs() < guard.c_min {
            return ResonanceStatus::NearResonant { k, value };
        }
    }
    ResonanceStatus::Ok
}
