//! Standard Boris, filtered Boris and two-point filtered Boris integrators.
//!
//! All methods advance the staggered state `(xⁿ, v^{n−1/2}) ↦ (x^{n+1}, v^{n+1/2})`
//! and reconstruct the node velocity `vⁿ` along the way. Time is always `n·h`.

mod step;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_resonance, FieldModel, ResonanceGuard, ResonanceStatus, ThetaChoice};
use crate::geom3::Vec3;

pub use step::{
    filtered_step, half_velocities, node_velocity, one_step_map, standard_boris_step, starting_velocity,
    two_point_step, HalfVelocities,
};

/// Integrator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "boris")]
    StandardBoris,
    /// Filtered Boris with the field evaluated at `xⁿ`.
    #[serde(rename = "exp-a")]
    FilteredExplicit,
    /// Filtered Boris with the field evaluated at `x̄ⁿ`.
    #[serde(rename = "imp-a")]
    FilteredImplicit,
    /// Two-point filtered Boris, field at `xⁿ` and at the guiding center.
    #[serde(rename = "twop-a")]
    TwoPoint,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::StandardBoris,
        Method::FilteredExplicit,
        Method::FilteredImplicit,
        Method::TwoPoint,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::StandardBoris => "boris",
            Method::FilteredExplicit => "exp-a",
            Method::FilteredImplicit => "imp-a",
            Method::TwoPoint => "twop-a",
        }
    }

    /// Whether the step needs a fixed-point iteration.
    pub fn is_implicit(self) -> bool {
        matches!(self, Method::FilteredImplicit | Method::TwoPoint)
    }

    /// Evaluation point rule for the single-point filtered methods.
    pub fn theta(self) -> ThetaChoice {
        match self {
            Method::FilteredImplicit => ThetaChoice::Optimal,
            _ => ThetaChoice::One,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "boris" | "standard" => Ok(Method::StandardBoris),
            "exp-a" | "explicit" => Ok(Method::FilteredExplicit),
            "imp-a" | "implicit" => Ok(Method::FilteredImplicit),
            "twop-a" | "two-point" => Ok(Method::TwoPoint),
            other => Err(Error::InvalidInput(format!(
                "unknown method `{other}` (expected boris, exp-a, imp-a or twop-a)"
            ))),
        }
    }
}

/// What to do when the step size violates the non-resonance bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardPolicy {
    /// Fail with `NearResonant`.
    Reject,
    /// Record the status and continue.
    #[default]
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Fixed-point updates of the evaluation point per step (implicit methods).
    pub fp_max_iters: usize,
    /// Stop early once `|Δx̄| / max(1, |x|)` is at most this.
    pub fp_tol: f64,
    /// Fail with `NoConvergence` when the final residual exceeds `1e3 · fp_tol`.
    pub fp_strict: bool,
    pub guard: ResonanceGuard,
    pub guard_policy: GuardPolicy,
}

impl MethodConfig {
    pub const DEFAULT_FP_ITERS: usize = 2;
    pub const DEFAULT_FP_TOL: f64 = 1e-13;

    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            fp_max_iters: Self::DEFAULT_FP_ITERS,
            fp_tol: Self::DEFAULT_FP_TOL,
            fp_strict: false,
            guard: ResonanceGuard::default(),
            guard_policy: GuardPolicy::Flag,
        }
    }

    /// Iterate the evaluation point until `fp_tol` is met, failing otherwise.
    pub fn converged(method: Method) -> Self {
        MethodConfig {
            fp_max_iters: 50,
            fp_strict: true,
            ..Self::new(method)
        }
    }

    pub fn with_guard(mut self, guard: ResonanceGuard) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_fp_iters(mut self, iters: usize) -> Self {
        self.fp_max_iters = iters;
        self
    }

    /// Short description of the fixed-point setting, used in reports.
    pub fn fp_mode(&self) -> String {
        if !self.method.is_implicit() {
            "none".to_string()
        } else if self.fp_strict {
            format!("converged(tol={:e},max={})", self.fp_tol, self.fp_max_iters)
        } else {
            format!("fixed({})", self.fp_max_iters)
        }
    }

    /// Full check, including `fp_max_iters ≥ 1` for the implicit methods.
    pub fn validate(&self) -> Result<()> {
        self.validate_numerics()?;
        if self.method.is_implicit() && self.fp_max_iters == 0 {
            return Err(Error::InvalidInput(format!(
                "{} needs at least one fixed-point iteration",
                self.method
            )));
        }
        Ok(())
    }

    fn validate_numerics(&self) -> Result<()> {
        self.guard.validate()?;
        if !(self.fp_tol > 0.0 && self.fp_tol.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        Ok(())
    }
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self::new(Method::FilteredImplicit)
    }
}

/// One point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub n: u64,
    pub t: f64,
    pub x: Vec3,
    /// `v^{n−1/2}`
    pub v_half: Vec3,
    /// `vⁿ`; not read by the step functions.
    pub v_node: Vec3,
}

impl ParticleState {
    /// State at step `n` with `t = n·h` and an unset node velocity.
    pub fn staggered(n: u64, h: f64, x: Vec3, v_half: Vec3) -> Self {
        ParticleState {
            n,
            t: n as f64 * h,
            x,
            v_half,
            v_node: Vec3::ZERO,
        }
    }
}

/// Outcome of the evaluation-point iteration of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedPointInfo {
    /// Number of updates of the evaluation point.
    pub iters: usize,
    /// Size of the next, unapplied update relative to `max(1, |x|)`.
    pub residual: f64,
    /// Ratio of the second update size to the first, when both were computed.
    pub contraction: Option<f64>,
}

/// Everything a single step produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub x_next: Vec3,
    pub v_half_next: Vec3,
    /// Node velocity at the input state.
    pub v_node: Vec3,
    /// Point where the rotation field was evaluated (`x̄ⁿ` or `x⊙ⁿ`).
    pub eval_point: Vec3,
    pub resonance: ResonanceStatus,
    pub fp: FixedPointInfo,
}

impl StepOutcome {
    /// The next staggered state; its node velocity is unset.
    pub fn next_state(&self, current: &ParticleState, h: f64) -> ParticleState {
        ParticleState::staggered(current.n + 1, h, self.x_next, self.v_half_next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFlags {
    pub resonance: ResonanceStatus,
    pub fp_iters: usize,
    pub fp_residual: f64,
}

/// Advances one step with the configured method.
pub fn step(state: &ParticleState, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<StepOutcome> {
    match cfg.method {
        Method::StandardBoris => standard_boris_step(state, model, cfg, h),
        Method::FilteredExplicit | Method::FilteredImplicit => filtered_step(state, model, cfg, h),
        Method::TwoPoint => two_point_step(state, model, cfg, h),
    }
}

/// How `v^{±1/2}` at `t = 0` were obtained; recorded in trajectory metadata.
pub fn start_rule(method: Method) -> &'static str {
    match method {
        Method::StandardBoris => "filtered-explicit half flow",
        Method::FilteredExplicit => "filtered-explicit half flow",
        Method::FilteredImplicit => "filtered-implicit half flow",
        Method::TwoPoint => "two-point half flow",
    }
}

/// A full run of one method from `(x⁰, v⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub method: Method,
    pub config: MethodConfig,
    pub model: String,
    pub epsilon: f64,
    pub h: f64,
    pub n_steps: u64,
    pub start_rule: String,
    /// States `n = 0..=n_steps`.
    pub states: Vec<ParticleState>,
    /// One entry per state.
    pub flags: Vec<StepFlags>,
}

impl Trajectory {
    pub fn last(&self) -> &ParticleState {
        self.states.last().expect("trajectory has at least one state")
    }

    /// First flagged resonance status, if any.
    pub fn resonance(&self) -> ResonanceStatus {
        self.flags
            .iter()
            .map(|f| f.resonance)
            .find(ResonanceStatus::is_flagged)
            .unwrap_or(ResonanceStatus::Ok)
    }

    pub fn max_fp_iters(&self) -> usize {
        self.flags.iter().map(|f| f.fp_iters).max().unwrap_or(0)
    }

    pub fn max_fp_residual(&self) -> f64 {
        self.flags.iter().map(|f| f.fp_residual).fold(0.0, f64::max)
    }
}

/// Number of steps for `t_end`, which must be a whole multiple of `h`.
pub fn step_count(h: f64, t_end: f64) -> Result<u64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    let ratio = t_end / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} is not a whole number of steps of h = {h}"
        )));
    }
    Ok(n as u64)
}

/// Runs `round(t_end/h)` steps from `(x⁰, v⁰)`.
///
/// The result holds the states `n = 0..=N`; the node velocity of the last one is
/// reconstructed with one extra step whose position is discarded.
/// `fp_max_iters = 0` is accepted here and makes the implicit methods use the
/// explicit evaluation point.
pub fn run_trajectory(
    x0: Vec3,
    v0: Vec3,
    model: &FieldModel,
    cfg: &MethodConfig,
    h: f64,
    t_end: f64,
) -> Result<Trajectory> {
    cfg.validate_numerics()?;
    let n_steps = step_count(h, t_end)?;
    if !(x0.is_finite() && v0.is_finite()) {
        return Err(Error::InvalidInput("initial data must be finite".into()));
    }

    let b0 = model.eval_b(x0, 0.0);
    let resonance = check_resonance(&cfg.guard, h, b0.norm());
    if resonance.is_flagged() && cfg.guard_policy == GuardPolicy::Reject {
        return Err(near_resonant(resonance).at_step(0));
    }
    let half = half_velocities(x0, v0, 0.0, model, cfg, h).map_err(|e| e.at_step(0))?;

    let mut states = Vec::with_capacity(n_steps as usize + 1);
    let mut flags = Vec::with_capacity(n_steps as usize + 1);
    states.push(ParticleState {
        n: 0,
        t: 0.0,
        x: x0,
        v_half: half.minus,
        v_node: v0,
    });
    flags.push(StepFlags {
        resonance,
        fp_iters: half.fp.iters,
        fp_residual: half.fp.residual,
    });

    let mut current = ParticleState::staggered(1, h, x0 + half.plus * h, half.plus);
    for n in 1..=n_steps {
        let out = step(&current, model, cfg, h).map_err(|e| e.at_step(n))?;
        if !(out.v_node.is_finite() && out.x_next.is_finite() && out.v_half_next.is_finite()) {
            return Err(Error::NonFinite { what: "state" }.at_step(n));
        }
        let next = out.next_state(&current, h);
        current.v_node = out.v_node;
        states.push(current);
        flags.push(StepFlags {
            resonance: out.resonance,
            fp_iters: out.fp.iters,
            fp_residual: out.fp.residual,
        });
        current = next;
    }

    Ok(Trajectory {
        method: cfg.method,
        config: *cfg,
        model: model.name().to_string(),
        epsilon: model.epsilon(),
        h,
        n_steps,
        start_rule: start_rule(cfg.method).to_string(),
        states,
        flags,
    })
}

pub(crate) fn near_resonant(status: ResonanceStatus) -> Error {
    match status {
        ResonanceStatus::NearResonant { k, value } => Error::NearResonant { k, value },
        ResonanceStatus::Ok => unreachable!("only flagged statuses are converted"),
    }
}

#[cfg(test)]
mod tests;
