//! High-accuracy reference solutions and the error metrics used by the harness.

mod cache;
mod tableau;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{split_velocity, FieldModel};
use crate::geom3::{cross, Vec3};
use crate::integrators::Trajectory;

pub use cache::{ReferenceCache, CACHE_DIR_ENV};
pub use tableau::{Scheme, Tableau, MAX_STAGES, RK4, RK6};

/// Right-hand side of `ẍ = ẋ × B(x,t) + E(x,t)` as a first-order system.
pub fn rhs(model: &FieldModel, x: Vec3, v: Vec3, t: f64) -> Result<(Vec3, Vec3)> {
    let b = model.eval_b(x, t);
    let e = model.eval_e(x, t)?;
    Ok((v, cross(v, b) + e))
}

/// Exact solution for constant `B ≠ 0` and constant `E`.
///
/// The motion splits into uniform acceleration along `B`, the `E × B` drift and
/// a rotation with angular frequency `|B|` about the field direction.
pub fn constant_field_flow(x0: Vec3, v0: Vec3, b: Vec3, e: Vec3, t: f64) -> Result<(Vec3, Vec3)> {
    let bn = b.norm();
    if !(bn > 0.0) {
        return Err(Error::ZeroField);
    }
    let u = b / bn;
    let e_par = u * u.dot(e);
    let drift = cross(e, b) / (bn * bn);
    let v_par = u * u.dot(v0);
    let w = v0 - v_par - drift;
    let uw = cross(u, w);
    let (s, c) = (bn * t).sin_cos();
    let v = v_par + e_par * t + drift + w * c - uw * s;
    let x = x0 + (v_par + drift) * t + e_par * (0.5 * t * t) + w * (s / bn) - uw * ((1.0 - c) / bn);
    Ok((x, v))
}

/// Sample times `i · spacing`, `i = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub spacing: f64,
    pub intervals: usize,
}

impl TimeGrid {
    /// Uniform grid with step `h` up to `t_end`, a whole multiple of `h`.
    pub fn uniform(h: f64, t_end: f64) -> Result<Self> {
        let n = crate::integrators::step_count(h, t_end)?;
        Ok(TimeGrid {
            spacing: h,
            intervals: n as usize,
        })
    }

    /// The two-point grid `{0, t_end}`.
    pub fn endpoint(t_end: f64) -> Result<Self> {
        Self::uniform(t_end, t_end)
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.intervals)
    }

    /// Index of the grid point at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.spacing;
        let i = r.round();
        if i < 0.0 || i > self.intervals as f64 || (r - i).abs() > 1e-9 * i.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "t = {t} is not on the reference grid (spacing {}, {} intervals)",
                self.spacing, self.intervals
            )));
        }
        Ok(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    /// Acceptance threshold of the step-halving check.
    pub ref_tol: f64,
    /// Sub-steps are at most this fraction of `min(ε, spacing)`.
    pub substep_fraction: f64,
    pub scheme: Scheme,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            ref_tol: 1e-10,
            substep_fraction: 0.01,
            scheme: Scheme::Rk6,
        }
    }
}

impl ReferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ref_tol > 0.0) || !(self.substep_fraction > 0.0 && self.substep_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!("invalid reference settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub model: String,
    pub epsilon: f64,
    pub x0: Vec3,
    pub v0: Vec3,
    pub grid: TimeGrid,
    pub config: ReferenceConfig,
    /// Sub-steps per grid interval of the accepted (fine) run.
    pub substeps: usize,
    pub h_ref: f64,
    /// Largest change of any sample between the coarse and the fine run.
    pub discrepancy: f64,
    pub samples: Vec<RefSample>,
}

impl ReferenceSolution {
    pub fn sample_at(&self, t: f64) -> Result<&RefSample> {
        Ok(&self.samples[self.grid.index_of(t)?])
    }

    pub fn last(&self) -> &RefSample {
        self.samples.last().expect("reference has samples")
    }
}

/// Kahan-compensated accumulator for a 6-vector.
#[derive(Clone, Copy)]
struct Compensated {
    sum: [f64; 6],
    carry: [f64; 6],
}

impl Compensated {
    fn new(x: Vec3, v: Vec3) -> Self {
        Compensated {
            sum: [x.x, x.y, x.z, v.x, v.y, v.z],
            carry: [0.0; 6],
        }
    }

    fn add(&mut self, inc: &[f64; 6]) {
        for i in 0..6 {
            let y = inc[i] - self.carry[i];
            let t = self.sum[i] + y;
            self.carry[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }

    fn x(&self) -> Vec3 {
        Vec3::new(self.sum[0], self.sum[1], self.sum[2])
    }

    fn v(&self) -> Vec3 {
        Vec3::new(self.sum[3], self.sum[4], self.sum[5])
    }
}

/// Integrates with `substeps` fixed steps per grid interval and returns the grid samples.
pub fn integrate(
    model: &FieldModel,
    x0: Vec3,
    v0: Vec3,
    grid: &TimeGrid,
    substeps: usize,
    tableau: &Tableau,
) -> Result<Vec<RefSample>> {
    let hs = grid.spacing / substeps as f64;
    let stages = tableau.c.len();
    let mut y = Compensated::new(x0, v0);
    let mut samples = Vec::with_capacity(grid.intervals + 1);
    samples.push(RefSample { t: 0.0, x: x0, v: v0 });
    let mut kx = [Vec3::ZERO; MAX_STAGES];
    let mut kv = [Vec3::ZERO; MAX_STAGES];
    for i in 0..grid.intervals {
        let t0 = grid.time(i);
        for j in 0..substeps {
            let t = t0 + j as f64 * hs;
            let (x, v) = (y.x(), y.v());
            for s in 0..stages {
                let (mut xs, mut vs) = (x, v);
                for (r, &a) in tableau.a[s].iter().enumerate() {
                    if a != 0.0 {
                        xs += kx[r] * (hs * a);
                        vs += kv[r] * (hs * a);
                    }
                }
                (kx[s], kv[s]) = rhs(model, xs, vs, t + tableau.c[s] * hs)?;
            }
            let mut inc = [0.0; 6];
            for s in 0..stages {
                let w = hs * tableau.b[s];
                inc[0] += w * kx[s].x;
                inc[1] += w * kx[s].y;
                inc[2] += w * kx[s].z;
                inc[3] += w * kv[s].x;
                inc[4] += w * kv[s].y;
                inc[5] += w * kv[s].z;
            }
            y.add(&inc);
        }
        let (x, v) = (y.x(), y.v());
        if !(x.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite {
                what: "reference solution",
            });
        }
        samples.push(RefSample {
            t: grid.time(i + 1),
            x,
            v,
        });
    }
    Ok(samples)
}

/// Largest sample-wise difference in position or velocity.
pub fn max_discrepancy(a: &[RefSample], b: &[RefSample]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p.x - q.x).norm().max((p.v - q.v).norm()))
        .fold(0.0, f64::max)
}

/// Sub-steps per interval so that the sub-step is at most
/// `substep_fraction · min(ε, spacing)`.
pub fn substeps_for(model: &FieldModel, grid: &TimeGrid, cfg: &ReferenceConfig) -> usize {
    let h_max = cfg.substep_fraction * model.epsilon().min(grid.spacing);
    ((grid.spacing / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Solves on `grid`, then again with half the sub-step, and accepts the finer
/// run if the two agree to `ref_tol` at every sample.
pub fn reference_solve(
    model: &FieldModel,
    x0: Vec3,
    v0: Vec3,
    grid: &TimeGrid,
    cfg: &ReferenceConfig,
) -> Result<ReferenceSolution> {
    cfg.validate()?;
    if !(grid.spacing > 0.0 && grid.intervals > 0) {
        return Err(Error::InvalidInput(format!("invalid reference grid {grid:?}")));
    }
    let m = substeps_for(model, grid, cfg);
    let tableau = cfg.scheme.tableau();
    let coarse = integrate(model, x0, v0, grid, m, tableau)?;
    let fine = integrate(model, x0, v0, grid, 2 * m, tableau)?;
    let discrepancy = max_discrepancy(&coarse, &fine);
    if !(discrepancy <= cfg.ref_tol) {
        return Err(Error::OracleNotConverged {
            discrepancy,
            tol: cfg.ref_tol,
        });
    }
    Ok(ReferenceSolution {
        model: model.name().to_string(),
        epsilon: model.epsilon(),
        x0,
        v0,
        grid: *grid,
        config: *cfg,
        substeps: 2 * m,
        h_ref: grid.spacing / (2 * m) as f64,
        discrepancy,
        samples: fine,
    })
}

/// How errors along a trajectory are reduced to one number per quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// Error at the final time.
    Endpoint,
    /// Maximum over all grid points.
    SupOverGrid,
}

impl ErrorMode {
    pub fn name(self) -> &'static str {
        match self {
            ErrorMode::Endpoint => "endpoint",
            ErrorMode::SupOverGrid => "sup-over-grid",
        }
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "endpoint" => Ok(ErrorMode::Endpoint),
            "sup" | "sup-over-grid" => Ok(ErrorMode::SupOverGrid),
            other => Err(Error::InvalidInput(format!(
                "unknown error mode `{other}` (expected endpoint or sup-over-grid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub err_x: f64,
    pub err_vpar: f64,
    pub err_vperp: f64,
    pub mode: ErrorMode,
}

/// Position and velocity-component errors of one state against the exact one.
fn state_errors(model: &FieldModel, t: f64, x: Vec3, v: Vec3, exact: &RefSample) -> Result<[f64; 3]> {
    let (par, perp) = split_velocity(v, model.eval_b(x, t))?;
    let (par_ex, perp_ex) = split_velocity(exact.v, model.eval_b(exact.x, exact.t))?;
    Ok([(x - exact.x).norm(), (par - par_ex).norm(), (perp - perp_ex).norm()])
}

/// Errors of a trajectory against the reference.
///
/// The numerical `v∥` uses `B(xⁿ, tⁿ)`, the exact one `B(x(tⁿ), tⁿ)`.
pub fn compute_errors(
    traj: &Trajectory,
    reference: &ReferenceSolution,
    model: &FieldModel,
    mode: ErrorMode,
) -> Result<ErrorMetrics> {
    let states: &[_] = match mode {
        ErrorMode::Endpoint => std::slice::from_ref(traj.last()),
        ErrorMode::SupOverGrid => &traj.states,
    };
    let mut worst = [0.0f64; 3];
    for s in states {
        let exact = reference.sample_at(s.t)?;
        let e = state_errors(model, s.t, s.x, s.v_node, exact)?;
        for k in 0..3 {
            if !e[k].is_finite() {
                return Err(Error::NonFinite { what: "error metric" });
            }
            worst[k] = worst[k].max(e[k]);
        }
    }
    Ok(ErrorMetrics {
        err_x: worst[0],
        err_vpar: worst[1],
        err_vperp: worst[2],
        mode,
    })
}
