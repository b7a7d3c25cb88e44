//! Convergence sweeps, resonance scans, slope fits and reports.

pub mod checks;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{check_resonance, Preset, ResonanceGuard, ResonanceStatus};
use crate::geom3::Vec3;
use crate::integrators::{run_trajectory, start_rule, step_count, GuardPolicy, Method, MethodConfig};
use crate::reference::{
    compute_errors, ErrorMetrics, ErrorMode, ReferenceCache, ReferenceConfig, ReferenceSolution, TimeGrid,
};

pub use report::{gnuplot_script, write_csv, write_json, CSV_HEADER};

/// Initial position of the standard experiment.
pub const STANDARD_X0: Vec3 = Vec3::new(1.0 / 3.0, 1.0 / 4.0, 1.0 / 2.0);
/// Initial velocity of the standard experiment.
pub const STANDARD_V0: Vec3 = Vec3::new(2.0 / 5.0, 2.0 / 3.0, 1.0);

/// Guard used by convergence sweeps; loose enough that `h = 4ε` and `h = 16ε`
/// are not flagged by construction.
pub const CONVERGENCE_GUARD: ResonanceGuard = ResonanceGuard { c_min: 0.01, k_max: 3 };

/// How the step size is derived from `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HRule {
    /// `h = r · ε`
    Ratio(f64),
    /// `h = 1 / k`
    Reciprocal(u32),
}

impl HRule {
    pub fn h(self, epsilon: f64) -> f64 {
        match self {
            HRule::Ratio(r) => r * epsilon,
            HRule::Reciprocal(k) => 1.0 / f64::from(k),
        }
    }

    fn sort_key(self) -> (u8, f64) {
        match self {
            HRule::Ratio(r) => (0, r),
            HRule::Reciprocal(k) => (1, f64::from(k)),
        }
    }
}

impl fmt::Display for HRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HRule::Ratio(r) => write!(f, "h={r}eps"),
            HRule::Reciprocal(k) => write!(f, "h=1/{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub x0: Vec3,
    pub v0: Vec3,
    pub t_end: f64,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub h_rules: Vec<HRule>,
    pub methods: Vec<MethodConfig>,
    pub err_mode: ErrorMode,
    pub reference: ReferenceConfig,
}

fn powers_of_two(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|j| 0.5f64.powi(j)).collect()
}

impl ExperimentSpec {
    /// Convergence sweep of the standard experiment with the given exponents
    /// `ε = 2^-j` and step ratios `h = r ε`.
    pub fn convergence(j_from: i32, j_to: i32, ratios: &[f64]) -> Self {
        ExperimentSpec {
            preset: Preset::Standard,
            x0: STANDARD_X0,
            v0: STANDARD_V0,
            t_end: 1.0,
            epsilons: powers_of_two(j_from, j_to),
            h_rules: ratios.iter().map(|&r| HRule::Ratio(r)).collect(),
            methods: Method::ALL
                .iter()
                .map(|&m| MethodConfig::new(m).with_guard(CONVERGENCE_GUARD))
                .collect(),
            err_mode: ErrorMode::SupOverGrid,
            reference: ReferenceConfig::default(),
        }
    }

    /// `ε = 2^-4 … 2^-13`, `h = ε, 4ε, 16ε`, all four methods.
    pub fn standard_convergence() -> Self {
        Self::convergence(4, 13, &[1.0, 4.0, 16.0])
    }

    /// Endpoint errors at fixed `ε` for `h = 1/k`, `k = k_from..=k_to`.
    pub fn scan(epsilon: f64, k_from: u32, k_to: u32) -> Self {
        ExperimentSpec {
            preset: Preset::Standard,
            x0: STANDARD_X0,
            v0: STANDARD_V0,
            t_end: 1.0,
            epsilons: vec![epsilon],
            h_rules: (k_from..=k_to).map(HRule::Reciprocal).collect(),
            methods: Method::ALL.iter().map(|&m| MethodConfig::new(m)).collect(),
            err_mode: ErrorMode::Endpoint,
            reference: ReferenceConfig::default(),
        }
    }

    /// `ε = 2^-10`, `k = 60..=600`.
    pub fn standard_scan() -> Self {
        Self::scan(0.5f64.powi(10), 60, 600)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.epsilons.is_empty() || self.h_rules.is_empty() || self.methods.is_empty() {
            return bad("need at least one epsilon, step rule and method".into());
        }
        if !self.epsilons.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return bad(format!("epsilons must be positive: {:?}", self.epsilons));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("epsilons must be strictly decreasing: {:?}", self.epsilons));
        }
        if !(self.x0.is_finite() && self.v0.is_finite()) {
            return bad("initial data must be finite".into());
        }
        for rule in &self.h_rules {
            match *rule {
                HRule::Ratio(r) if !(r > 0.0 && r.is_finite()) => {
                    return bad(format!("step ratio must be positive, got {r}"));
                }
                HRule::Reciprocal(0) => return bad("k must be positive".into()),
                _ => {}
            }
            for &eps in &self.epsilons {
                step_count(rule.h(eps), self.t_end)?;
            }
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.reference.validate()?;
        self.preset.build(self.epsilons[0])?;
        Ok(())
    }

    /// Reference grids needed for `ε`: one shared grid when every step size
    /// is a multiple of the smallest, one per step size otherwise.
    fn grids(&self, epsilon: f64) -> Result<Vec<TimeGrid>> {
        if self.err_mode == ErrorMode::Endpoint {
            return Ok(vec![TimeGrid::endpoint(self.t_end)?]);
        }
        let hs: Vec<f64> = self.h_rules.iter().map(|r| r.h(epsilon)).collect();
        let h_min = hs.iter().cloned().fold(f64::INFINITY, f64::min);
        let commensurate = hs.iter().all(|&h| {
            let r = h / h_min;
            (r - r.round()).abs() <= 1e-9 * r
        });
        if commensurate {
            return Ok(vec![TimeGrid::uniform(h_min, self.t_end)?]);
        }
        let mut grids: Vec<TimeGrid> = Vec::new();
        for h in hs {
            let g = TimeGrid::uniform(h, self.t_end)?;
            if !grids.contains(&g) {
                grids.push(g);
            }
        }
        Ok(grids)
    }
}

/// Result of one (method, ε, h) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub epsilon: f64,
    pub h: f64,
    pub h_rule: HRule,
    pub n_steps: u64,
    pub errors: Option<ErrorMetrics>,
    /// First flagged status along the trajectory.
    pub resonance: ResonanceStatus,
    pub fp_iters: usize,
    pub fp_residual: f64,
    pub fp_mode: String,
    pub oracle_discrepancy: Option<f64>,
    pub failure: Option<String>,
}

impl Cell {
    pub fn flagged(&self) -> bool {
        self.resonance.is_flagged()
    }

    pub fn metric(&self, metric: Metric) -> Option<f64> {
        self.errors.map(|e| match metric {
            Metric::X => e.err_x,
            Metric::VPar => e.err_vpar,
            Metric::VPerp => e.err_vperp,
        })
    }

    /// Usable for slope fits: succeeded and not flagged.
    pub fn usable(&self) -> bool {
        self.errors.is_some() && !self.flagged()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    X,
    VPar,
    VPerp,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::X, Metric::VPar, Metric::VPerp];

    pub fn column(self) -> &'static str {
        match self {
            Metric::X => "err_x",
            Metric::VPar => "err_vpar",
            Metric::VPerp => "err_vperp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub method: Method,
    pub h_rule: HRule,
    pub metric: Metric,
    /// `None` when fewer than four usable cells exist.
    pub slope: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMeta {
    pub method: Method,
    pub fp_mode: String,
    pub guard: ResonanceGuard,
    pub guard_policy: GuardPolicy,
    pub start_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub epsilon: f64,
    pub grid: TimeGrid,
    pub substeps: Option<usize>,
    pub h_ref: Option<f64>,
    pub discrepancy: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub preset: Preset,
    pub x0: Vec3,
    pub v0: Vec3,
    pub t_end: f64,
    pub err_mode: ErrorMode,
    pub reference: ReferenceConfig,
    pub methods: Vec<MethodMeta>,
    pub oracle: Vec<OracleMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<Cell>,
    pub slopes: Vec<SlopeFit>,
}

impl ConvergenceReport {
    pub fn cells_for(&self, method: Method) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.method == method)
    }

    pub fn slope(&self, method: Method, h_rule: HRule, metric: Metric) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.method == method && s.h_rule == h_rule && s.metric == metric)
            .and_then(|s| s.slope)
    }

    pub fn cell(&self, method: Method, epsilon: f64, h_rule: HRule) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.epsilon == epsilon && c.h_rule == h_rule)
    }
}

/// Least-squares slope of `log(err)` against `log(ε)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    const NEED: usize = 4;
    if points.len() < NEED {
        return Err(Error::InsufficientData {
            got: points.len(),
            need: NEED,
        });
    }
    if let Some(&(e, err)) = points.iter().find(|&&(e, err)| !(e > 0.0 && err > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "slope fit needs positive data, got ({e}, {err})"
        )));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(e, r)| (e.ln(), r.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope fit needs distinct epsilons".into()));
    }
    Ok(sxy / sxx)
}

fn sort_cells(cells: &mut [Cell]) {
    cells.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.h_rule.sort_key().0.cmp(&b.h_rule.sort_key().0))
            .then(a.h.total_cmp(&b.h))
    });
}

fn fit_all(spec: &ExperimentSpec, cells: &[Cell]) -> Vec<SlopeFit> {
    let mut fits = Vec::new();
    for cfg in &spec.methods {
        for &rule in &spec.h_rules {
            for metric in Metric::ALL {
                let points: Vec<(f64, f64)> = cells
                    .iter()
                    .filter(|c| c.method == cfg.method && c.h_rule == rule && c.usable())
                    .filter_map(|c| c.metric(metric).map(|e| (c.epsilon, e)))
                    .filter(|&(_, e)| e > 0.0)
                    .collect();
                fits.push(SlopeFit {
                    method: cfg.method,
                    h_rule: rule,
                    metric,
                    slope: fit_slope(&points).ok(),
                    points: points.len(),
                });
            }
        }
    }
    fits
}

fn run_cell(
    spec: &ExperimentSpec,
    cfg: &MethodConfig,
    epsilon: f64,
    rule: HRule,
    reference: &std::result::Result<Arc<ReferenceSolution>, String>,
) -> Cell {
    let h = rule.h(epsilon);
    let mut cell = Cell {
        method: cfg.method,
        epsilon,
        h,
        h_rule: rule,
        n_steps: step_count(h, spec.t_end).unwrap_or(0),
        errors: None,
        resonance: ResonanceStatus::Ok,
        fp_iters: 0,
        fp_residual: 0.0,
        fp_mode: cfg.fp_mode(),
        oracle_discrepancy: reference.as_ref().ok().map(|r| r.discrepancy),
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let reference = reference
            .as_ref()
            .map_err(|e| Error::InvalidInput(format!("reference unavailable: {e}")))?;
        let model = spec.preset.build(epsilon)?;
        let traj = run_trajectory(spec.x0, spec.v0, &model, cfg, h, spec.t_end)?;
        cell.resonance = traj.resonance();
        cell.fp_iters = traj.max_fp_iters();
        cell.fp_residual = traj.max_fp_residual();
        cell.errors = Some(compute_errors(&traj, reference, &model, spec.err_mode)?);
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.failure = Some(e.to_string());
        // the trajectory never reported its flags; use the initial field
        if let Ok(model) = spec.preset.build(epsilon) {
            let b = model.eval_b(spec.x0, 0.0).norm();
            cell.resonance = check_resonance(&cfg.guard, h, b);
        }
    }
    cell
}

type RefTable = BTreeMap<(u64, u64), (f64, TimeGrid, std::result::Result<Arc<ReferenceSolution>, String>)>;

fn solve_references(spec: &ExperimentSpec, cache: &ReferenceCache) -> Result<RefTable> {
    let mut jobs = Vec::new();
    for &eps in &spec.epsilons {
        for grid in spec.grids(eps)? {
            jobs.push((eps, grid));
        }
    }
    let solved: Vec<_> = jobs
        .into_par_iter()
        .map(|(eps, grid)| {
            let sol = spec
                .preset
                .build(eps)
                .and_then(|m| cache.get_or_solve(&m, spec.x0, spec.v0, &grid, &spec.reference))
                .map_err(|e| e.to_string());
            ((eps.to_bits(), grid.spacing.to_bits()), (eps, grid, sol))
        })
        .collect();
    Ok(solved.into_iter().collect())
}

/// Picks the reference grid that contains every node of step size `h`.
fn reference_for<'a>(
    refs: &'a RefTable,
    spec: &ExperimentSpec,
    epsilon: f64,
    h: f64,
) -> &'a std::result::Result<Arc<ReferenceSolution>, String> {
    let candidates = refs.values().filter(|(e, _, _)| *e == epsilon);
    let mut fallback = None;
    for (_, grid, sol) in candidates {
        fallback.get_or_insert(sol);
        let r = h / grid.spacing;
        if spec.err_mode == ErrorMode::Endpoint || (r - r.round()).abs() <= 1e-9 * r {
            return sol;
        }
    }
    fallback.expect("a reference exists for every epsilon")
}

fn metadata(spec: &ExperimentSpec, kind: &str, refs: &RefTable) -> ReportMetadata {
    ReportMetadata {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        preset: spec.preset,
        x0: spec.x0,
        v0: spec.v0,
        t_end: spec.t_end,
        err_mode: spec.err_mode,
        reference: spec.reference,
        methods: spec
            .methods
            .iter()
            .map(|m| MethodMeta {
                method: m.method,
                fp_mode: m.fp_mode(),
                guard: m.guard,
                guard_policy: m.guard_policy,
                start_rule: start_rule(m.method).to_string(),
            })
            .collect(),
        oracle: refs
            .values()
            .map(|(eps, grid, sol)| OracleMeta {
                epsilon: *eps,
                grid: *grid,
                substeps: sol.as_ref().ok().map(|s| s.substeps),
                h_ref: sol.as_ref().ok().map(|s| s.h_ref),
                discrepancy: sol.as_ref().ok().map(|s| s.discrepancy),
                failure: sol.as_ref().err().cloned(),
            })
            .collect(),
    }
}

fn run_cells(spec: &ExperimentSpec, cache: &ReferenceCache) -> Result<(Vec<Cell>, RefTable)> {
    spec.validate()?;
    let refs = solve_references(spec, cache)?;
    let mut jobs = Vec::new();
    for cfg in &spec.methods {
        for &eps in &spec.epsilons {
            for &rule in &spec.h_rules {
                jobs.push((cfg, eps, rule));
            }
        }
    }
    let mut cells: Vec<Cell> = jobs
        .into_par_iter()
        .map(|(cfg, eps, rule)| {
            let reference = reference_for(&refs, spec, eps, rule.h(eps));
            run_cell(spec, cfg, eps, rule, reference)
        })
        .collect();
    sort_cells(&mut cells);
    Ok((cells, refs))
}

/// Runs every (method, ε, h) cell and fits the error slopes.
///
/// A failing cell is recorded with its error message; only invalid specs fail
/// the whole run.
pub fn run_convergence(spec: &ExperimentSpec, cache: &ReferenceCache) -> Result<ConvergenceReport> {
    let (cells, refs) = run_cells(spec, cache)?;
    let slopes = fit_all(spec, &cells);
    Ok(ConvergenceReport {
        metadata: metadata(spec, "convergence", &refs),
        cells,
        slopes,
    })
}

/// Endpoint errors for a single `ε` over a range of step sizes, without slope fits.
pub fn run_resonance_scan(spec: &ExperimentSpec, cache: &ReferenceCache) -> Result<ConvergenceReport> {
    if spec.epsilons.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "a resonance scan needs exactly one epsilon, got {}",
            spec.epsilons.len()
        )));
    }
    let (cells, refs) = run_cells(spec, cache)?;
    Ok(ConvergenceReport {
        metadata: metadata(spec, "resonance-scan", &refs),
        cells,
        slopes: Vec::new(),
    })
}
