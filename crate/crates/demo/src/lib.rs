//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string; the `*_view` functions
//! behind them are plain Rust and are tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use filtered_boris::fields::{Preset, ResonanceStatus};
use filtered_boris::filters::{theta, FilterFn};
use filtered_boris::harness::{run_resonance_scan, ExperimentSpec, STANDARD_V0, STANDARD_X0};
use filtered_boris::integrators::{run_trajectory, step_count, Method, MethodConfig};
use filtered_boris::reference::{
    compute_errors, reference_solve, ErrorMode, ReferenceCache, ReferenceConfig, TimeGrid,
};

/// Keeps a single request within a few seconds in the browser.
const MAX_STEPS: u64 = 20_000;
const MIN_EPSILON: f64 = 1.0 / 8192.0;
const MAX_SCAN_POINTS: u32 = 600;

#[derive(Debug, Serialize)]
pub struct TrajectoryView {
    pub method: String,
    pub epsilon: f64,
    pub h: f64,
    pub fp_mode: String,
    pub t: Vec<f64>,
    pub x: Vec<[f64; 3]>,
    /// Reference positions at the same times.
    pub reference: Vec<[f64; 3]>,
    pub err_x: f64,
    pub err_vpar: f64,
    pub err_vperp: f64,
    pub flagged: bool,
}

fn check_epsilon(epsilon: f64) -> Result<(), String> {
    if !(MIN_EPSILON..=1.0).contains(&epsilon) {
        return Err(format!("epsilon must lie in [{MIN_EPSILON}, 1], got {epsilon}"));
    }
    Ok(())
}

/// One trajectory of the standard experiment next to its reference solution.
pub fn trajectory_view(method: &str, epsilon: f64, h: f64, t_end: f64) -> Result<TrajectoryView, String> {
    let method: Method = method.parse().map_err(|e| format!("{e}"))?;
    check_epsilon(epsilon)?;
    let n = step_count(h, t_end).map_err(|e| e.to_string())?;
    if n > MAX_STEPS {
        return Err(format!("{n} steps requested, the demo allows {MAX_STEPS}"));
    }
    let model = Preset::Standard.build(epsilon).map_err(|e| e.to_string())?;
    let cfg = MethodConfig::new(method);
    let traj = run_trajectory(STANDARD_X0, STANDARD_V0, &model, &cfg, h, t_end).map_err(|e| e.to_string())?;
    let grid = TimeGrid::uniform(h, t_end).map_err(|e| e.to_string())?;
    let reference = reference_solve(&model, STANDARD_X0, STANDARD_V0, &grid, &ReferenceConfig::default())
        .map_err(|e| e.to_string())?;
    let err = compute_errors(&traj, &reference, &model, ErrorMode::SupOverGrid).map_err(|e| e.to_string())?;
    Ok(TrajectoryView {
        method: method.label().to_string(),
        epsilon,
        h,
        fp_mode: cfg.fp_mode(),
        t: traj.states.iter().map(|s| s.t).collect(),
        x: traj.states.iter().map(|s| s.x.to_array()).collect(),
        reference: reference.samples.iter().map(|s| s.x.to_array()).collect(),
        err_x: err.err_x,
        err_vpar: err.err_vpar,
        err_vperp: err.err_vperp,
        flagged: traj.resonance().is_flagged(),
    })
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub name: String,
    /// Action on the plane orthogonal to `B`: `re + im · (b̂ ×)`.
    pub re: Vec<Option<f64>>,
    pub im: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
pub struct FilterCurves {
    /// `h|B|`
    pub y: Vec<f64>,
    pub curves: Vec<Curve>,
    /// Evaluation-point weight of the implicit method.
    pub theta: Vec<Option<f64>>,
}

const PLOTTED: [FilterFn; 5] = [
    FilterFn::Psi,
    FilterFn::Phi1,
    FilterFn::Phi2,
    FilterFn::Sinch,
    FilterFn::ExpNeg,
];

/// Filter responses for `0 < h|B| ≤ y_max`; poles show up as gaps.
pub fn filter_curves_view(y_max: f64, samples: usize) -> Result<FilterCurves, String> {
    if !(y_max > 0.0 && y_max <= 50.0) || !(2..=5000).contains(&samples) {
        return Err(format!(
            "need 0 < y_max <= 50 and 2..=5000 samples, got {y_max}, {samples}"
        ));
    }
    let y: Vec<f64> = (1..=samples).map(|i| y_max * i as f64 / samples as f64).collect();
    let finite = |v: f64| (v.is_finite() && v.abs() < 1e3).then_some(v);
    let curves = PLOTTED
        .iter()
        .map(|&f| {
            let (re, im) = y
                .iter()
                .map(|&yi| match f.coeffs(1.0, yi) {
                    Ok(c) => (finite(c.c0 - c.c2 * yi * yi), finite(c.c1 * yi)),
                    Err(_) => (None, None),
                })
                .unzip();
            Curve {
                name: f.name().to_string(),
                re,
                im,
            }
        })
        .collect();
    let theta = y.iter().map(|&yi| theta(yi).ok().and_then(finite)).collect();
    Ok(FilterCurves { y, curves, theta })
}

#[derive(Debug, Serialize)]
pub struct ScanSeries {
    pub method: String,
    pub err_x: Vec<Option<f64>>,
    pub flagged: Vec<bool>,
}

#[derive(Debug, Serialize)]
pub struct ScanView {
    pub epsilon: f64,
    pub k: Vec<u32>,
    /// `h/ε` for each `k`.
    pub ratio: Vec<f64>,
    pub series: Vec<ScanSeries>,
}

/// Endpoint position errors at fixed `ε` for `h = 1/k`.
pub fn scan_view(epsilon: f64, k_from: u32, k_to: u32) -> Result<ScanView, String> {
    check_epsilon(epsilon)?;
    if k_from == 0 || k_from > k_to || k_to - k_from >= MAX_SCAN_POINTS {
        return Err(format!("need 0 < k_from <= k_to with at most {MAX_SCAN_POINTS} points"));
    }
    let spec = ExperimentSpec::scan(epsilon, k_from, k_to);
    let report = run_resonance_scan(&spec, &ReferenceCache::new()).map_err(|e| e.to_string())?;
    let k: Vec<u32> = (k_from..=k_to).collect();
    let series = Method::ALL
        .iter()
        .map(|&m| {
            let mut cells: Vec<_> = report.cells_for(m).collect();
            cells.sort_by(|a, b| b.h.total_cmp(&a.h));
            ScanSeries {
                method: m.label().to_string(),
                err_x: cells.iter().map(|c| c.errors.map(|e| e.err_x)).collect(),
                flagged: cells
                    .iter()
                    .map(|c| matches!(c.resonance, ResonanceStatus::NearResonant { .. }))
                    .collect(),
            }
        })
        .collect();
    Ok(ScanView {
        epsilon,
        ratio: k.iter().map(|&k| 1.0 / (f64::from(k) * epsilon)).collect(),
        k,
        series,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn trajectory(method: &str, epsilon: f64, h: f64, t_end: f64) -> Result<String, JsError> {
    to_json(trajectory_view(method, epsilon, h, t_end))
}

#[wasm_bindgen(js_name = filterCurves)]
pub fn filter_curves(y_max: f64, samples: usize) -> Result<String, JsError> {
    to_json(filter_curves_view(y_max, samples))
}

#[wasm_bindgen]
pub fn scan(epsilon: f64, k_from: u32, k_to: u32) -> Result<String, JsError> {
    to_json(scan_view(epsilon, k_from, k_to))
}

#[wasm_bindgen]
pub fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}
