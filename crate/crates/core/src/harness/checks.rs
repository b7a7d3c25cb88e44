//! Pass/fail checks run by `boris validate`.
//!
//! Each check is self-contained; the order and slope checks take the reports
//! produced by [`run_convergence`](super::run_convergence) and
//! [`run_resonance_scan`](super::run_resonance_scan) so one sweep serves
//! several of them.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fit_slope, run_convergence, run_resonance_scan, ConvergenceReport, ExperimentSpec, HRule, Metric};
use crate::error::Result;
use crate::fields::{check_resonance, FieldModel, Preset, ResonanceGuard};
use crate::filters::series::{series_oracle, terms_for};
use crate::filters::{self, FilterFn};
use crate::geom3::Vec3;
use crate::integrators::{one_step_map, run_trajectory, Method, MethodConfig};
use crate::reference::{constant_field_flow, reference_solve, ReferenceCache, ReferenceConfig, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: &str, name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        id: id.to_string(),
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rel(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

/// Signature of a filter application `f(hB̂) v`; injectable for fault tests.
pub type FilterApply<'a> = &'a dyn Fn(FilterFn, f64, Vec3, Vec3) -> Result<Vec3>;

/// Routes each filter through its public `apply_*` entry point.
pub fn library_apply(f: FilterFn, h: f64, b: Vec3, v: Vec3) -> Result<Vec3> {
    match f {
        FilterFn::ExpNeg => filters::apply_exp_neg(h, b, v),
        FilterFn::Psi => filters::apply_psi(h, b, v),
        FilterFn::Phi1 => filters::apply_phi1(h, b, v),
        FilterFn::Upsilon => filters::apply_upsilon(h, b, v),
        FilterFn::Phi2 => filters::apply_phi2(h, b, v),
        FilterFn::Varphi1 { sign } => filters::apply_varphi1(sign, h, b, v),
        other => other.apply(h, b, v),
    }
}

pub const FILTER_SAMPLES: usize = 200;

/// Every filter against its Taylor series at 200 random `(B, v, h)` with
/// `0.1 ≤ h|B| ≤ 3`, at least 0.3 away from poles and inside the series'
/// radius of convergence.
pub fn filter_series(apply: FilterApply<'_>) -> CheckResult {
    timed("C1", "filter series agreement", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let mut worst = (0.0f64, FilterFn::ExpNeg);
        for _ in 0..FILTER_SAMPLES {
            let dir = random_unit(&mut rng);
            let b_mag = 10f64.powf(rng.gen_range(-0.5..1.5));
            let b = dir * b_mag;
            let v = random_box(&mut rng);
            for f in FilterFn::ALL {
                let y = loop {
                    let y: f64 = rng.gen_range(0.1..=3.0);
                    let inside = f.series_radius().is_none_or(|r| y <= r - 0.3);
                    if f.pole_distance(y) >= 0.3 && inside {
                        break y;
                    }
                };
                let h = y / b_mag;
                let got = apply(f, h, b, v)?;
                let want = series_oracle(f, h, b, v, terms_for(f, y, 40));
                let e = rel(got, want);
                if !(e <= worst.0) {
                    worst = (e, f);
                }
            }
        }
        Ok((
            worst.0 <= 1e-12,
            format!(
                "max relative error {:.2e} ({}) over {} samples",
                worst.0,
                worst.1.name(),
                FILTER_SAMPLES
            ),
        ))
    })
}

const FILTERED: [Method; 3] = [Method::FilteredExplicit, Method::FilteredImplicit, Method::TwoPoint];

/// Constant `B` with `h|B| = 1` and constant `E`: 1000 steps against the
/// closed-form flow.
pub fn constant_field_exactness() -> CheckResult {
    timed("C2", "constant-field exactness", || {
        let b = Vec3::new(0.6, -0.8, 1.2);
        let e = Vec3::new(0.3, -0.2, 0.5);
        let model = FieldModel::constant("constant-check", 1.0, b, e)?;
        let h = 1.0 / b.norm();
        let t_end = 1000.0 * h;
        let (x0, v0) = (super::STANDARD_X0, super::STANDARD_V0);
        let mut worst = 0.0f64;
        for m in FILTERED {
            let traj = run_trajectory(x0, v0, &model, &MethodConfig::new(m), h, t_end)?;
            let last = traj.last();
            let (x, v) = constant_field_flow(x0, v0, b, e, last.t)?;
            worst = worst.max(rel(last.x, x)).max(rel(last.v_node, v));
        }
        Ok((worst <= 1e-11, format!("max relative endpoint error {worst:.2e}")))
    })
}

/// Filtered single-point methods with `E = 0` on the standard field:
/// `|v^{n+1/2}|` is constant over 10⁴ steps.
pub fn norm_preservation() -> CheckResult {
    timed("C3", "velocity norm preservation", || {
        let eps = 0.5f64.powi(8);
        let h = 4.0 * eps;
        let model = Preset::Standard.build(eps)?.without_electric();
        let mut worst = 0.0f64;
        for m in [Method::FilteredExplicit, Method::FilteredImplicit] {
            let traj = run_trajectory(
                super::STANDARD_X0,
                super::STANDARD_V0,
                &model,
                &MethodConfig::new(m),
                h,
                1e4 * h,
            )?;
            let n0 = traj.states[0].v_half.norm();
            for s in &traj.states {
                worst = worst.max((s.v_half.norm() - n0).abs() / n0);
            }
        }
        Ok((
            worst <= 1e-12,
            format!("max relative drift {worst:.2e} over 10^4 steps"),
        ))
    })
}

/// Smooth inhomogeneous field whose strong part has size `1/ε`.
fn random_model(rng: &mut ChaCha8Rng, eps: f64) -> Result<FieldModel> {
    let (a, c, d) = (
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    );
    FieldModel::new(
        "random-smooth",
        eps,
        Arc::new(move |y: Vec3| Vec3::new(a * y.y, c * y.x.sin(), 1.0 + d * y.z * y.z)),
        Arc::new(move |x: Vec3, t| Vec3::new(0.3 * x.z, -0.2 * t, 0.1 * x.x)),
        Arc::new(move |x: Vec3, t| Ok(Vec3::new(0.2 * x.y + t, 0.5, -0.3 * x.z * x.x))),
    )
}

pub const SYMMETRY_CONFIGS: usize = 100;

/// Forward then backward one-step map returns the start, for every method.
pub fn symmetry() -> CheckResult {
    timed("C4", "time symmetry", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        let guard = ResonanceGuard::default();
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < SYMMETRY_CONFIGS {
            let eps = 0.5f64.powf(rng.gen_range(3.0..6.0));
            let h = eps * rng.gen_range(0.3..3.0);
            let model = random_model(&mut rng, eps)?;
            let x = random_box(&mut rng);
            let v = random_box(&mut rng);
            let t = rng.gen_range(0.0..1.0);
            let b = model.eval_b(x, t).norm();
            if check_resonance(&guard, h, b).is_flagged() {
                continue;
            }
            for m in Method::ALL {
                let cfg = MethodConfig::converged(m);
                let (x1, v1) = one_step_map(x, v, t, &model, &cfg, h)?;
                let (xb, vb) = one_step_map(x1, v1, t + h, &model, &cfg, -h)?;
                worst = worst.max(rel(xb, x)).max(rel(vb, v));
            }
            done += 1;
        }
        Ok((
            worst <= 1e-10,
            format!("max relative return error {worst:.2e} over {done} configurations"),
        ))
    })
}

fn det6(mut a: [[f64; 6]; 6]) -> f64 {
    let mut det = 1.0;
    for col in 0..6 {
        let p = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..6 {
            let f = a[r][col] / a[col][col];
            for k in col..6 {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// Central-difference Jacobian determinant of the one-step map.
pub fn jacobian_det(model: &FieldModel, cfg: &MethodConfig, x: Vec3, v: Vec3, h: f64, delta: f64) -> Result<f64> {
    let mut jac = [[0.0; 6]; 6];
    let z: [f64; 6] = [x.x, x.y, x.z, v.x, v.y, v.z];
    let eval = |z: [f64; 6]| -> Result<[f64; 6]> {
        let (x1, v1) = one_step_map(
            Vec3::new(z[0], z[1], z[2]),
            Vec3::new(z[3], z[4], z[5]),
            0.0,
            model,
            cfg,
            h,
        )?;
        Ok([x1.x, x1.y, x1.z, v1.x, v1.y, v1.z])
    };
    for j in 0..6 {
        let (mut zp, mut zm) = (z, z);
        zp[j] += delta;
        zm[j] -= delta;
        let (fp, fm) = (eval(zp)?, eval(zm)?);
        for i in 0..6 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * delta);
        }
    }
    Ok(det6(jac))
}

/// Phase-space volume preservation of the one-step map for constant `B`.
pub fn volume_preservation() -> CheckResult {
    timed("C9", "phase-space volume", || {
        let model = FieldModel::constant(
            "constant-check",
            1.0,
            Vec3::new(0.4, -1.1, 2.0),
            Vec3::new(0.3, -0.2, 0.5),
        )?;
        let mut worst = 0.0f64;
        for m in Method::ALL {
            for h in [0.1, 0.7, 1.9] {
                let det = jacobian_det(
                    &model,
                    &MethodConfig::new(m),
                    super::STANDARD_X0,
                    super::STANDARD_V0,
                    h,
                    1e-5,
                )?;
                worst = worst.max((det - 1.0).abs());
            }
        }
        Ok((worst <= 1e-6, format!("max |det - 1| = {worst:.2e}")))
    })
}

const ORDER_FLOOR: f64 = 0.5 * 0.5 * 0.5 * 0.5 * 0.5 * 0.5;

fn slope_over(report: &ConvergenceReport, method: Method, rule: HRule, metric: Metric, eps_max: f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = report
        .cells_for(method)
        .filter(|c| c.h_rule == rule && c.usable() && c.epsilon <= eps_max)
        .filter_map(|c| c.metric(metric).map(|e| (c.epsilon, e)))
        .collect();
    fit_slope(&points)
}

/// Fitted orders in `ε` over `ε ≤ 2^-6` at `h = ε` and `h = 4ε`.
pub fn convergence_orders(report: &ConvergenceReport) -> CheckResult {
    timed("C5", "orders in epsilon", || {
        let mut expect: Vec<(Method, Metric, f64, f64)> = Vec::new();
        for m in [Method::FilteredImplicit, Method::TwoPoint] {
            expect.push((m, Metric::X, 1.7, 2.3));
            expect.push((m, Metric::VPar, 1.7, 2.3));
            expect.push((m, Metric::VPerp, 0.7, 1.3));
        }
        expect.push((Method::FilteredExplicit, Metric::X, 0.7, 1.3));
        let mut passed = true;
        let mut parts = Vec::new();
        for rule in [HRule::Ratio(1.0), HRule::Ratio(4.0)] {
            for &(m, metric, lo, hi) in &expect {
                match slope_over(report, m, rule, metric, ORDER_FLOOR) {
                    Ok(s) => {
                        let ok = (lo..=hi).contains(&s);
                        passed &= ok;
                        parts.push(format!(
                            "{m} {rule} {}={s:.2}{}",
                            metric.column(),
                            if ok { "" } else { "!" }
                        ));
                    }
                    Err(e) => {
                        passed = false;
                        parts.push(format!("{m} {rule} {}: {e}", metric.column()));
                    }
                }
            }
        }
        Ok((passed, parts.join("; ")))
    })
}

/// Filtered methods beat standard Boris in `err_x` at `h = 4ε, 16ε`.
pub fn boris_improvement(report: &ConvergenceReport) -> CheckResult {
    timed("C6", "improvement over standard Boris", || {
        let mut compared = 0;
        let mut losses = Vec::new();
        for rule in [HRule::Ratio(4.0), HRule::Ratio(16.0)] {
            for j in [8, 10, 12] {
                let eps = 0.5f64.powi(j);
                let Some(boris) = report.cell(Method::StandardBoris, eps, rule).filter(|c| c.usable()) else {
                    continue;
                };
                let boris_err = boris.metric(Metric::X).unwrap_or(f64::NAN);
                for m in FILTERED {
                    let Some(c) = report.cell(m, eps, rule).filter(|c| c.usable()) else {
                        continue;
                    };
                    compared += 1;
                    let err = c.metric(Metric::X).unwrap_or(f64::NAN);
                    if !(err <= boris_err) {
                        losses.push(format!("{m} eps=2^-{j} {rule}: {err:.2e} > {boris_err:.2e}"));
                    }
                }
            }
        }
        let passed = compared > 0 && losses.is_empty();
        let detail = if losses.is_empty() {
            format!("{compared} unflagged cells compared")
        } else {
            losses.join("; ")
        };
        Ok((passed, detail))
    })
}

/// Outcome of the near-resonance comparison in a scan report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSummary {
    pub cells: usize,
    pub failed: usize,
    /// Failures at step sizes the guard did not flag.
    pub failed_unflagged: usize,
    pub flagged: usize,
    /// Steps `k` flagged for the single-point implicit method or next to one.
    pub adjacent: usize,
    pub two_point_beats_implicit: usize,
    pub two_point_beats_explicit: usize,
    /// Flagged cells whose recorded value is not below the guard threshold.
    pub inconsistent_flags: usize,
}

pub fn summarize_scan(report: &ConvergenceReport) -> ScanSummary {
    let k_of = |h: f64| (1.0 / h).round() as i64;
    let err_at = |m: Method, k: i64| {
        report
            .cells_for(m)
            .find(|c| k_of(c.h) == k)
            .and_then(|c| c.metric(Metric::X))
    };
    let c_min = |m: Method| {
        report
            .metadata
            .methods
            .iter()
            .find(|mm| mm.method == m)
            .map_or(ResonanceGuard::default().c_min, |mm| mm.guard.c_min)
    };
    let inconsistent_flags = report
        .cells
        .iter()
        .filter(|c| match c.resonance {
            crate::fields::ResonanceStatus::NearResonant { value, .. } => !(value.abs() < c_min(c.method)),
            _ => false,
        })
        .count();
    let flagged_k: Vec<i64> = report
        .cells_for(Method::FilteredImplicit)
        .filter(|c| c.flagged())
        .map(|c| k_of(c.h))
        .collect();
    let mut ks: Vec<i64> = report.cells_for(Method::FilteredImplicit).map(|c| k_of(c.h)).collect();
    ks.retain(|k| flagged_k.iter().any(|f| (f - k).abs() <= 1));
    // a failed run counts as an infinite error
    let err_or_inf = |m: Method, k: i64| err_at(m, k).unwrap_or(f64::INFINITY);
    let mut beats_imp = 0;
    let mut beats_exp = 0;
    for &k in &ks {
        let tp = err_or_inf(Method::TwoPoint, k);
        beats_imp += usize::from(tp < err_or_inf(Method::FilteredImplicit, k));
        beats_exp += usize::from(tp <= err_or_inf(Method::FilteredExplicit, k));
    }
    ScanSummary {
        cells: report.cells.len(),
        failed: report.cells.iter().filter(|c| c.failure.is_some()).count(),
        failed_unflagged: report
            .cells
            .iter()
            .filter(|c| c.failure.is_some() && !c.flagged())
            .count(),
        flagged: report.cells.iter().filter(|c| c.flagged()).count(),
        adjacent: ks.len(),
        two_point_beats_implicit: beats_imp,
        two_point_beats_explicit: beats_exp,
        inconsistent_flags,
    }
}

/// Scan completes, flags exist and agree with the guard, and the two-point
/// method wins the majority of near-resonant comparisons.
///
/// Runs may fail only at flagged step sizes.
pub fn resonance_scan(report: &ConvergenceReport) -> CheckResult {
    timed("C7", "near-resonance robustness", || {
        let s = summarize_scan(report);
        let passed = s.failed_unflagged == 0
            && s.flagged > 0
            && s.inconsistent_flags == 0
            && s.adjacent > 0
            && 2 * s.two_point_beats_implicit > s.adjacent;
        Ok((
            passed,
            format!(
                "{} cells, {} failed ({} unflagged), {} flagged; near flagged steps two-point < implicit in {}/{} (<= explicit in {}/{})",
                s.cells,
                s.failed,
                s.failed_unflagged,
                s.flagged,
                s.two_point_beats_implicit,
                s.adjacent,
                s.two_point_beats_explicit,
                s.adjacent
            ),
        ))
    })
}

/// Halving check on every reference used by the given reports, plus the
/// oracle against the closed-form constant-field flow.
pub fn oracle_validity(reports: &[&ConvergenceReport]) -> CheckResult {
    timed("C8", "reference oracle validity", || {
        let mut worst = 0.0f64;
        let mut failures = Vec::new();
        let mut count = 0;
        for r in reports {
            let tol = r.metadata.reference.ref_tol;
            for o in &r.metadata.oracle {
                count += 1;
                match (o.discrepancy, &o.failure) {
                    (Some(d), None) if d <= tol.min(1e-10) => worst = worst.max(d),
                    (d, f) => failures.push(format!("eps={}: {:?} {:?}", o.epsilon, d, f)),
                }
            }
        }
        let eps = 1.0 / 64.0;
        let model = Preset::ConstantBE.build(eps)?;
        let b = model.eval_b(Vec3::ZERO, 0.0);
        let e = model.eval_e(Vec3::ZERO, 0.0)?;
        let grid = TimeGrid::uniform(0.125, 1.0)?;
        let sol = reference_solve(
            &model,
            super::STANDARD_X0,
            super::STANDARD_V0,
            &grid,
            &ReferenceConfig::default(),
        )?;
        let mut closed = 0.0f64;
        for s in &sol.samples {
            let (x, v) = constant_field_flow(super::STANDARD_X0, super::STANDARD_V0, b, e, s.t)?;
            closed = closed.max(rel(s.x, x)).max(rel(s.v, v));
        }
        let passed = count > 0 && failures.is_empty() && closed <= 1e-11;
        let mut detail =
            format!("{count} references, max halving discrepancy {worst:.2e}; closed-form deviation {closed:.2e}");
        if !failures.is_empty() {
            detail.push_str(&format!("; failed: {}", failures.join(", ")));
        }
        Ok((passed, detail))
    })
}

/// For constant `B` the two-point method coincides with the explicit
/// single-point method.
pub fn two_point_constant_field() -> CheckResult {
    timed("I1", "two-point equals single-point for constant B", || {
        let model = Preset::ConstantBE.build(1.0 / 32.0)?;
        let h = 3.0 / 32.0;
        let t_end = 96.0 * h;
        let a = run_trajectory(
            super::STANDARD_X0,
            super::STANDARD_V0,
            &model,
            &MethodConfig::new(Method::TwoPoint),
            h,
            t_end,
        )?;
        let b = run_trajectory(
            super::STANDARD_X0,
            super::STANDARD_V0,
            &model,
            &MethodConfig::new(Method::FilteredExplicit),
            h,
            t_end,
        )?;
        let worst = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(p, q)| rel(p.x, q.x).max(rel(p.v_half, q.v_half)))
            .fold(0.0, f64::max);
        Ok((worst <= 1e-12, format!("max relative difference {worst:.2e}")))
    })
}

/// At fixed `ε`, every method converges at second order in `h`.
pub fn order_in_h(cache: &ReferenceCache) -> CheckResult {
    timed("I2", "second order in h at fixed epsilon", || {
        let eps = 1.0 / 16.0;
        let model = Preset::Standard.build(eps)?;
        let grid = TimeGrid::endpoint(1.0)?;
        let reference = cache.get_or_solve(
            &model,
            super::STANDARD_X0,
            super::STANDARD_V0,
            &grid,
            &ReferenceConfig::default(),
        )?;
        let target = reference.last().x;
        let mut parts = Vec::new();
        let mut passed = true;
        for m in Method::ALL {
            let mut points = Vec::new();
            for j in 2..=6 {
                let h = eps * 0.5f64.powi(j);
                let traj = run_trajectory(
                    super::STANDARD_X0,
                    super::STANDARD_V0,
                    &model,
                    &MethodConfig::new(m),
                    h,
                    1.0,
                )?;
                points.push((h, (traj.last().x - target).norm()));
            }
            let slope = fit_slope(&points)?;
            passed &= slope >= 1.7;
            parts.push(format!("{m}={slope:.2}"));
        }
        Ok((passed, parts.join(", ")))
    })
}

/// The same experiment gives byte-identical CSV and JSON on one thread and on many.
pub fn report_determinism() -> CheckResult {
    timed("I3", "deterministic reports", || {
        let spec = ExperimentSpec::convergence(4, 7, &[1.0, 4.0]);
        let render = |threads: usize| -> Result<(Vec<u8>, Vec<u8>)> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
            let report = pool.install(|| run_convergence(&spec, &ReferenceCache::new()))?;
            let (mut csv, mut json) = (Vec::new(), Vec::new());
            super::write_csv(&report, &mut csv)?;
            super::write_json(&report, &mut json)?;
            Ok((csv, json))
        };
        let one = render(1)?;
        let many = render(4)?;
        Ok((
            one == many,
            format!("{} CSV bytes, {} JSON bytes", one.0.len(), one.1.len()),
        ))
    })
}

/// Runs the full suite: module invariants, the standard sweep and scan,
/// and every criterion that depends on them.
pub fn run_all(cache: &ReferenceCache, mut progress: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |r: CheckResult, out: &mut Vec<CheckResult>| {
        progress(&r);
        out.push(r);
    };
    push(filter_series(&library_apply), &mut out);
    push(constant_field_exactness(), &mut out);
    push(norm_preservation(), &mut out);
    push(symmetry(), &mut out);

    let convergence = run_convergence(&ExperimentSpec::convergence(6, 13, &[1.0, 4.0, 16.0]), cache);
    let scan = run_resonance_scan(&ExperimentSpec::standard_scan(), cache);
    match (&convergence, &scan) {
        (Ok(conv), Ok(scan)) => {
            push(convergence_orders(conv), &mut out);
            push(boris_improvement(conv), &mut out);
            push(resonance_scan(scan), &mut out);
            push(oracle_validity(&[conv, scan]), &mut out);
        }
        _ => {
            let msg = [convergence.as_ref().err(), scan.as_ref().err()]
                .into_iter()
                .flatten()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            for (id, name) in [
                ("C5", "orders in epsilon"),
                ("C6", "improvement over standard Boris"),
                ("C7", "near-resonance robustness"),
                ("C8", "reference oracle validity"),
            ] {
                push(
                    timed(id, name, || Ok((false, format!("sweep failed: {msg}")))),
                    &mut out,
                );
            }
        }
    }
    push(volume_preservation(), &mut out);
    push(two_point_constant_field(), &mut out);
    push(order_in_h(cache), &mut out);
    push(report_determinism(), &mut out);
    out
}
