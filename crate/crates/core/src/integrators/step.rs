use super::{near_resonant, FixedPointInfo, GuardPolicy, Method, MethodConfig, ParticleState, StepOutcome};
use crate::error::{Error, Result};
use crate::fields::{check_resonance, eval_point, guiding_center, FieldModel, ResonanceStatus, ThetaChoice};
use crate::filters::{FilterFn, RodriguezCoeffs};
use crate::geom3::{cross, hat_apply, solve3, Mat3, Vec3};

/// Fields at the current node plus the guard verdict.
struct Node {
    b: Vec3,
    e: Vec3,
    resonance: ResonanceStatus,
}

fn node_fields(x: Vec3, t: f64, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<Node> {
    let b = model.eval_b(x, t);
    let e = model.eval_e(x, t)?;
    let resonance = check_resonance(&cfg.guard, h, b.norm());
    if resonance.is_flagged() && cfg.guard_policy == GuardPolicy::Reject {
        return Err(near_resonant(resonance));
    }
    Ok(Node { b, e, resonance })
}

fn position_scale(x: Vec3) -> f64 {
    x.norm().max(1.0)
}

/// Iterates `p ↦ next(p)` where `eval(p)` returns the value computed with the
/// evaluation point `p` together with the updated point.
///
/// Returns the value for the last point used, that point, and the statistics.
fn iterate<T>(
    start: Vec3,
    scale: f64,
    max_iters: usize,
    cfg: &MethodConfig,
    mut eval: impl FnMut(Vec3) -> Result<(T, Vec3)>,
) -> Result<(T, Vec3, FixedPointInfo)> {
    let mut p = start;
    let (mut value, mut next) = eval(p)?;
    let mut disp = (next - p).norm();
    let mut info = FixedPointInfo {
        iters: 0,
        residual: disp / scale,
        contraction: None,
    };
    while info.iters < max_iters && info.residual > cfg.fp_tol {
        p = next;
        info.iters += 1;
        (value, next) = eval(p)?;
        let d = (next - p).norm();
        if info.iters == 1 && disp > 0.0 {
            info.contraction = Some(d / disp);
        }
        disp = d;
        info.residual = d / scale;
    }
    if !p.is_finite() {
        return Err(Error::NonFinite {
            what: "evaluation point",
        });
    }
    if cfg.fp_strict && max_iters > 0 && info.residual > 1e3 * cfg.fp_tol {
        return Err(Error::NoConvergence {
            iters: info.iters,
            residual: info.residual,
        });
    }
    Ok((value, p, info))
}

fn implicit_iters(cfg: &MethodConfig) -> usize {
    if cfg.method.is_implicit() {
        cfg.fp_max_iters
    } else {
        0
    }
}

/// Evaluation point of the single-point filtered methods for the node `(x, v)`.
fn single_point(x: Vec3, v: Vec3, b_n: Vec3, h: f64, theta: ThetaChoice) -> Result<Vec3> {
    match theta {
        ThetaChoice::One => Ok(x),
        ThetaChoice::Optimal => {
            let gc = guiding_center(x, v, b_n)?;
            eval_point(x, gc, h * b_n.norm(), theta)
        }
    }
}

/// `Φ₁(hB̂̄) m − h Υ(hB̂ⁿ)Eⁿ` with the Υ term precomputed.
fn node_from_mean(mean: Vec3, b_bar: Vec3, upsilon_e: Vec3, h: f64) -> Result<Vec3> {
    Ok(FilterFn::Phi1.apply(h, b_bar, mean)? - upsilon_e * h)
}

/// `vⁿ = Φ₁(hB̂̄ⁿ)(x^{n+1} − x^{n−1})/(2h) − hΥ(hB̂ⁿ)Eⁿ`.
///
/// For the two-point method pass `b_bar = b_n`.
pub fn node_velocity(x_prev: Vec3, x_next: Vec3, b_bar: Vec3, b_n: Vec3, e_n: Vec3, h: f64) -> Result<Vec3> {
    let upsilon_e = FilterFn::Upsilon.apply(h, b_n, e_n)?;
    node_from_mean((x_next - x_prev) / (2.0 * h), b_bar, upsilon_e, h)
}

/// One step of the classical Boris scheme.
///
/// The implicit midpoint rotation is solved with the usual tangent construction.
/// A vanishing field is allowed and gives the leapfrog scheme.
pub fn standard_boris_step(
    state: &ParticleState,
    model: &FieldModel,
    cfg: &MethodConfig,
    h: f64,
) -> Result<StepOutcome> {
    let node = node_fields(state.x, state.t, model, cfg, h)?;
    let kick = node.e * (0.5 * h);
    let v_plus = state.v_half + kick;
    let t = node.b * (0.5 * h);
    let s = t * (2.0 / (1.0 + t.norm_sq()));
    let v_prime = v_plus + cross(v_plus, t);
    let v_minus = v_plus + cross(v_prime, s);
    let v_half_next = v_minus + kick;
    Ok(StepOutcome {
        x_next: state.x + v_half_next * h,
        v_half_next,
        v_node: (v_half_next + state.v_half) * 0.5,
        eval_point: state.x,
        resonance: node.resonance,
        fp: FixedPointInfo::default(),
    })
}

/// One step of the filtered Boris method (explicit or implicit evaluation point).
pub fn filtered_step(state: &ParticleState, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<StepOutcome> {
    let (x, t) = (state.x, state.t);
    let node = node_fields(x, t, model, cfg, h)?;
    let psi_e = FilterFn::Psi.apply(h, node.b, node.e)?;
    let upsilon_e = FilterFn::Upsilon.apply(h, node.b, node.e)?;
    let v_plus = state.v_half + psi_e * (0.5 * h);
    let theta = cfg.method.theta();

    let ((v_minus, v_node), x_bar, fp) = iterate(x, position_scale(x), implicit_iters(cfg), cfg, |p| {
        let b_bar = model.eval_b(p, t);
        let v_minus = FilterFn::ExpNeg.apply(h, b_bar, v_plus)?;
        let v_node = node_from_mean((v_minus + v_plus) * 0.5, b_bar, upsilon_e, h)?;
        let next = single_point(x, v_node, node.b, h, theta)?;
        Ok(((v_minus, v_node), next))
    })?;

    let v_half_next = v_minus + psi_e * (0.5 * h);
    Ok(StepOutcome {
        x_next: x + v_half_next * h,
        v_half_next,
        v_node,
        eval_point: x_bar,
        resonance: node.resonance,
        fp,
    })
}

/// The `3×3` matrix `Φ₂(hB̂⊙) + ½ h B̂ⁿ Φ₁(hB̂ⁿ)`.
fn two_point_matrix(h: f64, b_n: Vec3, phi1: &RodriguezCoeffs, b_gc: Vec3, phi2: &RodriguezCoeffs) -> Result<Mat3> {
    Mat3::from_linear_map(|u| Ok(phi2.apply(b_gc, u) + hat_apply(b_n, phi1.apply(b_n, u)) * (0.5 * h)))
}

/// Solves the rotation line of the two-point method for `v₋^{n+1/2}`.
fn two_point_rotation(h: f64, b_n: Vec3, b_gc: Vec3, v_plus: Vec3) -> Result<Vec3> {
    let phi1 = FilterFn::Phi1.coeffs(h, b_n.norm())?;
    let phi2 = FilterFn::Phi2.coeffs(h, b_gc.norm())?;
    let m = two_point_matrix(h, b_n, &phi1, b_gc, &phi2)?;
    let rhs = phi2.apply(b_gc, v_plus) - hat_apply(b_n, phi1.apply(b_n, v_plus)) * (0.5 * h);
    solve3(&m, rhs)
}

/// One step of the two-point filtered Boris method.
pub fn two_point_step(state: &ParticleState, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<StepOutcome> {
    let (x, t) = (state.x, state.t);
    let node = node_fields(x, t, model, cfg, h)?;
    let psi_e = FilterFn::Psi.apply(h, node.b, node.e)?;
    let upsilon_e = FilterFn::Upsilon.apply(h, node.b, node.e)?;
    let v_plus = state.v_half + psi_e * (0.5 * h);

    let ((v_minus, v_node), x_gc, fp) = iterate(x, position_scale(x), implicit_iters(cfg), cfg, |p| {
        let b_gc = model.eval_b(p, t);
        let v_minus = two_point_rotation(h, node.b, b_gc, v_plus)?;
        let v_node = node_from_mean((v_minus + v_plus) * 0.5, node.b, upsilon_e, h)?;
        let next = guiding_center(x, v_node, node.b)?;
        Ok(((v_minus, v_node), next))
    })?;

    let v_half_next = v_minus + psi_e * (0.5 * h);
    Ok(StepOutcome {
        x_next: x + v_half_next * h,
        v_half_next,
        v_node,
        eval_point: x_gc,
        resonance: node.resonance,
        fp,
    })
}

/// `v^{n−1/2}` and `v^{n+1/2}` consistent with a given node velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfVelocities {
    pub minus: Vec3,
    pub plus: Vec3,
    pub eval_point: Vec3,
    pub fp: FixedPointInfo,
}

/// Staggered velocities around the node `(x, v)` at time `t`.
///
/// The evaluation point is computed directly from `v`, so no iteration is
/// needed. The standard Boris method uses the explicit filtered formula, or
/// `v ± h/2 E` when the field vanishes.
pub fn half_velocities(
    x: Vec3,
    v: Vec3,
    t: f64,
    model: &FieldModel,
    cfg: &MethodConfig,
    h: f64,
) -> Result<HalfVelocities> {
    let b_n = model.eval_b(x, t);
    let e_n = model.eval_e(x, t)?;
    if cfg.method == Method::StandardBoris && b_n.norm_sq() == 0.0 {
        let kick = e_n * (0.5 * h);
        return Ok(HalfVelocities {
            minus: v - kick,
            plus: v + kick,
            eval_point: x,
            fp: FixedPointInfo::default(),
        });
    }
    let kick = FilterFn::Psi.apply(h, b_n, e_n)? * (0.5 * h);
    let w = v + FilterFn::Upsilon.apply(h, b_n, e_n)? * h;

    let (minus, plus, p) = match cfg.method {
        Method::TwoPoint => {
            let x_gc = guiding_center(x, v, b_n)?;
            let b_gc = model.eval_b(x_gc, t);
            let u = FilterFn::Sinch.apply(h, b_n, w)?;
            let q = FilterFn::Phi1.apply(h, b_n, cross(b_n, u) * h)?;
            let q = FilterFn::Sinch2Half.apply(h, b_gc, q)? * 0.5;
            (u + q - kick, u - q + kick, x_gc)
        }
        method => {
            let x_bar = single_point(x, v, b_n, h, method.theta())?;
            let b_bar = model.eval_b(x_bar, t);
            let minus = FilterFn::Varphi1 { sign: -1 }.apply(h, b_bar, w)? - kick;
            let plus = FilterFn::Varphi1 { sign: 1 }.apply(h, b_bar, w)? + kick;
            (minus, plus, x_bar)
        }
    };
    Ok(HalfVelocities {
        minus,
        plus,
        eval_point: p,
        fp: FixedPointInfo::default(),
    })
}

/// `v^{1/2}` for the initial data `(x⁰, v⁰)`.
pub fn starting_velocity(x0: Vec3, v0: Vec3, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<Vec3> {
    Ok(half_velocities(x0, v0, 0.0, model, cfg, h)?.plus)
}

/// The node-to-node map `(xⁿ, vⁿ) ↦ (x^{n+1}, v^{n+1})` starting at time `t`.
///
/// Works for negative `h`, which runs the method backwards.
pub fn one_step_map(x: Vec3, v: Vec3, t: f64, model: &FieldModel, cfg: &MethodConfig, h: f64) -> Result<(Vec3, Vec3)> {
    let t1 = t + h;
    if cfg.method == Method::StandardBoris {
        let b = model.eval_b(x, t);
        let e = model.eval_e(x, t)?;
        let v_half = v + (cross(v, b) + e) * (0.5 * h);
        let x1 = x + v_half * h;
        let b1 = model.eval_b(x1, t1);
        let rhs = v_half + model.eval_e(x1, t1)? * (0.5 * h);
        let v1 = if b1.norm_sq() == 0.0 {
            rhs
        } else {
            FilterFn::CayleyInv.apply(h, b1, rhs)?
        };
        return Ok((x1, v1));
    }

    let plus = half_velocities(x, v, t, model, cfg, h)?.plus;
    let x1 = x + plus * h;
    let b1 = model.eval_b(x1, t1);
    let e1 = model.eval_e(x1, t1)?;
    let rhs = plus + FilterFn::Psi.apply(h, b1, e1)? * (0.5 * h);
    let upsilon_e = FilterFn::Upsilon.apply(h, b1, e1)? * h;
    let scale = position_scale(x1);

    let (v1, _, _) = if cfg.method == Method::TwoPoint {
        let phi1 = FilterFn::Phi1.coeffs(h, b1.norm())?;
        iterate(x1, scale, implicit_iters(cfg), cfg, |p| {
            let b_gc = model.eval_b(p, t1);
            let phi2 = FilterFn::Phi2.coeffs(h, b_gc.norm())?;
            let m = two_point_matrix(h, b1, &phi1, b_gc, &phi2)?;
            let s = solve3(&m, phi2.apply(b_gc, rhs))?;
            let v1 = phi1.apply(b1, s) - upsilon_e;
            Ok((v1, guiding_center(x1, v1, b1)?))
        })?
    } else {
        let theta = cfg.method.theta();
        iterate(x1, scale, implicit_iters(cfg), cfg, |p| {
            let b_bar = model.eval_b(p, t1);
            let v1 = FilterFn::Varphi1Inv { sign: -1 }.apply(h, b_bar, rhs)? - upsilon_e;
            Ok((v1, single_point(x1, v1, b1, h, theta)?))
        })?
    };
    Ok((x1, v1))
}
