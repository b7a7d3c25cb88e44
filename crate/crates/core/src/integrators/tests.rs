use super::*;
use crate::fields::{Preset, ResonanceGuard};
use crate::filters::FilterFn;
use crate::geom3::cross;
use nalgebra::{Matrix3, Matrix6, Vector3};
use proptest::prelude::*;
use std::sync::Arc;

const X0: Vec3 = Vec3::new(1.0 / 3.0, 1.0 / 4.0, 1.0 / 2.0);
const V0: Vec3 = Vec3::new(2.0 / 5.0, 2.0 / 3.0, 1.0);

const FILTERED: [Method; 3] = [Method::FilteredExplicit, Method::FilteredImplicit, Method::TwoPoint];

fn rel(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Exact solution of `ẍ = ẋ × B + E` for constant `B`, `E`.
fn exact_flow(x0: Vec3, v0: Vec3, b: Vec3, e: Vec3, t: f64) -> (Vec3, Vec3) {
    let bn = b.norm();
    let u = b / bn;
    let e_par = u * u.dot(e);
    let drift = cross(e, b) / (bn * bn);
    let v_par = u * u.dot(v0);
    let w0 = v0 - v_par - drift;
    let uw = cross(u, w0);
    let (s, c) = (bn * t).sin_cos();
    let v = v_par + e_par * t + drift + w0 * c - uw * s;
    let x = x0 + (v_par + drift) * t + e_par * (0.5 * t * t) + w0 * (s / bn) - uw * ((1.0 - c) / bn);
    (x, v)
}

fn constant_model(b: Vec3, e: Vec3) -> FieldModel {
    FieldModel::new_unchecked(
        "test-constant",
        1.0,
        Arc::new(move |_| b),
        Arc::new(|_, _| Vec3::ZERO),
        Arc::new(move |_, _| Ok(e)),
    )
}

/// Smooth inhomogeneous field with strong part of size `1/ε`.
fn smooth_model(eps: f64, a: f64, c: f64) -> FieldModel {
    FieldModel::new(
        "test-smooth",
        eps,
        Arc::new(move |y: Vec3| Vec3::new(a * y.y, c * y.x.sin(), 1.0 + 0.5 * y.z * y.z)),
        Arc::new(move |x: Vec3, t| Vec3::new(0.3 * x.z, -0.2 * t, 0.1 * x.x)),
        Arc::new(move |x: Vec3, t| Ok(Vec3::new(0.2 * x.y + t, 0.5, -0.3 * x.z * x.x))),
    )
    .unwrap()
}

fn standard_model(eps: f64) -> FieldModel {
    Preset::Standard.build(eps).unwrap()
}

#[test]
fn method_labels_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.label().parse::<Method>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, format!("\"{}\"", m.label()));
    }
    assert!(matches!("rk4".parse::<Method>(), Err(Error::InvalidInput(_))));
}

#[test]
fn config_validation() {
    assert!(MethodConfig::new(Method::FilteredImplicit).validate().is_ok());
    assert!(MethodConfig::new(Method::TwoPoint).with_fp_iters(0).validate().is_err());
    assert!(MethodConfig::new(Method::FilteredExplicit)
        .with_fp_iters(0)
        .validate()
        .is_ok());
    let mut cfg = MethodConfig::new(Method::StandardBoris);
    cfg.fp_tol = 0.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn boris_rotation_preserves_speed() {
    let model = constant_model(Vec3::new(0.3, -2.0, 5.0), Vec3::ZERO);
    let cfg = MethodConfig::new(Method::StandardBoris);
    let mut s = ParticleState::staggered(0, 0.7, X0, V0);
    for _ in 0..50 {
        let out = standard_boris_step(&s, &model, &cfg, 0.7).unwrap();
        assert!((out.v_half_next.norm() - s.v_half.norm()).abs() <= 1e-15 * V0.norm());
        s = out.next_state(&s, 0.7);
    }
}

#[test]
fn boris_without_field_is_leapfrog() {
    let e = Vec3::new(0.5, -1.0, 2.0);
    let model = FieldModel::new_unchecked(
        "no-field",
        1.0,
        Arc::new(|_| Vec3::ZERO),
        Arc::new(|_, _| Vec3::ZERO),
        Arc::new(move |_, _| Ok(e)),
    );
    let cfg = MethodConfig::new(Method::StandardBoris);
    let h = 0.1;
    let s = ParticleState::staggered(3, h, X0, V0);
    let out = standard_boris_step(&s, &model, &cfg, h).unwrap();
    let expected = X0 + V0 * h + e * (h * h);
    assert!(rel(out.x_next, expected) < 1e-15);
    let traj = run_trajectory(X0, V0, &model, &cfg, h, 1.0).unwrap();
    assert_eq!(traj.states.len(), 11);
}

#[test]
fn boris_matches_two_step_form() {
    let eps = 1.0 / 16.0;
    let h = eps;
    let model = standard_model(eps);
    let traj = run_trajectory(X0, V0, &model, &MethodConfig::new(Method::StandardBoris), h, 1.0).unwrap();
    // (x⁺ − 2x + x⁻)/h² = (x⁺ − x⁻)/(2h) × B(x) + E(x), solved for x⁺.
    let mut prev = traj.states[0].x;
    let mut cur = traj.states[1].x;
    for n in 1..traj.states.len() - 1 {
        let b = model.eval_b(cur, n as f64 * h);
        let e = model.eval_e(cur, n as f64 * h).unwrap();
        let bm = Matrix3::new(0.0, -b.z, b.y, b.z, 0.0, -b.x, -b.y, b.x, 0.0);
        // x⁺ × B = −B̂ x⁺
        let a = Matrix3::identity() / (h * h) + bm / (2.0 * h);
        let p = Vector3::new(prev.x, prev.y, prev.z);
        let c = Vector3::new(cur.x, cur.y, cur.z);
        let rhs = (2.0 * c - p) / (h * h) + bm * p / (2.0 * h) + Vector3::new(e.x, e.y, e.z);
        let next = a.lu().solve(&rhs).unwrap();
        let next = Vec3::new(next.x, next.y, next.z);
        assert!((next - traj.states[n + 1].x).norm() <= 1e-12 * next.norm(), "step {n}");
        prev = cur;
        cur = next;
    }
}

#[test]
fn filtered_methods_exact_for_constant_fields() {
    let b = Vec3::new(0.6, -0.8, 2.0);
    let h = 1.0 / b.norm();
    for e in [Vec3::ZERO, Vec3::new(0.3, 0.4, -0.25)] {
        let model = constant_model(b, e);
        for method in FILTERED {
            let traj = run_trajectory(X0, V0, &model, &MethodConfig::new(method), h, 100.0 * h).unwrap();
            for s in traj.states.iter().step_by(25) {
                let (x, v) = exact_flow(X0, V0, b, e, s.t);
                assert!(rel(s.x, x) < 1e-11, "{method} x at {} : {:e}", s.n, rel(s.x, x));
                assert!(rel(s.v_node, v) < 1e-11, "{method} v at {}", s.n);
            }
        }
    }
}

#[test]
fn two_point_equals_single_point_for_constant_field() {
    let model = constant_model(Vec3::new(1.0, 2.0, -3.0), Vec3::new(0.1, 0.0, 0.7));
    let h = 0.4;
    let a = run_trajectory(X0, V0, &model, &MethodConfig::new(Method::FilteredExplicit), h, 40.0).unwrap();
    let b = run_trajectory(X0, V0, &model, &MethodConfig::new(Method::TwoPoint), h, 40.0).unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert!(rel(sb.x, sa.x) < 1e-13);
        assert!(rel(sb.v_node, sa.v_node) < 1e-13);
    }
}

#[test]
fn single_point_methods_preserve_speed_without_electric_field() {
    let eps = 1.0 / 64.0;
    let model = standard_model(eps).without_electric();
    for method in [Method::FilteredExplicit, Method::FilteredImplicit] {
        let cfg = MethodConfig::new(method);
        let mut s = ParticleState::staggered(1, 4.0 * eps, X0, V0);
        for _ in 0..200 {
            let out = step(&s, &model, &cfg, 4.0 * eps).unwrap();
            let drift = (out.v_half_next.norm() - s.v_half.norm()).abs() / s.v_half.norm();
            assert!(drift < 1e-14, "{method}: {drift:e}");
            s = out.next_state(&s, 4.0 * eps);
        }
    }
}

#[test]
fn two_point_speed_drift_is_order_h_eps() {
    let cfg = MethodConfig::new(Method::TwoPoint);
    for eps in [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0] {
        let model = standard_model(eps).without_electric();
        for h in [eps, 4.0 * eps] {
            let mut s = ParticleState::staggered(1, h, X0, V0);
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let out = step(&s, &model, &cfg, h).unwrap();
                worst = worst.max((out.v_half_next.norm() - s.v_half.norm()).abs());
                s = out.next_state(&s, h);
            }
            assert!(worst > 0.0);
            assert!(worst < 10.0 * h * eps, "eps {eps} h {h}: {worst:e}");
        }
    }
}

#[test]
fn node_velocity_limits() {
    let b = Vec3::new(0.0, 3.0, 4.0);
    let (xp, xn) = (Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.5, 1.0, 3.2));
    let tiny = 1e-9;
    let v = node_velocity(xp, xn, b, b, Vec3::new(1.0, 1.0, 1.0), tiny).unwrap();
    let cd = (xn - xp) / (2.0 * tiny);
    assert!(rel(v, cd) < 1e-12);
    // E ∥ B: the Υ correction vanishes.
    let h = 0.3;
    let with_e = node_velocity(xp, xn, b, b, b * 0.7, h).unwrap();
    let without = node_velocity(xp, xn, b, b, Vec3::ZERO, h).unwrap();
    assert!(rel(with_e, without) < 1e-15);
}

#[test]
fn node_velocity_recovers_exact_rotation() {
    let b = Vec3::new(0.2, -0.5, 1.5);
    let model = constant_model(b, Vec3::ZERO);
    let h = 1.3;
    let (xp, _) = exact_flow(X0, V0, b, Vec3::ZERO, -h);
    let (xn, _) = exact_flow(X0, V0, b, Vec3::ZERO, h);
    let v = node_velocity(xp, xn, model.eval_b(X0, 0.0), b, Vec3::ZERO, h).unwrap();
    assert!(rel(v, V0) < 1e-13);
}

#[test]
fn starting_velocity_examples() {
    let b = Vec3::new(0.0, 0.0, 2.0);
    let e = Vec3::new(0.0, 0.0, 0.8);
    let model = constant_model(b, Vec3::ZERO);
    for method in Method::ALL {
        let cfg = MethodConfig::new(method);
        let v = starting_velocity(X0, V0, &model, &cfg, 1e-10).unwrap();
        assert!(rel(v, V0) < 1e-9);
        // average of the exact velocity over [0, h]
        let h = 0.9;
        let (x1, _) = exact_flow(X0, V0, b, Vec3::ZERO, h);
        let v = starting_velocity(X0, V0, &model, &cfg, h).unwrap();
        assert!(rel(v, (x1 - X0) / h) < 1e-14, "{method}");
    }
    let model = constant_model(b, e);
    let v0 = Vec3::new(0.0, 0.0, -1.2);
    for method in Method::ALL {
        let v = starting_velocity(X0, v0, &model, &MethodConfig::new(method), 0.6).unwrap();
        assert!(rel(v, v0 + e * 0.3) < 1e-15, "{method}");
    }
}

#[test]
fn one_step_map_exact_for_constant_fields_and_identity_at_zero() {
    let b = Vec3::new(-1.0, 0.5, 2.0);
    let e = Vec3::new(0.2, 0.1, -0.4);
    let model = constant_model(b, e);
    let h = 0.8;
    for method in FILTERED {
        let cfg = MethodConfig::new(method);
        let (x1, v1) = one_step_map(X0, V0, 0.0, &model, &cfg, h).unwrap();
        let (xe, ve) = exact_flow(X0, V0, b, e, h);
        assert!(rel(x1, xe) < 1e-13, "{method}");
        assert!(rel(v1, ve) < 1e-13, "{method}");
    }
    for method in Method::ALL {
        let cfg = MethodConfig::new(method);
        let (x1, v1) = one_step_map(X0, V0, 0.0, &model, &cfg, 0.0).unwrap();
        assert_eq!((x1, v1), (X0, V0));
    }
}

#[test]
fn one_step_map_agrees_with_staggered_form() {
    let eps = 1.0 / 32.0;
    let model = standard_model(eps);
    let h = 2.0 * eps;
    for method in FILTERED {
        let cfg = MethodConfig::converged(method);
        let traj = run_trajectory(X0, V0, &model, &cfg, h, 20.0 * h).unwrap();
        let (mut x, mut v) = (X0, V0);
        for s in &traj.states[1..] {
            (x, v) = one_step_map(x, v, (s.n - 1) as f64 * h, &model, &cfg, h).unwrap();
            assert!(rel(x, s.x) < 1e-12, "{method} x at {}", s.n);
            assert!(
                rel(v, s.v_node) < 1e-12,
                "{method} v at {}: {:e}",
                s.n,
                rel(v, s.v_node)
            );
        }
    }
}

/// Two-step residual for the single-point methods:
/// `(x⁺ − 2x + x⁻)/h² + tanc(h|B̄|/2) B̄ × (x⁺ − x⁻)/(2h) − Ψ(hB̂)E`.
#[test]
fn two_step_forms_hold() {
    let eps = 1.0 / 64.0;
    let model = standard_model(eps);
    let h = 3.0 * eps;
    for method in FILTERED {
        let cfg = MethodConfig::new(method);
        let first = half_velocities(X0, V0, 0.0, &model, &cfg, h).unwrap();
        let mut s = ParticleState::staggered(1, h, X0 + first.plus * h, first.plus);
        let mut prev = X0;
        for _ in 0..30 {
            let out = step(&s, &model, &cfg, h).unwrap();
            let (xm, x, xp) = (prev, s.x, out.x_next);
            let lhs = (xp - x * 2.0 + xm) / (h * h);
            let cd = (xp - xm) / (2.0 * h);
            let b = model.eval_b(x, s.t);
            let psi_e = FilterFn::Psi.apply(h, b, model.eval_e(x, s.t).unwrap()).unwrap();
            let force = if method == Method::TwoPoint {
                let b_gc = model.eval_b(out.eval_point, s.t);
                let rot = cross(FilterFn::Phi1.apply(h, b, cd).unwrap(), b);
                FilterFn::Sinch2Half.apply(h, b_gc, rot).unwrap()
            } else {
                let b_bar = model.eval_b(out.eval_point, s.t);
                let tanc = crate::filters::tanc(0.5 * h * b_bar.norm()).unwrap();
                -cross(b_bar, cd) * tanc
            };
            let residual = (lhs - force - psi_e).norm();
            let bound = 1e-11 * x.max_abs().max(xp.max_abs()).max(1.0) / (h * h);
            assert!(residual <= bound, "{method}: {residual:e} > {bound:e}");
            prev = s.x;
            s = out.next_state(&s, h);
        }
    }
}

#[test]
fn trajectory_counts_times_and_determinism() {
    let eps = 1.0 / 16.0;
    let model = standard_model(eps);
    let cfg = MethodConfig::new(Method::FilteredImplicit);
    let one = run_trajectory(X0, V0, &model, &cfg, 0.25, 0.25).unwrap();
    assert_eq!(one.n_steps, 1);
    assert_eq!(one.states.len(), 2);

    let a = run_trajectory(X0, V0, &model, &cfg, eps, 1.0).unwrap();
    assert_eq!(a.n_steps, 16);
    assert_eq!(a.states.len(), 17);
    assert_eq!(a.states[0].v_node, V0);
    for (i, s) in a.states.iter().enumerate() {
        assert_eq!(s.n, i as u64);
        assert_eq!(s.t, i as f64 * eps);
    }
    let b = run_trajectory(X0, V0, &model, &cfg, eps, 1.0).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    assert!(matches!(
        run_trajectory(X0, V0, &model, &cfg, 0.3, 1.0),
        Err(Error::InvalidInput(_))
    ));
    assert!(run_trajectory(X0, V0, &model, &cfg, -0.1, 1.0).is_err());
}

#[test]
fn guard_policy_reject_and_flag() {
    let eps = 1.0 / 64.0;
    let model = standard_model(eps);
    // h|B| ≈ 2π violates the k = 1 bound.
    let h = 2.0 * std::f64::consts::PI / (1.0 / eps + 0.5);
    let t_end = 8.0 * h;
    let mut cfg = MethodConfig::new(Method::TwoPoint).with_guard(ResonanceGuard::new(0.2, 1).unwrap());
    let traj = run_trajectory(X0, V0, &model, &cfg, h, t_end).unwrap();
    assert!(traj.resonance().is_flagged());
    cfg.guard_policy = GuardPolicy::Reject;
    let err = run_trajectory(X0, V0, &model, &cfg, h, t_end).unwrap_err();
    assert!(matches!(err, Error::Step { step: 0, .. }));
    assert!(matches!(err.root(), Error::NearResonant { k: 1, .. }));
}

#[test]
fn filtered_methods_reject_zero_field() {
    let model = constant_model(Vec3::ZERO, Vec3::E1);
    for method in FILTERED {
        let err = run_trajectory(X0, V0, &model, &MethodConfig::new(method), 0.1, 1.0).unwrap_err();
        assert!(matches!(err.root(), Error::ZeroField), "{method}");
    }
}

#[test]
fn strict_fixed_point_reports_no_convergence() {
    let model = standard_model(1.0 / 16.0);
    let mut cfg = MethodConfig::new(Method::FilteredImplicit);
    cfg.fp_max_iters = 1;
    cfg.fp_strict = true;
    let err = run_trajectory(X0, V0, &model, &cfg, 0.25, 1.0).unwrap_err();
    assert!(matches!(err.root(), Error::NoConvergence { iters: 1, .. }));
    let lax = run_trajectory(X0, V0, &model, &MethodConfig::new(Method::FilteredImplicit), 0.25, 1.0).unwrap();
    assert!(lax.max_fp_residual() > 0.0);
    assert_eq!(lax.max_fp_iters(), 2);
}

#[test]
fn zero_iterations_turn_imp_a_into_exp_a() {
    let model = standard_model(1.0 / 64.0);
    let h = 4.0 / 64.0;
    let exp = run_trajectory(X0, V0, &model, &MethodConfig::new(Method::FilteredExplicit), h, 1.0).unwrap();
    let imp0 = MethodConfig::new(Method::FilteredImplicit).with_fp_iters(0);
    let imp0 = run_trajectory(X0, V0, &model, &imp0, h, 1.0).unwrap();
    // Only the start differs (the start uses x̄ computed from v⁰).
    for (a, b) in exp.states.iter().zip(&imp0.states).skip(1) {
        assert!((a.x - b.x).norm() < 1e-2);
    }
    assert_eq!(imp0.max_fp_iters(), 0);
}

#[test]
fn fixed_point_contracts_like_eps_squared() {
    // The update shrinks by K(h/ε)·ε² per iteration with K bounded as ε → 0.
    let cfg = MethodConfig::new(Method::FilteredImplicit);
    for ratio in [1.0, 4.0, 16.0] {
        let mut ks = Vec::new();
        for j in 6..=11 {
            let eps = 0.5f64.powi(j);
            let model = standard_model(eps);
            let h = ratio * eps;
            let first = half_velocities(X0, V0, 0.0, &model, &cfg, h).unwrap();
            let mut s = ParticleState::staggered(1, h, X0 + first.plus * h, first.plus);
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let out = step(&s, &model, &cfg, h).unwrap();
                let c = out.fp.contraction.unwrap();
                assert!(c < 0.5, "ratio {ratio} eps {eps}: {c}");
                worst = worst.max(c);
                s = out.next_state(&s, h);
            }
            ks.push(worst / (eps * eps));
        }
        let finest = *ks.last().unwrap();
        assert!(ks.iter().all(|&k| k <= 4.0 * finest), "ratio {ratio}: {ks:?}");
    }
}

fn jacobian_det(model: &FieldModel, cfg: &MethodConfig, x: Vec3, v: Vec3, h: f64) -> f64 {
    let delta = 1e-6;
    let mut jac = Matrix6::zeros();
    for k in 0..6 {
        let mut plus = [x.x, x.y, x.z, v.x, v.y, v.z];
        let mut minus = plus;
        plus[k] += delta;
        minus[k] -= delta;
        let eval = |s: [f64; 6]| {
            let (x1, v1) = one_step_map(
                Vec3::new(s[0], s[1], s[2]),
                Vec3::new(s[3], s[4], s[5]),
                0.0,
                model,
                cfg,
                h,
            )
            .unwrap();
            [x1.x, x1.y, x1.z, v1.x, v1.y, v1.z]
        };
        let (fp, fm) = (eval(plus), eval(minus));
        for i in 0..6 {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * delta);
        }
    }
    jac.determinant()
}

#[test]
fn volume_preserved_for_constant_field() {
    let model = constant_model(Vec3::new(0.4, -1.1, 2.5), Vec3::new(0.3, 0.2, -0.1));
    for method in FILTERED {
        let det = jacobian_det(&model, &MethodConfig::new(method), X0, V0, 0.9);
        assert!((det - 1.0).abs() < 1e-6, "{method}: {det}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_then_backward_is_identity(
        a in -1.0..1.0f64,
        c in -1.0..1.0f64,
        hb in 0.1..3.0f64,
        eps_exp in 3..7i32,
        vx in -1.0..1.0f64,
        vz in -1.0..1.0f64,
        which in 0..4usize,
    ) {
        let eps = 0.5f64.powi(eps_exp);
        let model = smooth_model(eps, a, c);
        let x = Vec3::new(0.2, -0.4, 0.3);
        let v = Vec3::new(vx, 0.5, vz);
        let h = hb / model.eval_b(x, 0.0).norm();
        let cfg = MethodConfig::converged(Method::ALL[which]);
        prop_assume!(!crate::fields::check_resonance(&cfg.guard, h, model.eval_b(x, 0.0).norm()).is_flagged());
        let (x1, v1) = one_step_map(x, v, 0.0, &model, &cfg, h).unwrap();
        let (x2, v2) = one_step_map(x1, v1, h, &model, &cfg, -h).unwrap();
        prop_assert!((x2 - x).norm() <= 1e-10 * x.norm(), "x {:e}", (x2 - x).norm());
        prop_assert!((v2 - v).norm() <= 1e-10 * v.norm(), "v {:e}", (v2 - v).norm());
    }
}
