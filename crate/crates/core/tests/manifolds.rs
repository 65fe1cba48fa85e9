use std::sync::OnceLock;

use hopfzero::hp::{dec, pi};
use hopfzero::manifolds::*;
use hopfzero::melnikov::{r10_graph, upsilon0_gamma_series};
use hopfzero::model::*;
use hopfzero::ScalarConfig;
use rug::Float;

const P: u32 = 128;

fn f(x: f64) -> Float {
    dec(P, &format!("{x}"))
}

fn zero_system(delta: f64) -> (ModelSpec, PerturbationSeries, Params) {
    let (spec, _) = test_system_c();
    let params = Params::new(&spec, f(delta), Float::new(P)).unwrap();
    (spec, PerturbationSeries::new(3), params)
}

fn system_c(delta: f64) -> (ModelSpec, PerturbationSeries, Params) {
    let (spec, series) = test_system_c();
    let params = Params::new(&spec, f(delta), Float::new(P)).unwrap();
    (spec, series, params)
}

fn cartesian(c: &StateCylindric) -> StateCartesian {
    c.to_cartesian()
}

/// TestSystemC at delta = 0.2, shared by the tests that need a full measurement.
fn sample_c() -> &'static (SplittingSample, ManifoldConfig) {
    static S: OnceLock<(SplittingSample, ManifoldConfig)> = OnceLock::new();
    S.get_or_init(|| {
        let (spec, series, params) = system_c(0.2);
        let cfg = ManifoldConfig::new(P).unwrap();
        (splitting(&spec, &series, &params, &Float::new(P), 16, &cfg).unwrap(), cfg)
    })
}

#[test]
fn closed_form_orbits() {
    let (spec, zero, params) = zero_system(0.2);
    let cfg = IntegratorConfig::new(P, 1e-32).unwrap();
    // on the axis z' = z^2 - 1
    let s0 = StateCartesian { x: f(0.0), y: f(0.0), z: f(0.0) };
    let out = integrate(&spec, &zero, &params, &s0, &f(1.5), &cfg).unwrap();
    let expect = -Float::with_val(P, f(1.5).tanh_ref());
    assert!(Float::with_val(P, &out.trajectory.state[2] - &expect).abs().to_f64() < 1e-30);
    // along the connection z = tanh(d t)
    let h0 = heteroclinic(&spec, &params, &f(0.0), &f(0.3));
    let out = integrate(&spec, &zero, &params, &cartesian(&h0), &f(1.5), &cfg).unwrap();
    let h1 = cartesian(&heteroclinic(&spec, &params, &f(1.5), &f(0.3)));
    for (a, b) in out.trajectory.state.iter().zip(h1.to_vec3().iter()) {
        assert!(Float::with_val(P, a - b).abs().to_f64() < 1e-29);
    }
    assert!(out.global_error < 1e-29);
}

#[test]
fn forward_then_backward_returns() {
    let (spec, series, params) = system_c(0.2);
    let tol = 1e-30;
    let cfg = IntegratorConfig::new(P, tol).unwrap();
    let s0 = StateCartesian { x: f(0.4), y: f(-0.3), z: f(0.1) };
    let fwd = integrate(&spec, &series, &params, &s0, &f(2.0), &cfg).unwrap();
    let mid = StateCartesian::from_vec3(fwd.trajectory.state.clone());
    let back = integrate(&spec, &series, &params, &mid, &f(-2.0), &cfg).unwrap();
    for (a, b) in back.trajectory.state.iter().zip(s0.to_vec3().iter()) {
        assert!(Float::with_val(P, a - b).abs().to_f64() < 10.0 * tol);
    }
}

#[test]
fn perturbed_orbit_shadows_the_connection() {
    let delta = 0.2;
    let (spec, series, params) = system_c(delta);
    let cfg = IntegratorConfig::new(P, 1e-30).unwrap();
    let s0 = cartesian(&heteroclinic(&spec, &params, &f(-1.0), &f(0.0)));
    let out = integrate(&spec, &series, &params, &s0, &f(2.0), &cfg).unwrap();
    let mut worst = 0.0f64;
    for (t, x) in &out.trajectory.checkpoints {
        let u = Float::with_val(P, t - 1u32);
        let h = cartesian(&heteroclinic(&spec, &params, &u, &f(0.0))).to_vec3();
        let dev = hopfzero::linalg::norm(&hopfzero::linalg::sub(x, &h)).to_f64();
        worst = worst.max(dev);
    }
    assert!(worst > 1e-6 && worst < 5.0 * delta.powi(3), "{worst}");
}

#[test]
fn taylor_and_extrapolation_agree_on_a_crossing() {
    let (spec, series, params) = system_c(0.25);
    let vf = VectorField::compile(&spec, &series, &params, P).unwrap();
    let lm = LocalManifold::new(&vf, Branch::Unstable, SeedOrder::Quadratic).unwrap();
    let seed = lm.seed(&f(0.7), &f(0.001));
    let mut cfg = IntegratorConfig::new(P, 1e-28).unwrap();
    let a = integrate_to_section(lm.field(), &seed, &f(0.0), Crossing::Upward, 60.0, &cfg).unwrap();
    cfg.method = Method::BulirschStoer;
    let b = integrate_to_section(lm.field(), &seed, &f(0.0), Crossing::Upward, 60.0, &cfg).unwrap();
    for i in 0..3 {
        let gap = Float::with_val(P, &a.state[i] - &b.state[i]).abs().to_f64();
        assert!(gap < 1e-24, "{i} {gap} {} {}", a.state[i], b.state[i]);
    }
    assert!(Float::with_val(P, &a.t - &b.t).abs().to_f64() < 1e-24);
}

#[test]
fn seeds_sit_at_the_seed_radius() {
    let (spec, series, params) = system_c(0.2);
    let rho = f(0.001);
    let vf = VectorField::compile(&spec, &series, &params, P).unwrap();
    let cps = critical_points_of(&vf, 1e-35).unwrap();
    for (side, cp) in [(Branch::Unstable, &cps.minus), (Branch::Stable, &cps.plus)] {
        let seeds = seed_manifold(&spec, &series, &params, side, &rho, 12, SeedOrder::Quadratic, P).unwrap();
        for s in seeds {
            let d = hopfzero::linalg::norm(&hopfzero::linalg::sub(&s.to_vec3(), &cp.position));
            assert!(Float::with_val(P, d - &rho).abs().to_f64() < 1e-33);
        }
    }
}

#[test]
fn seeding_error_follows_the_predicted_order() {
    let (spec, series, params) = system_c(0.25);
    let vf = VectorField::compile(&spec, &series, &params, P).unwrap();
    let targets = [f(0.4)];
    let diffs = |order: SeedOrder, radii: &[f64]| {
        let mut cfg = ManifoldConfig::new(P).unwrap();
        cfg.seed_order = order;
        cfg.theta_tol = 1e-28;
        let r: Vec<Float> = radii
            .iter()
            .map(|&rho| {
                cfg.rho = rho;
                section_radius(&spec, &series, &params, Branch::Unstable, &f(0.0), &targets, &cfg).unwrap()[0]
                    .r_at_section
                    .clone()
            })
            .collect();
        r.windows(2).map(|w| Float::with_val(P, &w[0] - &w[1]).to_f64().abs()).collect::<Vec<f64>>()
    };
    // linear seeds: clean power law, one halving at a time
    let k = LocalManifold::new(&vf, Branch::Unstable, SeedOrder::Linear).unwrap().seeding_exponent();
    let d = diffs(SeedOrder::Linear, &[0.004, 0.002, 0.001]);
    let ratio = d[0] / d[1];
    assert!(ratio > 2f64.powf(k) / 2.0 && ratio < 2f64.powf(k) * 2.0, "linear ratio {ratio}, exponent {k}");
    // quadratic seeds: the coefficient oscillates with log(rho); check the mean order over four halvings
    let k = LocalManifold::new(&vf, Branch::Unstable, SeedOrder::Quadratic).unwrap().seeding_exponent();
    let d = diffs(SeedOrder::Quadratic, &[0.008, 0.004, 0.002, 0.001, 0.0005, 0.00025]);
    let mean = (d[0] / d[4]).log2() / 4.0;
    assert!((mean - k).abs() < 1.5, "quadratic mean order {mean}, exponent {k}");
    assert!(d[4] < 1e-3 * d[0]);
}

#[test]
fn unperturbed_sections_away_from_the_equator() {
    let (spec, zero, params) = zero_system(0.2);
    let mut cfg = ManifoldConfig::new(P).unwrap();
    cfg.rho = 1e-4;
    let u = f(0.5);
    let r0 = heteroclinic(&spec, &params, &u, &f(0.0)).r;
    let targets = [f(0.0), f(2.0)];
    for side in [Branch::Unstable, Branch::Stable] {
        for c in section_radius(&spec, &zero, &params, side, &u, &targets, &cfg).unwrap() {
            let gap = Float::with_val(P, &c.r_at_section - &r0).abs().to_f64();
            assert!(gap < 1e-22, "{side:?} {gap} {}", c.r_at_section);
            assert!(c.refinement_residual <= 2f64.powf(-(P as f64) / 2.0));
        }
    }
}

#[test]
fn unstable_graph_follows_first_order_correction() {
    let delta = 0.2;
    let (spec, series, params) = system_c(delta);
    let cfg = ManifoldConfig::new(P).unwrap();
    let scfg = ScalarConfig::with_precision(P).unwrap();
    let u = f(0.0);
    let r0 = heteroclinic(&spec, &params, &u, &f(0.0)).r;
    let targets: Vec<Float> = (0..4).map(|j| f(1.5 * j as f64)).collect();
    let cs = section_radius(&spec, &series, &params, Branch::Unstable, &u, &targets, &cfg).unwrap();
    let bound = delta.powi(6) + delta.powi(4);
    for c in cs {
        let r10 = r10_graph(&spec, &series, &params, Branch::Unstable, &u, &c.theta_at_section, &scfg).unwrap();
        let r1 = Float::with_val(P, &c.r_at_section - &r0);
        let gap = Float::with_val(P, &r1 - &r10.value).to_f64().abs();
        assert!(gap < bound, "gap {gap} r1 {} r10 {}", r1.to_f64(), r10.value.to_f64());
        assert!(r1.to_f64().abs() > 2.0 * gap);
    }
}

#[test]
fn zero_series_gives_zero_splitting() {
    let (spec, zero, params) = zero_system(0.25);
    let cfg = ManifoldConfig::new(P).unwrap();
    let s = splitting(&spec, &zero, &params, &f(0.0), 8, &cfg).unwrap();
    let floor = s.error_budget.total.max(2f64.powi(-(P as i32) + 24));
    for m in &s.delta_modes {
        assert!(m.abs_f64() <= floor);
    }
    assert!(!s.trusted);
    assert!(sharp_bound_check(&spec, &s, 0.0, 2.0, 1e3));
}

#[test]
fn conservative_splitting_matches_the_melnikov_coefficient() {
    let (s, _) = sample_c();
    let (spec, series, params) = system_c(0.2);
    assert!(s.trusted);
    assert!(s.delta_modes[0].abs_f64() <= s.error_budget.total);
    let ups = upsilon0_gamma_series(&spec, &series, &params, 1, &ScalarConfig::with_precision(P).unwrap()).unwrap();
    let ratio = s.delta_modes[1].abs_f64() / ups.value.abs_f64();
    assert!((ratio - 1.0).abs() < 5.0 * 0.2f64.powi(2), "{ratio}");
    let phase = (&s.delta_modes[1] / &ups.value).arg().to_f64();
    assert!(phase.abs() < 5.0 * 0.2f64.powi(2));
    // reality symmetry
    let m = s.mode(-1).unwrap();
    assert_eq!(m, s.delta_modes[1].conj());
}

#[test]
fn distance_relates_to_radius_gap() {
    let (s, _) = sample_c();
    let (spec, _, params) = system_c(0.2);
    let k = Float::with_val(P, f(spec.b.to_f64() / (spec.d.to_f64() + 1.0)).sqrt_ref());
    let r0 = heteroclinic(&spec, &params, &s.u_section, &f(0.0)).r;
    let scale = s.max_abs_delta();
    for j in 0..s.n_theta {
        let (ru, rs) = (&s.r_unstable[j], &s.r_stable[j]);
        // exact: D = 2 Delta / (sqrt(2 r^u) + sqrt(2 r^s))
        let den = Float::with_val(P, ru * 2u32).sqrt() + Float::with_val(P, rs * 2u32).sqrt();
        let exact = Float::with_val(P, &s.delta_values[j] * 2u32) / den;
        assert!(Float::with_val(P, &exact - &s.d_values[j]).abs().to_f64() < 1e-30);
        // leading order, with relative error of the size of r^u - R0
        let lead = Float::with_val(P, &k * &s.delta_values[j]).to_f64();
        let drift = Float::with_val(P, ru - &r0).to_f64().abs() / r0.to_f64();
        assert!((lead - s.d_values[j].to_f64()).abs() <= scale * drift + scale * scale);
    }
}

#[test]
fn sharp_bound_on_the_measured_sample() {
    let (s, _) = sample_c();
    let (spec, series, params) = system_c(0.2);
    let u0 = upsilon0_gamma_series(&spec, &series, &params, 0, &ScalarConfig::with_precision(P).unwrap()).unwrap();
    assert!(sharp_bound_check(&spec, s, u0.value.abs_f64(), 2.0, 1e3));
    let mut inflated = s.clone();
    for v in inflated.delta_values.iter_mut() {
        *v *= 1_000_000u32;
    }
    assert!(!sharp_bound_check(&spec, &inflated, u0.value.abs_f64(), 2.0, 1e3));
}

#[test]
fn error_budget_covers_replications() {
    let (spec, series, params) = system_c(0.25);
    let cfg = ManifoldConfig::new(P).unwrap();
    let base = splitting(&spec, &series, &params, &f(0.0), 8, &cfg).unwrap();
    assert!(base.trusted);
    let mut halved_steps = cfg.clone();
    halved_steps.integrator.step_scale = 0.5;
    let mut halved_rho = cfg.clone();
    halved_rho.rho /= 2.0;
    for c in [halved_steps, halved_rho] {
        let rep = splitting(&spec, &series, &params, &f(0.0), 8, &c).unwrap();
        for (a, b) in base.delta_modes.iter().zip(&rep.delta_modes) {
            assert!((a - b).abs_f64() < base.error_budget.total);
        }
    }
}

#[test]
fn conservative_flow_preserves_volume() {
    let (spec, series, params) = system_c(0.2);
    let cfg = IntegratorConfig::new(P, 1e-32).unwrap();
    let x0 = [f(0.3), f(-0.2), f(0.1)];
    let h = f(1e-12);
    let t = f(1.5);
    let flow = |x: &[Float; 3]| {
        let s = StateCartesian::from_vec3(x.clone());
        integrate(&spec, &series, &params, &s, &t, &cfg).unwrap().trajectory.state
    };
    let cols: Vec<[Float; 3]> = (0..3)
        .map(|j| {
            let mut a = x0.clone();
            let mut b = x0.clone();
            a[j] += &h;
            b[j] -= &h;
            let (fa, fb) = (flow(&a), flow(&b));
            [0, 1, 2].map(|i| Float::with_val(P, &fa[i] - &fb[i]) / Float::with_val(P, &h * 2u32))
        })
        .collect();
    let m = |i: usize, j: usize| cols[j][i].clone();
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    assert!((det.to_f64() - 1.0).abs() < 1e-12, "{det}");
    let _ = pi(P);
}
