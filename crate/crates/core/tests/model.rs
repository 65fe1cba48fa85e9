use hopfzero::hp::{dec, HPComplex};
use hopfzero::model::{
    eval_field_cartesian, eval_field_cylindric, forcing_f0, forcing_f0_fourier, heteroclinic, mode_coefficient,
    test_system_c, test_system_d, Component, Params, PerturbationSeries, StateCartesian, StateCylindric,
};
use proptest::prelude::*;
use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};

const P: u32 = 200;

fn f(x: f64) -> Float {
    dec(P, &format!("{x}"))
}

fn rk4_step(state: &StateCartesian, h: &Float, field: &dyn Fn(&StateCartesian) -> StateCartesian) -> StateCartesian {
    let add = |s: &StateCartesian, k: &StateCartesian, w: &Float| StateCartesian {
        x: Float::with_val(P, &s.x + Float::with_val(P, &k.x * w)),
        y: Float::with_val(P, &s.y + Float::with_val(P, &k.y * w)),
        z: Float::with_val(P, &s.z + Float::with_val(P, &k.z * w)),
    };
    let half = Float::with_val(P, h / 2u32);
    let k1 = field(state);
    let k2 = field(&add(state, &k1, &half));
    let k3 = field(&add(state, &k2, &half));
    let k4 = field(&add(state, &k3, h));
    let sixth = Float::with_val(P, h / 6u32);
    let third = Float::with_val(P, h / 3u32);
    let s = add(state, &k1, &sixth);
    let s = add(&s, &k2, &third);
    let s = add(&s, &k3, &third);
    add(&s, &k4, &sixth)
}

#[test]
fn cylindric_field_matches_differentiated_cartesian_flow() {
    let (spec, series) = test_system_c();
    let params = Params::new(&spec, dec(P, "0.1"), f(0.0)).unwrap();
    let pi4 = Float::with_val(P, Constant::Pi) / 4u32;
    let st = StateCylindric { r: f(1.0), theta: pi4, z: f(0.0) };
    let field = |s: &StateCartesian| eval_field_cartesian(&spec, &series, &params, s).unwrap();
    let h = f(1e-12);
    let mh = Float::with_val(P, -&h);
    let fwd = rk4_step(&st.to_cartesian(), &h, &field).to_cylindric();
    let bwd = rk4_step(&st.to_cartesian(), &mh, &field).to_cylindric();
    let two_h = Float::with_val(P, &h * 2u32);
    let fd = [
        Float::with_val(P, &fwd.r - &bwd.r) / &two_h,
        Float::with_val(P, &fwd.theta - &bwd.theta) / &two_h,
        Float::with_val(P, &fwd.z - &bwd.z) / &two_h,
    ];
    let v = eval_field_cylindric(&spec, &series, &params, &st).unwrap();
    for (a, b) in [(&v.r, &fd[0]), (&v.theta, &fd[1]), (&v.z, &fd[2])] {
        assert!(Float::with_val(P, a - b).abs().to_f64() < 1e-20, "{} vs {}", a.to_f64(), b.to_f64());
    }
}

#[test]
fn zero_series_gives_unperturbed_field() {
    let (spec, _) = test_system_d();
    let zero = PerturbationSeries::new(3);
    let params = Params::new(&spec, dec(P, "0.2"), dec(P, "0.004")).unwrap();
    let st = StateCylindric { r: f(0.3), theta: f(2.0), z: f(-0.4) };
    let v = eval_field_cylindric(&spec, &zero, &params, &st).unwrap();
    // (2 r (sigma - d z), -alpha/delta - c z, -1 + 2 b r + z^2)
    let r_dot = Float::with_val(P, dec(P, "0.004") + f(0.4)) * f(0.6);
    assert!(Float::with_val(P, &v.r - &r_dot).abs().to_f64() < 1e-50);
    assert!(Float::with_val(P, &v.theta + 5u32).abs().to_f64() < 1e-50);
    assert!(Float::with_val(P, &v.z - (f(-1.0) + f(0.6) + f(0.16))).abs().to_f64() < 1e-50);
}

#[test]
fn forcing_mode_zero_is_theta_average() {
    let (spec, series) = test_system_c();
    let params = Params::new(&spec, dec(P, "0.1"), f(0.0)).unwrap();
    let u = f(0.0);
    let n = 16;
    let mut avg = f(0.0);
    let two_pi = Float::with_val(P, Constant::Pi) * 2u32;
    for j in 0..n {
        let th = Float::with_val(P, &two_pi * j) / n;
        avg += forcing_f0(&spec, &series, &params, &u, &th).unwrap();
    }
    avg /= n;
    let m0 = forcing_f0_fourier(&spec, &series, &params, &u, 0).unwrap();
    assert!(Float::with_val(P, &m0.re - &avg).abs().to_f64() < 1e-55);
    assert!(m0.im.to_f64().abs() < 1e-55);
}

fn random_series() -> impl Strategy<Value = PerturbationSeries> {
    prop::collection::vec((0usize..3, 0u32..3, 0u32..3, 0u32..3, -5i32..6), 1..6).prop_map(|v| {
        let mut s = PerturbationSeries::new(6);
        for (c, k, m, n, val) in v {
            let comp = Component::ALL[c];
            s.set(comp, (k + m + n).max(3), k, m, n, Rational::from(val)).unwrap();
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conjugacy_of_cartesian_and_cylindric(series in random_series(), r in 0.05f64..2.0, th in -3.0f64..3.0, z in -0.9f64..0.9) {
        let (spec, _) = test_system_d();
        let params = Params::new(&spec, dec(P, "0.15"), dec(P, "0.001")).unwrap();
        let st = StateCylindric { r: f(r), theta: f(th), z: f(z) };
        let cart = st.to_cartesian();
        let v = eval_field_cartesian(&spec, &series, &params, &cart).unwrap();
        let w = eval_field_cylindric(&spec, &series, &params, &st).unwrap();
        // r' = x x' + y y', theta' = (x y' - y x') / (2 r)
        let r_dot = Float::with_val(P, &cart.x * &v.x) + Float::with_val(P, &cart.y * &v.y);
        let th_dot = (Float::with_val(P, &cart.x * &v.y) - Float::with_val(P, &cart.y * &v.x)) / Float::with_val(P, &st.r * 2u32);
        prop_assert!(Float::with_val(P, &w.r - &r_dot).abs().to_f64() < 1e-45);
        prop_assert!(Float::with_val(P, &w.theta - &th_dot).abs().to_f64() < 1e-45);
        prop_assert!(Float::with_val(P, &w.z - &v.z).abs().to_f64() < 1e-45);
    }

    #[test]
    fn mode_tables_resynthesise_monomials(k in 0u32..7, m in 0u32..7, th in -3.0f64..3.0) {
        let mut acc = HPComplex::zero(P);
        let theta = f(th);
        for l in -((k + m) as i32)..=((k + m) as i32) {
            let (re, im) = mode_coefficient(k, m, l);
            let a = HPComplex::new(Float::with_val(P, &re), Float::with_val(P, &im));
            let ph = Float::with_val(P, &theta * l);
            acc += &(&a * &HPComplex::polar(&f(1.0), &ph));
        }
        let (s, c) = theta.clone().sin_cos(Float::new(P));
        let expect = Float::with_val(P, c.pow(k)) * Float::with_val(P, s.pow(m));
        prop_assert!(Float::with_val(P, &acc.re - &expect).abs().to_f64() < 1e-50);
        prop_assert!(acc.im.to_f64().abs() < 1e-50);
    }

    #[test]
    fn heteroclinic_identity_holds(u in -6.0f64..6.0, b in 0.3f64..3.0, d in 0.2f64..3.0) {
        let (mut spec, _) = test_system_d();
        spec.b = hopfzero::hp::parse_decimal(&format!("{b}")).unwrap();
        spec.d = hopfzero::hp::parse_decimal(&format!("{d}")).unwrap();
        let params = Params::new(&spec, dec(P, "0.1"), f(0.0)).unwrap();
        let h = heteroclinic(&spec, &params, &f(u), &f(0.0));
        let z2 = Float::with_val(P, h.z.square_ref());
        let lhs = Float::with_val(P, &h.r * 2u32) * f(b) + &z2 - 1u32;
        let rhs = (Float::with_val(P, 1) - &z2) * f(d);
        prop_assert!(Float::with_val(P, &lhs - &rhs).abs().to_f64() < 1e-50);
    }

    #[test]
    fn forcing_resynthesised_from_modes(series in random_series(), u in -2.0f64..2.0, th in -3.0f64..3.0) {
        let (spec, _) = test_system_d();
        let params = Params::new(&spec, dec(P, "0.2"), dec(P, "0.0005")).unwrap();
        let uu = f(u);
        let theta = f(th);
        let direct = forcing_f0(&spec, &series, &params, &uu, &theta).unwrap();
        let mut acc = HPComplex::zero(P);
        for l in -8..=8 {
            let m = forcing_f0_fourier(&spec, &series, &params, &uu, l).unwrap();
            let ph = Float::with_val(P, &theta * l);
            acc += &(&m * &HPComplex::polar(&f(1.0), &ph));
        }
        prop_assert!(Float::with_val(P, &acc.re - &direct).abs().to_f64() < 1e-45);
        prop_assert!(acc.im.to_f64().abs() < 1e-45);
    }
}
