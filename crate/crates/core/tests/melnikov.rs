use std::time::Instant;

use hopfzero::hp::{dec, HPComplex, ScalarConfig};
use hopfzero::melnikov::{
    average_i, borel_constant, melnikov_asymptotic, melnikov_pointwise, r10_graph, upsilon0_gamma_series,
    upsilon0_quadrature, Branch,
};
use hopfzero::model::{test_system_c, test_system_d, Component, ModelSpec, Params, PerturbationSeries};
use hopfzero::special::quadrature::{integrate, QuadOptions, Range};
use proptest::prelude::*;
use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};

const P: u32 = 160;

fn cfg() -> ScalarConfig {
    ScalarConfig::new(P, 1e-30).unwrap()
}

fn phase(spec: &ModelSpec, params: &Params, u: &Float, theta: &Float) -> Float {
    let d = Float::with_val(P, &spec.d);
    let lc = Float::with_val(P, Float::with_val(P, u * &d).cosh_ref()).ln();
    let mut x = Float::with_val(P, theta) + Float::with_val(P, params.omega(spec) * u);
    x += Float::with_val(P, &spec.c) / &d * lc;
    x
}

#[test]
fn pointwise_equals_modal_reconstruction() {
    let (spec, series) = test_system_c();
    let params = Params::new(&spec, dec(P, "0.1"), Float::new(P)).unwrap();
    let u = Float::new(P);
    let theta = dec(P, "0.3");
    let t0 = Instant::now();
    let m = melnikov_pointwise(&spec, &series, &params, &u, &theta, &cfg()).unwrap();
    let elapsed = t0.elapsed();
    let xi = phase(&spec, &params, &u, &theta);
    let mut acc = Float::new(P);
    for l in 1..=4 {
        let v = upsilon0_gamma_series(&spec, &series, &params, l, &cfg()).unwrap().value;
        let e = HPComplex::polar(&Float::with_val(P, 1), &Float::with_val(P, &xi * l));
        acc += Float::with_val(P, (&v * &e).re) * 2u32;
    }
    let err = Float::with_val(P, &m.value - &acc).abs().to_f64();
    println!("pointwise {:e} modal {:e} err {err:e} in {elapsed:?}", m.value.to_f64(), acc.to_f64());
    assert!(err < 1e-24);
}

#[test]
fn graph_corrections_combine_into_melnikov_function() {
    let (spec, series) = test_system_c();
    let params = Params::new(&spec, dec(P, "0.1"), Float::new(P)).unwrap();
    let u = dec(P, "0.5");
    let theta = dec(P, "1.2");
    let ru = r10_graph(&spec, &series, &params, Branch::Unstable, &u, &theta, &cfg()).unwrap();
    let rs = r10_graph(&spec, &series, &params, Branch::Stable, &u, &theta, &cfg()).unwrap();
    let m = melnikov_pointwise(&spec, &series, &params, &u, &theta, &cfg()).unwrap();
    let gap = Float::with_val(P, Float::with_val(P, &ru.value - &rs.value) - &m.value).abs().to_f64();
    assert!(gap <= ru.error + rs.error + m.error + 1e-26, "gap {gap:e}");
    assert!(ru.within_bound && rs.within_bound);
}

#[test]
fn asymptotic_tracks_pointwise_for_small_delta() {
    let (spec, series) = test_system_c();
    let u = Float::new(P);
    let theta = dec(P, "0.7");
    let mut prev = f64::INFINITY;
    for dl in ["0.2", "0.1", "0.05"] {
        let params = Params::new(&spec, dec(P, dl), Float::new(P)).unwrap();
        let m = melnikov_pointwise(&spec, &series, &params, &u, &theta, &cfg()).unwrap();
        let a = melnikov_asymptotic(&spec, &series, &params, &u, &theta, &cfg()).unwrap();
        let rel = (Float::with_val(P, &m.value - &a) / &a).abs().to_f64();
        assert!(rel < prev, "{dl}: {rel:e}");
        prev = rel;
    }
    assert!(prev < 0.01);
}

#[test]
fn gamma_series_matches_quadrature_for_dissipative_system_with_rotation() {
    // c != 0, d != 1 and modes from every component
    let spec = ModelSpec {
        alpha0: Rational::from(1),
        alpha1: Rational::from((1, 2)),
        alpha2: Rational::from((1, 3)),
        b: Rational::from((3, 2)),
        c: Rational::from((1, 2)),
        d: Rational::from((3, 4)),
        p: Rational::from(1),
        conservative: false,
    };
    let mut series = PerturbationSeries::new(4);
    series.set(Component::F, 3, 1, 1, 1, Rational::from(2)).unwrap();
    series.set(Component::G, 3, 0, 0, 3, Rational::from(-1)).unwrap();
    series.set(Component::H, 3, 1, 0, 1, Rational::from((1, 3))).unwrap();
    series.set(Component::H, 4, 0, 1, 2, Rational::from(1)).unwrap();
    series.set(Component::F, 4, 2, 0, 0, Rational::from(1)).unwrap();
    let params = Params::new(&spec, dec(P, "0.15"), dec(P, "0.0002")).unwrap();
    for l in [-3, -1, 0, 1, 3] {
        let a = upsilon0_quadrature(&spec, &series, &params, l, &cfg()).unwrap();
        let b = upsilon0_gamma_series(&spec, &series, &params, l, &cfg()).unwrap();
        let e = (&a.value - &b.value).abs_f64() / b.value.abs_f64().max(1e-300);
        assert!(e < 1e-25, "l = {l}: {e:e}");
    }
}

#[test]
fn average_i_closed_form_matches_quadrature() {
    for (b, d) in [((1, 1), (1, 1)), ((3, 2), (3, 4)), ((1, 2), (5, 2))] {
        let (mut spec, _) = test_system_d();
        spec.b = Rational::from(b);
        spec.d = Rational::from(d);
        let dd = Float::with_val(P, &spec.d);
        let s2 = (Float::with_val(P, &spec.d) + 1u32) / Float::with_val(P, &spec.b);
        let expo = Float::with_val(P, 2u32) / &dd + 2u32;
        let q = integrate(&Range::Line, &QuadOptions::new(P, 1e-35), |w: &Float| {
            Ok(Float::with_val(P, Float::with_val(P, w * &dd).cosh_ref()).pow(&expo).recip())
        })
        .unwrap();
        let i = average_i(&spec, P);
        let e = (Float::with_val(P, &q.value * &s2) / &i - 1u32).abs().to_f64();
        assert!(e < 1e-33, "{b:?} {d:?}: {e:e}");
    }
}

#[test]
fn rotationally_symmetric_perturbation_has_zero_borel_constant() {
    // f = x z^2, g = y z^2, h = -(2/3) z^3
    let (spec, _) = test_system_c();
    let mut s = PerturbationSeries::new(3);
    s.set(Component::F, 3, 1, 0, 2, Rational::from(1)).unwrap();
    s.set(Component::G, 3, 0, 1, 2, Rational::from(1)).unwrap();
    s.set(Component::H, 3, 0, 0, 3, Rational::from((-2, 3))).unwrap();
    let bc = borel_constant(&spec, &s, &cfg()).unwrap();
    assert!(bc.constant.abs_f64() < 1e-40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Upsilon^{[-l]} = conj(Upsilon^{[l]}) for real coefficients.
    #[test]
    fn negative_modes_are_conjugate(k in 0u32..3, m in 0u32..3, n in 0u32..2, v in 1i32..4, comp in 0usize..3) {
        let (spec, _) = test_system_d();
        let mut s = PerturbationSeries::new(5);
        s.set(Component::ALL[comp], (k + m + n).max(3), k, m, n, Rational::from(v)).unwrap();
        let params = Params::new(&spec, dec(P, "0.2"), Float::new(P)).unwrap();
        let a = upsilon0_quadrature(&spec, &s, &params, 1, &cfg()).unwrap().value;
        let b = upsilon0_quadrature(&spec, &s, &params, -1, &cfg()).unwrap().value;
        let scale = a.abs_f64().max(1e-300);
        prop_assert!((&b - &a.conj()).abs_f64() <= 1e-25 * scale);
    }
}

#[test]
fn two_pi_constant_is_consistent() {
    // sanity on the mpfr constant used throughout
    let pi = Float::with_val(P, Constant::Pi);
    assert!((pi.to_f64() - std::f64::consts::PI).abs() < 1e-15);
}
