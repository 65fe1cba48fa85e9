//! The scaled Hopf-zero vector field, its heteroclinic skeleton and exact bookkeeping on the
//! perturbation coefficients.
//!
//! Scaled coordinates `(x, y, z)`:
//!
//! ```text
//! x' =  x (sigma - d z) + (alpha/delta + c z) y + delta^p f
//! y' = -(alpha/delta + c z) x + y (sigma - d z) + delta^p g
//! z' = -1 + b (x^2 + y^2) + z^2 + delta^p h
//! ```
//!
//! with `delta^p f = sum_q delta^{p+q} sum_{k+m+n <= q} f_qkmn x^k y^m z^n`, and
//! `alpha = alpha0 + alpha1 delta sigma + alpha2 delta^2`.

use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hp::{from_rational, HPComplex};
use crate::linalg::{self, CVec3, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    F,
    G,
    H,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::F, Component::G, Component::H];

    fn index(self) -> usize {
        match self {
            Component::F => 0,
            Component::G => 1,
            Component::H => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha0: Rational,
    pub alpha1: Rational,
    pub alpha2: Rational,
    pub b: Rational,
    pub c: Rational,
    pub d: Rational,
    pub p: Rational,
    pub conservative: bool,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.b <= 0 {
            return Err(Error::InvalidInput("b must be positive".into()));
        }
        if self.d <= 0 {
            return Err(Error::InvalidInput("d must be positive".into()));
        }
        if self.alpha0 <= 0 {
            return Err(Error::InvalidInput("alpha0 must be positive".into()));
        }
        if self.p < -2 {
            return Err(Error::InvalidInput("p must be at least -2".into()));
        }
        if self.conservative && self.d != 1 {
            return Err(Error::InvalidInput("the conservative case needs d = 1".into()));
        }
        Ok(())
    }

    /// `S = sqrt((d + 1) / b)`, the amplitude of `sqrt(2 R0)`.
    pub fn amplitude(&self, prec: u32) -> Float {
        let q = (&self.d + Rational::from(1)) / &self.b;
        from_rational(prec, &q).sqrt()
    }

    pub fn f(&self, q: &Rational, prec: u32) -> Float {
        from_rational(prec, q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub component: Component,
    pub q: u32,
    pub k: u32,
    pub m: u32,
    pub n: u32,
    pub value: Rational,
}

/// Sparse table of the coefficients `f_qkmn, g_qkmn, h_qkmn`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSeries {
    qmax: u32,
    terms: Vec<Term>,
}

impl PerturbationSeries {
    pub fn new(qmax: u32) -> Self {
        PerturbationSeries { qmax, terms: Vec::new() }
    }

    pub fn qmax(&self) -> u32 {
        self.qmax
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn set(&mut self, component: Component, q: u32, k: u32, m: u32, n: u32, value: Rational) -> Result<()> {
        if k + m + n > q {
            return Err(Error::InvalidInput(format!("coefficient ({q},{k},{m},{n}) has k + m + n > q")));
        }
        if q > self.qmax {
            return Err(Error::InvalidInput(format!("coefficient order {q} exceeds qmax = {}", self.qmax)));
        }
        let pos = self
            .terms
            .iter()
            .position(|t| t.component == component && (t.q, t.k, t.m, t.n) == (q, k, m, n));
        match (pos, value == 0) {
            (Some(i), true) => {
                self.terms.remove(i);
            }
            (Some(i), false) => self.terms[i].value = value,
            (None, true) => {}
            (None, false) => self.terms.push(Term { component, q, k, m, n, value }),
        }
        self.terms.sort_by_key(|t| (t.component, t.q, t.k, t.m, t.n));
        Ok(())
    }

    pub fn get(&self, component: Component, q: u32, k: u32, m: u32, n: u32) -> Rational {
        self.terms
            .iter()
            .find(|t| t.component == component && (t.q, t.k, t.m, t.n) == (q, k, m, n))
            .map(|t| t.value.clone())
            .unwrap_or_default()
    }
}

/// Conservative test system: `d = b = alpha0 = 1`, `c = 0`, `f_3201 = 1`, `h_3102 = -1`.
pub fn test_system_c() -> (ModelSpec, PerturbationSeries) {
    let spec = ModelSpec {
        alpha0: Rational::from(1),
        alpha1: Rational::new(),
        alpha2: Rational::new(),
        b: Rational::from(1),
        c: Rational::new(),
        d: Rational::from(1),
        p: Rational::new(),
        conservative: true,
    };
    let mut s = PerturbationSeries::new(3);
    s.set(Component::F, 3, 2, 0, 1, Rational::from(1)).unwrap();
    s.set(Component::H, 3, 1, 0, 2, Rational::from(-1)).unwrap();
    (spec, s)
}

/// Dissipative test system: `d = b = alpha0 = 1`, `c = 0`, `h_3003 = 1`.
pub fn test_system_d() -> (ModelSpec, PerturbationSeries) {
    let (mut spec, _) = test_system_c();
    spec.conservative = false;
    let mut s = PerturbationSeries::new(3);
    s.set(Component::H, 3, 0, 0, 3, Rational::from(1)).unwrap();
    (spec, s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub delta: Float,
    pub sigma: Float,
}

impl Params {
    pub fn new(spec: &ModelSpec, delta: Float, sigma: Float) -> Result<Self> {
        let p = Params { delta, sigma };
        p.validate(spec)?;
        Ok(p)
    }

    pub fn from_f64(spec: &ModelSpec, prec: u32, delta: f64, sigma: f64) -> Result<Self> {
        Self::new(spec, Float::with_val(prec, delta), Float::with_val(prec, sigma))
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        spec.validate()?;
        if !(self.delta > 0) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be finite".into()));
        }
        if spec.conservative && !self.sigma.is_zero() {
            return Err(Error::InvalidInput("the conservative case needs sigma = 0".into()));
        }
        if !(self.alpha(spec) > 0) {
            return Err(Error::InvalidInput("alpha(delta, sigma) must be positive".into()));
        }
        Ok(())
    }

    /// Checks `|sigma| <= bound * delta^{p+3}`.
    pub fn check_sigma_bound(&self, spec: &ModelSpec, bound: f64) -> Result<()> {
        let scale = self.delta_pow(spec, 3);
        if Float::with_val(self.prec(), self.sigma.abs_ref()) > Float::with_val(self.prec(), &scale * bound) {
            return Err(Error::InvalidInput(format!(
                "|sigma| = {:e} exceeds {bound} delta^(p+3) = {:e}",
                self.sigma.to_f64(),
                scale.to_f64() * bound
            )));
        }
        Ok(())
    }

    pub fn prec(&self) -> u32 {
        self.delta.prec()
    }

    pub fn alpha(&self, spec: &ModelSpec) -> Float {
        let p = self.prec();
        let mut a = from_rational(p, &spec.alpha0);
        a += Float::with_val(p, &self.delta * &self.sigma) * from_rational(p, &spec.alpha1);
        a += Float::with_val(p, self.delta.square_ref()) * from_rational(p, &spec.alpha2);
        a
    }

    /// `alpha / delta`.
    pub fn omega(&self, spec: &ModelSpec) -> Float {
        self.alpha(spec) / &self.delta
    }

    /// `delta^{p + extra}`.
    pub fn delta_pow(&self, spec: &ModelSpec, extra: i32) -> Float {
        let p = self.prec();
        let e = from_rational(p, &spec.p) + extra;
        Float::with_val(p, (&self.delta).pow(&e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateCartesian {
    pub x: Float,
    pub y: Float,
    pub z: Float,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateCylindric {
    pub r: Float,
    pub theta: Float,
    pub z: Float,
}

impl StateCartesian {
    pub fn to_vec3(&self) -> Vec3 {
        [self.x.clone(), self.y.clone(), self.z.clone()]
    }

    pub fn from_vec3(v: Vec3) -> Self {
        let [x, y, z] = v;
        StateCartesian { x, y, z }
    }

    /// `r = (x^2 + y^2) / 2`, `theta = atan2(y, x)`.
    pub fn to_cylindric(&self) -> StateCylindric {
        let p = self.x.prec();
        let r = (Float::with_val(p, self.x.square_ref()) + Float::with_val(p, self.y.square_ref())) / 2u32;
        let theta = Float::with_val(p, self.y.atan2_ref(&self.x));
        StateCylindric { r, theta, z: self.z.clone() }
    }
}

impl StateCylindric {
    pub fn to_cartesian(&self) -> StateCartesian {
        let p = self.r.prec();
        let rad = Float::with_val(p, &self.r * 2u32).sqrt();
        let (s, c) = self.theta.clone().sin_cos(Float::new(p));
        StateCartesian { x: c * &rad, y: s * &rad, z: self.z.clone() }
    }
}

/// Polynomial vector field compiled at fixed parameters and precision.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub prec: u32,
    pub alpha: Float,
    pub omega: Float,
    pub sigma: Float,
    pub b: Float,
    pub c: Float,
    pub d: Float,
    monomials: Vec<[u32; 3]>,
    base: [Vec<(usize, Float)>; 3],
    pert: [Vec<(usize, Float)>; 3],
    base_const: [Float; 3],
    pert_const: [Float; 3],
    max_deg: [u32; 3],
}

impl VectorField {
    pub fn compile(spec: &ModelSpec, series: &PerturbationSeries, params: &Params, prec: u32) -> Result<Self> {
        params.validate(spec)?;
        let pr = Params {
            delta: Float::with_val(prec, &params.delta),
            sigma: Float::with_val(prec, &params.sigma),
        };
        let alpha = pr.alpha(spec);
        let omega = Float::with_val(prec, &alpha / &pr.delta);
        let b = from_rational(prec, &spec.b);
        let c = from_rational(prec, &spec.c);
        let d = from_rational(prec, &spec.d);
        let sigma = pr.sigma.clone();
        let mut vf = VectorField {
            prec,
            alpha,
            omega: omega.clone(),
            sigma: sigma.clone(),
            b: b.clone(),
            c: c.clone(),
            d: d.clone(),
            monomials: Vec::new(),
            base: [Vec::new(), Vec::new(), Vec::new()],
            pert: [Vec::new(), Vec::new(), Vec::new()],
            base_const: [Float::new(prec), Float::new(prec), Float::with_val(prec, -1)],
            pert_const: [Float::new(prec), Float::new(prec), Float::new(prec)],
            max_deg: [0; 3],
        };
        let neg = |x: &Float| Float::with_val(prec, -x);
        let base_terms: [Vec<([u32; 3], Float)>; 3] = [
            vec![([1, 0, 0], sigma.clone()), ([1, 0, 1], neg(&d)), ([0, 1, 0], omega.clone()), ([0, 1, 1], c.clone())],
            vec![([1, 0, 0], neg(&omega)), ([1, 0, 1], neg(&c)), ([0, 1, 0], sigma.clone()), ([0, 1, 1], neg(&d))],
            vec![([2, 0, 0], b.clone()), ([0, 2, 0], b.clone()), ([0, 0, 2], Float::with_val(prec, 1))],
        ];
        for (i, terms) in base_terms.into_iter().enumerate() {
            for (mono, coef) in terms {
                if !coef.is_zero() {
                    let idx = vf.monomial_index(mono);
                    vf.base[i].push((idx, coef));
                }
            }
        }
        for t in series.terms() {
            let i = t.component.index();
            let coef = Float::with_val(prec, pr.delta_pow(spec, t.q as i32) * from_rational(prec, &t.value));
            if t.k + t.m + t.n == 0 {
                vf.pert_const[i] += coef;
                continue;
            }
            let idx = vf.monomial_index([t.k, t.m, t.n]);
            match vf.pert[i].iter_mut().find(|(j, _)| *j == idx) {
                Some((_, c0)) => *c0 += coef,
                None => vf.pert[i].push((idx, coef)),
            }
        }
        Ok(vf)
    }

    fn monomial_index(&mut self, mono: [u32; 3]) -> usize {
        if let Some(i) = self.monomials.iter().position(|m| *m == mono) {
            return i;
        }
        for j in 0..3 {
            self.max_deg[j] = self.max_deg[j].max(mono[j]);
        }
        self.monomials.push(mono);
        self.monomials.len() - 1
    }

    pub fn monomials(&self) -> &[[u32; 3]] {
        &self.monomials
    }

    /// Combined (unperturbed plus perturbation) terms of component `i`.
    pub fn terms(&self, i: usize) -> Vec<(usize, Float)> {
        let mut out = self.base[i].clone();
        for (idx, c) in &self.pert[i] {
            match out.iter_mut().find(|(j, _)| j == idx) {
                Some((_, c0)) => *c0 += c,
                None => out.push((*idx, c.clone())),
            }
        }
        out
    }

    pub fn constant(&self, i: usize) -> Float {
        Float::with_val(self.prec, &self.base_const[i] + &self.pert_const[i])
    }

    /// The time-reversed field.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        for i in 0..3 {
            for (_, c) in out.base[i].iter_mut().chain(out.pert[i].iter_mut()) {
                c.neg_assign_fix();
            }
            out.base_const[i].neg_assign_fix();
            out.pert_const[i].neg_assign_fix();
        }
        out
    }

    fn powers(&self, s: &Vec3) -> [Vec<Float>; 3] {
        [0, 1, 2].map(|j| {
            let mut v = vec![Float::with_val(self.prec, 1)];
            for e in 1..=self.max_deg[j] as usize {
                let next = Float::with_val(self.prec, &v[e - 1] * &s[j]);
                v.push(next);
            }
            v
        })
    }

    fn mono_value(&self, pw: &[Vec<Float>; 3], mono: [u32; 3], dif: [u32; 3]) -> Option<Float> {
        let mut out = Float::with_val(self.prec, 1);
        for j in 0..3 {
            if mono[j] < dif[j] {
                return None;
            }
            let e = mono[j] - dif[j];
            let mut fall = 1u32;
            for t in 0..dif[j] {
                fall *= mono[j] - t;
            }
            out *= &pw[j][e as usize];
            if fall != 1 {
                out *= fall;
            }
        }
        Some(out)
    }

    fn eval_terms(&self, terms: &[(usize, Float)], pw: &[Vec<Float>; 3], dif: [u32; 3]) -> Float {
        let mut s = Float::new(self.prec);
        for (idx, c) in terms {
            if let Some(v) = self.mono_value(pw, self.monomials[*idx], dif) {
                s += v * c;
            }
        }
        s
    }

    pub fn eval(&self, s: &Vec3) -> Vec3 {
        let pw = self.powers(s);
        [0, 1, 2].map(|i| {
            let mut v = self.eval_terms(&self.base[i], &pw, [0; 3]);
            v += self.eval_terms(&self.pert[i], &pw, [0; 3]);
            v += &self.base_const[i];
            v += &self.pert_const[i];
            v
        })
    }

    /// Only the perturbation `delta^p (f, g, h)`.
    pub fn eval_perturbation(&self, s: &Vec3) -> Vec3 {
        let pw = self.powers(s);
        [0, 1, 2].map(|i| {
            let mut v = self.eval_terms(&self.pert[i], &pw, [0; 3]);
            v += &self.pert_const[i];
            v
        })
    }

    pub fn jacobian(&self, s: &Vec3) -> Mat3 {
        let pw = self.powers(s);
        [0, 1, 2].map(|i| {
            [0, 1, 2].map(|j| {
                let mut dif = [0; 3];
                dif[j] = 1;
                let mut v = self.eval_terms(&self.base[i], &pw, dif);
                v += self.eval_terms(&self.pert[i], &pw, dif);
                v
            })
        })
    }

    /// `H[i][j][k] = d^2 X_i / dx_j dx_k`.
    pub fn hessian(&self, s: &Vec3) -> [Mat3; 3] {
        let pw = self.powers(s);
        [0, 1, 2].map(|i| {
            [0, 1, 2].map(|j| {
                [0, 1, 2].map(|k| {
                    let mut dif = [0; 3];
                    dif[j] += 1;
                    dif[k] += 1;
                    let mut v = self.eval_terms(&self.base[i], &pw, dif);
                    v += self.eval_terms(&self.pert[i], &pw, dif);
                    v
                })
            })
        })
    }
}

trait NegFix {
    fn neg_assign_fix(&mut self);
}

impl NegFix for Float {
    fn neg_assign_fix(&mut self) {
        let v = Float::with_val(self.prec(), -&*self);
        *self = v;
    }
}

pub fn eval_field_cartesian(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    state: &StateCartesian,
) -> Result<StateCartesian> {
    let vf = VectorField::compile(spec, series, params, state.x.prec())?;
    let v = vf.eval(&state.to_vec3());
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("vector field is not finite at this state".into()));
    }
    Ok(StateCartesian::from_vec3(v))
}

/// Perturbation components in cylindric form:
/// `F = sqrt(2r)(cos f + sin g)`, `G = (-sin f + cos g) / sqrt(2r)`, `H = h`, each including `delta^p`.
pub fn perturbation_cylindric(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    state: &StateCylindric,
) -> Result<[Float; 3]> {
    if !(state.r > 0) {
        return Err(Error::Domain("cylindric coordinates need r > 0".into()));
    }
    let p = state.r.prec();
    let vf = VectorField::compile(spec, series, params, p)?;
    let cart = state.to_cartesian();
    let [f, g, h] = vf.eval_perturbation(&cart.to_vec3());
    let big_f = Float::with_val(p, &cart.x * &f) + Float::with_val(p, &cart.y * &g);
    let two_r = Float::with_val(p, &state.r * 2u32);
    let big_g = (Float::with_val(p, &cart.x * &g) - Float::with_val(p, &cart.y * &f)) / two_r;
    Ok([big_f, big_g, h])
}

pub fn eval_field_cylindric(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    state: &StateCylindric,
) -> Result<StateCylindric> {
    let [big_f, big_g, big_h] = perturbation_cylindric(spec, series, params, state)?;
    let p = state.r.prec();
    let vf = VectorField::compile(spec, series, params, p)?;
    let z = &state.z;
    let mut r_dot = Float::with_val(p, &vf.sigma - Float::with_val(p, &vf.d * z)) * &state.r * 2u32;
    r_dot += big_f;
    let mut th_dot = -Float::with_val(p, &vf.omega + Float::with_val(p, &vf.c * z));
    th_dot += big_g;
    let mut z_dot = Float::with_val(p, &vf.b * &state.r) * 2u32 + Float::with_val(p, z.square_ref()) - 1u32;
    z_dot += big_h;
    let out = StateCylindric { r: r_dot, theta: th_dot, z: z_dot };
    if !(out.r.is_finite() && out.theta.is_finite() && out.z.is_finite()) {
        return Err(Error::Domain("vector field is not finite at this state".into()));
    }
    Ok(out)
}

/// Unperturbed heteroclinic connection:
/// `R0 = (d+1)/(2b) sech^2(d u)`, `Theta0 = theta0 - (alpha/delta) u - (c/d) log cosh(d u)`, `Z0 = tanh(d u)`.
pub fn heteroclinic(spec: &ModelSpec, params: &Params, u: &Float, theta0: &Float) -> StateCylindric {
    let p = u.prec().max(params.prec());
    let d = from_rational(p, &spec.d);
    let du = Float::with_val(p, u * &d);
    let ch = Float::with_val(p, du.cosh_ref());
    let r = from_rational(p, &((&spec.d + Rational::from(1)) / (Rational::from(&spec.b * 2u32))))
        / Float::with_val(p, ch.square_ref());
    let omega = Float::with_val(p, params.omega(spec));
    let mut theta = Float::with_val(p, theta0 - Float::with_val(p, &omega * u));
    theta -= from_rational(p, &(Rational::from(&spec.c / &spec.d))) * ch.ln();
    StateCylindric { r, theta, z: du.tanh() }
}

#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub position: Vec3,
    pub jacobian: Mat3,
    pub residual: f64,
    pub newton_iterations: u32,
    pub real_eigenvalue: Float,
    /// The member of the complex pair with positive imaginary part.
    pub complex_eigenvalue: HPComplex,
    pub real_eigenvector: Vec3,
    pub complex_eigenvector: CVec3,
}

#[derive(Clone, Debug)]
pub struct CriticalPoints {
    /// Near `(0, 0, -1)`, two-dimensional unstable manifold.
    pub minus: CriticalPoint,
    /// Near `(0, 0, 1)`, two-dimensional stable manifold.
    pub plus: CriticalPoint,
}

fn newton_critical(vf: &VectorField, seed: Vec3, tol: f64) -> Result<(Vec3, f64, u32)> {
    let mut x = seed;
    for it in 0..80u32 {
        let fx = vf.eval(&x);
        let res = linalg::norm(&fx).to_f64();
        if res <= tol {
            return Ok((x, res, it));
        }
        let step = linalg::solve(&vf.jacobian(&x), &fx)?;
        x = linalg::sub(&x, &step);
        if linalg::norm(&x).to_f64() > 10.0 {
            break;
        }
    }
    Err(Error::Convergence { what: "critical point Newton iteration", detail: "no root near the seed".into() })
}

fn polish_root(coef: &[Float; 3], mut z: HPComplex) -> HPComplex {
    // p(l) = l^3 + c2 l^2 + c1 l + c0
    let prec = z.prec();
    for _ in 0..200 {
        let mut p = HPComplex::one(prec);
        let mut dp = HPComplex::zero(prec);
        for c in coef.iter().rev() {
            dp = &(&dp * &z) + &p;
            p = &p * &z;
            p.re += c;
        }
        if dp.is_zero() {
            break;
        }
        let step = &p / &dp;
        z -= &step;
        if step.abs_f64() <= z.abs_f64().max(1.0) * 2f64.powi(-(prec as i32) + 4) {
            break;
        }
    }
    z
}

fn null_vector(j: &Mat3, lambda: &HPComplex) -> CVec3 {
    let mut rows = linalg::mat_to_complex(j);
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let cands = [
        linalg::cross_complex(&rows[0], &rows[1]),
        linalg::cross_complex(&rows[0], &rows[2]),
        linalg::cross_complex(&rows[1], &rows[2]),
    ];
    let size = |v: &CVec3| v.iter().map(|c| c.abs_f64()).fold(0.0, f64::max);
    let mut best = cands[0].clone();
    for c in &cands[1..] {
        if size(c) > size(&best) {
            best = c.clone();
        }
    }
    let big = best.iter().max_by(|a, b| a.abs_f64().partial_cmp(&b.abs_f64()).unwrap()).unwrap().clone();
    let v: Vec<HPComplex> = best.iter().map(|c| c / &big).collect();
    let mut nrm = Float::new(lambda.prec());
    for c in &v {
        nrm += c.norm_sqr();
    }
    let nrm = nrm.sqrt();
    [0, 1, 2].map(|i| v[i].scale(&Float::with_val(lambda.prec(), nrm.recip_ref())))
}

fn analyse_point(vf: &VectorField, x: Vec3, residual: f64, iters: u32) -> Result<CriticalPoint> {
    let prec = vf.prec;
    let j = vf.jacobian(&x);
    let jf = nalgebra::Matrix3::from_fn(|r, c| j[r][c].to_f64());
    let guesses = jf.complex_eigenvalues();
    // characteristic polynomial l^3 - tr l^2 + m2 l - det
    let tr = Float::with_val(prec, &j[0][0] + &j[1][1]) + &j[2][2];
    let minor = |a: usize, b: usize| {
        Float::with_val(prec, &j[a][a] * &j[b][b]) - Float::with_val(prec, &j[a][b] * &j[b][a])
    };
    let m2 = minor(0, 1) + minor(0, 2) + minor(1, 2);
    let det = {
        let c0 = Float::with_val(prec, &j[1][1] * &j[2][2]) - Float::with_val(prec, &j[1][2] * &j[2][1]);
        let c1 = Float::with_val(prec, &j[1][0] * &j[2][2]) - Float::with_val(prec, &j[1][2] * &j[2][0]);
        let c2 = Float::with_val(prec, &j[1][0] * &j[2][1]) - Float::with_val(prec, &j[1][1] * &j[2][0]);
        c0 * &j[0][0] - c1 * &j[0][1] + c2 * &j[0][2]
    };
    let coef = [-det, m2, -tr];
    let mut roots: Vec<HPComplex> = guesses
        .iter()
        .map(|g| polish_root(&coef, HPComplex::from_f64(prec, g.re, g.im)))
        .collect();
    roots.sort_by(|a, b| a.im.to_f64().abs().partial_cmp(&b.im.to_f64().abs()).unwrap());
    let real = roots[0].re.clone();
    let mut cplx = roots[1].clone();
    if cplx.im.is_sign_negative() {
        cplx = cplx.conj();
    }
    if cplx.im.to_f64().abs() <= 1e-12 * cplx.abs_f64() {
        return Err(Error::Domain("critical point has no complex eigenvalue pair".into()));
    }
    let rv = null_vector(&j, &HPComplex::from_real(real.clone()));
    let sign = if rv.iter().map(|c| c.re.to_f64()).fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a }) < 0.0 {
        -1
    } else {
        1
    };
    let real_vec = [0, 1, 2].map(|i| Float::with_val(prec, &rv[i].re * sign));
    let cv = null_vector(&j, &cplx);
    Ok(CriticalPoint {
        position: x,
        jacobian: j,
        residual,
        newton_iterations: iters,
        real_eigenvalue: real,
        complex_eigenvalue: cplx,
        real_eigenvector: real_vec,
        complex_eigenvector: cv,
    })
}

pub fn critical_points(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    prec: u32,
    tol: f64,
) -> Result<CriticalPoints> {
    let vf = VectorField::compile(spec, series, params, prec)?;
    critical_points_of(&vf, tol)
}

pub fn critical_points_of(vf: &VectorField, tol: f64) -> Result<CriticalPoints> {
    let prec = vf.prec;
    let seed = |z: i32| [Float::new(prec), Float::new(prec), Float::with_val(prec, z)];
    let (xm, rm, im) = newton_critical(vf, seed(-1), tol)?;
    let (xp, rp, ip) = newton_critical(vf, seed(1), tol)?;
    if linalg::norm(&linalg::sub(&xm, &xp)).to_f64() < 0.5 {
        return Err(Error::Convergence { what: "critical point Newton iteration", detail: "both seeds converged to one point".into() });
    }
    Ok(CriticalPoints { minus: analyse_point(vf, xm, rm, im)?, plus: analyse_point(vf, xp, rp, ip)? })
}

/// Fourier coefficient `a_{k,m}^{[l]}` of `cos^k(theta) sin^m(theta)`, returned as exact `(re, im)`.
pub fn mode_coefficient(k: u32, m: u32, l: i32) -> (Rational, Rational) {
    let mut sum = Integer::new();
    for j1 in 0..=k {
        for j2 in 0..=m {
            if 2 * j1 as i64 - k as i64 + 2 * j2 as i64 - m as i64 == l as i64 {
                let mut t = Integer::from(Integer::binomial_u(k, j1)) * Integer::from(Integer::binomial_u(m, j2));
                if (m - j2) % 2 == 1 {
                    t = -t;
                }
                sum += t;
            }
        }
    }
    let base = Rational::from((sum, Integer::from(1) << (k + m)));
    // multiply by (-i)^m
    match m % 4 {
        0 => (base, Rational::new()),
        1 => (Rational::new(), -base),
        2 => (-base, Rational::new()),
        _ => (Rational::new(), base),
    }
}

fn mode_complex(prec: u32, k: u32, m: u32, l: i32) -> HPComplex {
    let (re, im) = mode_coefficient(k, m, l);
    HPComplex::new(from_rational(prec, &re), from_rational(prec, &im))
}

/// Forcing along the unperturbed connection:
/// `2 sigma R0 + delta^p F(0) + delta^p ((d+1)/b) Z0 H(0)`.
pub fn forcing_f0(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    u: &Float,
    theta: &Float,
) -> Result<Float> {
    let p = u.prec().max(params.prec());
    let vf = VectorField::compile(spec, series, params, p)?;
    forcing_f0_with(&vf, spec, params, u, theta)
}

pub(crate) fn forcing_f0_with(
    vf: &VectorField,
    spec: &ModelSpec,
    params: &Params,
    u: &Float,
    theta: &Float,
) -> Result<Float> {
    let p = vf.prec;
    let het = heteroclinic(spec, params, u, &Float::new(p));
    let rad = Float::with_val(p, &het.r * 2u32).sqrt();
    let (s, c) = theta.clone().sin_cos(Float::new(p));
    let x = Float::with_val(p, &c * &rad);
    let y = Float::with_val(p, &s * &rad);
    let [f, g, h] = vf.eval_perturbation(&[x.clone(), y.clone(), het.z.clone()]);
    let s2 = from_rational(p, &((&spec.d + Rational::from(1)) / &spec.b));
    let mut out = Float::with_val(p, &vf.sigma * &het.r) * 2u32;
    out += x * f;
    out += y * g;
    out += s2 * &het.z * h;
    if !out.is_finite() {
        return Err(Error::Domain("forcing is not finite".into()));
    }
    Ok(out)
}

/// Fourier mode `l` in `theta` of [`forcing_f0`], from the exact mode tables.
pub fn forcing_f0_fourier(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    u: &Float,
    l: i32,
) -> Result<HPComplex> {
    let p = u.prec().max(params.prec());
    let het = heteroclinic(spec, params, u, &Float::new(p));
    let rad = Float::with_val(p, &het.r * 2u32).sqrt();
    let s2 = from_rational(p, &((&spec.d + Rational::from(1)) / &spec.b));
    let mut out = HPComplex::zero(p);
    if l == 0 {
        out.re += Float::with_val(p, &params.sigma * &het.r) * 2u32;
    }
    for t in series.terms() {
        let mut coef = params.delta_pow(spec, t.q as i32) * from_rational(p, &t.value);
        coef *= Float::with_val(p, (&het.z).pow(t.n));
        let (mode, amp) = match t.component {
            Component::F => (mode_complex(p, t.k + 1, t.m, l), Float::with_val(p, (&rad).pow(t.k + t.m + 1))),
            Component::G => (mode_complex(p, t.k, t.m + 1, l), Float::with_val(p, (&rad).pow(t.k + t.m + 1))),
            Component::H => {
                let a = Float::with_val(p, (&rad).pow(t.k + t.m)) * &s2 * &het.z;
                (mode_complex(p, t.k, t.m, l), a)
            }
        };
        out += &mode.scale(&(coef * amp));
    }
    Ok(out)
}

/// The constant `L0` in the phase correction of the splitting law.
pub fn l0_constant(spec: &ModelSpec, series: &PerturbationSeries) -> Result<Rational> {
    spec.validate()?;
    let c = |comp, k, m, n| series.get(comp, 3, k, m, n);
    use Component::{F, G, H};
    if spec.conservative {
        return Ok(-c(H, 0, 0, 3));
    }
    let d = &spec.d;
    let b = &spec.b;
    let d1 = d + Rational::from(1);
    let first = (&d1 / Rational::from(b * 4u32))
        * (c(F, 1, 2, 0) + c(G, 2, 1, 0) + c(F, 3, 0, 0) * 3u32 + c(G, 0, 3, 0) * 3u32);
    let bracket = first - (c(F, 1, 0, 2) + c(G, 0, 1, 2)) - Rational::from(&d1 / b) * (c(H, 2, 0, 1) + c(H, 0, 2, 1))
        + c(H, 0, 0, 3) * 2u32;
    let pre = &d1 / (Rational::from(b * 2u32) * d * (Rational::from(d * 3u32) + 2u32));
    let rho0 = pre * bracket;
    let h0 = -c(H, 0, 0, 3) + (&d1 / Rational::from(b * 2u32)) * (c(H, 0, 2, 1) + c(H, 2, 0, 1));
    Ok(-(Rational::from(b * 2u32) / d) * rho0 - h0 / d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTerm {
    pub q: u32,
    pub k: u32,
    pub m: u32,
    pub n: u32,
    pub value: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub terms: Vec<DivergenceTerm>,
    pub max_abs: Rational,
}

/// Divergence of the perturbation, order by order in `q` up to `degree`.
pub fn divergence_check(series: &PerturbationSeries, degree: u32) -> DivergenceReport {
    let mut terms: Vec<DivergenceTerm> = Vec::new();
    for t in series.terms().iter().filter(|t| t.q <= degree) {
        let (e, mono) = match t.component {
            Component::F if t.k > 0 => (t.k, [t.k - 1, t.m, t.n]),
            Component::G if t.m > 0 => (t.m, [t.k, t.m - 1, t.n]),
            Component::H if t.n > 0 => (t.n, [t.k, t.m, t.n - 1]),
            _ => continue,
        };
        let v = Rational::from(&t.value * e);
        match terms.iter_mut().find(|x| (x.q, x.k, x.m, x.n) == (t.q, mono[0], mono[1], mono[2])) {
            Some(x) => x.value += v,
            None => terms.push(DivergenceTerm { q: t.q, k: mono[0], m: mono[1], n: mono[2], value: v }),
        }
    }
    terms.retain(|t| t.value != 0);
    terms.sort_by_key(|t| (t.q, t.k, t.m, t.n));
    let max_abs = terms.iter().map(|t| Rational::from(t.value.abs_ref())).max().unwrap_or_default();
    DivergenceReport { terms, max_abs }
}

#[derive(Clone, Debug)]
pub struct Scaling {
    pub delta: Float,
    pub sigma: Float,
    pub p: i32,
    pub z_shift: Float,
}

/// Scaling of the unfolding parameters `(mu, nu)` of a normal form of order `q`:
/// `delta = sqrt(mu)`, `sigma = nu / delta`, `p = q - 2`, `z_shift = delta^{p+3} h3 / 2`.
pub fn scale_from_unfolding(mu: &Float, nu: &Float, q: i32, beta1: &Float, h3: &Float) -> Result<Scaling> {
    let prec = mu.prec();
    if !(*mu > 0) {
        return Err(Error::Domain("mu must be positive".into()));
    }
    let delta = Float::with_val(prec, mu.sqrt_ref());
    if !(Float::with_val(prec, nu.abs_ref()) < Float::with_val(prec, beta1 * &delta)) {
        return Err(Error::Domain("need |nu| < beta1 sqrt(mu)".into()));
    }
    if q < 0 {
        return Err(Error::Domain("normal form order must be non-negative".into()));
    }
    let p = q - 2;
    let sigma = Float::with_val(prec, nu / &delta);
    let z_shift = Float::with_val(prec, (&delta).pow(p + 3)) * h3 / 2u32;
    Ok(Scaling { delta, sigma, p, z_shift })
}
