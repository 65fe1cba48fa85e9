//! Melnikov function of the 2D manifolds: Fourier coefficients by contour quadrature and by
//! the Gamma-function series, the Borel constant of the inner equation, pointwise and
//! asymptotic forms, the averages `I`, `J` and the balancing dissipation `sigma*`.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hp::{from_rational, HPComplex, ScalarConfig};
use crate::model::{forcing_f0_with, mode_coefficient, Component, ModelSpec, Params, PerturbationSeries, VectorField};
use crate::special::integrals::BentContour;
use crate::special::quadrature::{integrate, QuadOptions, Range};
use crate::special::{gamma, i_closed, IIntegralKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Quadrature,
    GammaSeries,
    Asymptotic,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Quadrature => "quadrature",
            Route::GammaSeries => "gamma_series",
            Route::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MelnikovValue {
    pub value: HPComplex,
    pub error: f64,
    pub route: Route,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Unstable,
    Stable,
}

/// Mode `l` of the forcing along the connection, as `sum C_{a,n} sech^a(d w) tanh^n(d w)`.
#[derive(Clone, Debug)]
pub struct ModeForcing {
    pub l: i32,
    pub entries: Vec<(u32, u32, HPComplex)>,
    d: Float,
}

impl ModeForcing {
    pub fn new(spec: &ModelSpec, series: &PerturbationSeries, params: &Params, l: i32, prec: u32) -> Self {
        let pr = Params { delta: Float::with_val(prec, &params.delta), sigma: Float::with_val(prec, &params.sigma) };
        let s = spec.amplitude(prec);
        let mut entries: Vec<(u32, u32, HPComplex)> = Vec::new();
        let mut push = |a: u32, n: u32, c: HPComplex| {
            if c.is_zero() {
                return;
            }
            match entries.iter_mut().find(|e| e.0 == a && e.1 == n) {
                Some(e) => e.2 += &c,
                None => entries.push((a, n, c)),
            }
        };
        if l == 0 && !pr.sigma.is_zero() {
            // 2 sigma R0 = sigma S^2 sech^2
            let c = Float::with_val(prec, &pr.sigma * Float::with_val(prec, s.square_ref()));
            push(2, 0, HPComplex::from_real(c));
        }
        for t in series.terms() {
            let coef = pr.delta_pow(spec, t.q as i32) * from_rational(prec, &t.value);
            let (mk, mm, a, n, spow) = match t.component {
                Component::F => (t.k + 1, t.m, t.k + t.m + 1, t.n, t.k + t.m + 1),
                Component::G => (t.k, t.m + 1, t.k + t.m + 1, t.n, t.k + t.m + 1),
                Component::H => (t.k, t.m, t.k + t.m, t.n + 1, t.k + t.m + 2),
            };
            let (re, im) = mode_coefficient(mk, mm, l);
            if re == 0 && im == 0 {
                continue;
            }
            let amp = coef * Float::with_val(prec, (&s).pow(spow));
            let c = HPComplex::new(from_rational(prec, &re), from_rational(prec, &im)).scale(&amp);
            push(a, n, c);
        }
        entries.sort_by_key(|e| (e.0, e.1));
        ModeForcing { l, entries, d: from_rational(prec, &spec.d) }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of `|C_{a,n}|`, a scale for absolute tolerances.
    pub fn magnitude(&self) -> f64 {
        self.entries.iter().map(|e| e.2.abs_f64()).sum()
    }

    pub fn eval(&self, w: &HPComplex) -> HPComplex {
        let p = w.prec();
        let dw = w.scale(&self.d);
        let ch = dw.cosh();
        let sech = ch.recip();
        let tanh = &dw.sinh() * &sech;
        let mut out = HPComplex::zero(p);
        for (a, n, c) in &self.entries {
            let t = &(&sech.powi(*a as i64) * &tanh.powi(*n as i64)) * c;
            out += &t;
        }
        out
    }
}

fn working(cfg: &ScalarConfig) -> u32 {
    cfg.precision_bits + 24
}

fn default_rho(spec: &ModelSpec, forcing: &ModeForcing) -> f64 {
    let d = from_rational(53, &spec.d).to_f64();
    let qmax = forcing.entries.iter().map(|e| (e.0 + e.1) as f64 - 1.0 + 2.0 / d).fold(0.0, f64::max);
    qmax.max(8.0) * d
}

/// `Upsilon_0^{[l]} = int e^{-i l alpha w / delta} F^{[l]}(w) cosh(d w)^{-(2 + i l c)/d} dw`, on the real
/// line for `l = 0` and on a contour pushed towards the singularity `-i sgn(l) pi / (2d)` otherwise.
pub fn upsilon0_quadrature(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    l: i32,
    cfg: &ScalarConfig,
) -> Result<MelnikovValue> {
    cfg.validate()?;
    params.validate(spec)?;
    let wp = working(cfg);
    let forcing = ModeForcing::new(spec, series, params, l, wp);
    if forcing.is_zero() {
        return Ok(MelnikovValue { value: HPComplex::zero(cfg.precision_bits), error: 0.0, route: Route::Quadrature });
    }
    let d = from_rational(wp, &spec.d);
    let c = from_rational(wp, &spec.c);
    let pr = Params { delta: Float::with_val(wp, &params.delta), sigma: Float::with_val(wp, &params.sigma) };
    let omega = pr.omega(spec);
    let lam = Float::with_val(wp, &omega * l);
    // exponent (2 + i l c) / d
    let expo = HPComplex::new(Float::with_val(wp, 2u32) / &d, Float::with_val(wp, &c * l) / &d);
    let kernel = |w: &HPComplex| -> HPComplex {
        let ph = HPComplex::new(Float::with_val(wp, &w.im * &lam), -Float::with_val(wp, &w.re * &lam));
        let lc = w.scale(&d).log_cosh();
        (&ph - &(&expo * &lc)).exp()
    };
    let mut opts = QuadOptions::new(wp, cfg.quadrature_rel_tol);
    let r = if l == 0 {
        // the average may vanish (sigma = sigma*), so the tolerance is relative to the forcing size
        opts.abs_tol = cfg.quadrature_rel_tol * forcing.magnitude();
        opts.h0 = (0.5 / d.to_f64()).min(0.5);
        integrate(&Range::Line, &opts, |t: &Float| {
            let w = HPComplex::from_real(t.clone());
            Ok(&forcing.eval(&w) * &kernel(&w))
        })?
    } else {
        opts.abs_tol = cfg.quadrature_rel_tol * forcing.magnitude() * 1e-30;
        let rho = cfg.contour_shift_rho.unwrap_or_else(|| default_rho(spec, &forcing));
        let eta = (rho / (omega.to_f64() * l.unsigned_abs() as f64)).min(std::f64::consts::FRAC_PI_4);
        let path = BentContour::new(wp, &d, eta, l.signum());
        opts.h0 = path.half_width().min(0.5);
        integrate(&Range::Line, &opts, |t: &Float| {
            let (w, dw) = path.point(t);
            Ok(&(&forcing.eval(&w) * &kernel(&w)) * &dw)
        })?
    };
    Ok(MelnikovValue { value: r.value.with_prec(cfg.precision_bits), error: r.error, route: Route::Quadrature })
}

/// The same coefficient as a finite sum of Beta-function closed forms:
/// `sum C_{a,n} I(n, a + n - 1 + 2/d, c/d, alpha/delta, d, l)`.
pub fn upsilon0_gamma_series(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    l: i32,
    cfg: &ScalarConfig,
) -> Result<MelnikovValue> {
    cfg.validate()?;
    params.validate(spec)?;
    let wp = working(cfg);
    let forcing = ModeForcing::new(spec, series, params, l, wp);
    let d = from_rational(wp, &spec.d);
    let cc = from_rational(wp, &(Rational::from(&spec.c / &spec.d)));
    let pr = Params { delta: Float::with_val(wp, &params.delta), sigma: Float::with_val(wp, &params.sigma) };
    let omega = pr.omega(spec);
    let two_over_d = Float::with_val(wp, 2u32) / &d;
    let mut acc = HPComplex::zero(wp);
    let mut size = 0.0f64;
    for (a, n, coef) in &forcing.entries {
        let q = Float::with_val(wp, &two_over_d + (*a as i32 + *n as i32 - 1));
        let key = IIntegralKey::new(*n, q, cc.clone(), omega.clone(), d.clone(), l)?;
        let term = coef * &i_closed(&key)?;
        size += term.abs_f64();
        acc += &term;
    }
    let error = size * 2f64.powi(-(cfg.precision_bits as i32) + 8);
    Ok(MelnikovValue { value: acc.with_prec(cfg.precision_bits), error, route: Route::GammaSeries })
}

/// Borel transform of a finite sum `sum coef_j w^{E_j}`, evaluated at `zeta`:
/// each `w^E` maps to `zeta^{E-1} / Gamma(E)`.
pub fn borel_transform(terms: &[(HPComplex, HPComplex)], zeta: &Float) -> Result<HPComplex> {
    let prec = zeta.prec();
    if !(*zeta > 0) {
        return Err(Error::Domain("Borel transform evaluated at non-positive zeta".into()));
    }
    let lz = HPComplex::from_real(Float::with_val(prec, zeta.ln_ref()));
    let mut acc = HPComplex::zero(prec);
    for (e, c) in terms {
        let mut em1 = e.clone();
        em1.re -= 1u32;
        let t = &(&(&lz * &em1).exp() / &gamma(e)?) * c;
        acc += &t;
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BorelConstant {
    /// `C = C1 - i C2 = (4 pi / d) m_hat^{[1]}(alpha0 / d)`.
    pub constant: HPComplex,
    pub c1: Float,
    pub c2: Float,
    pub m_hat: HPComplex,
    pub terms_used: usize,
    /// Zero: the coefficient tables are finite, so the Borel sum is exact.
    pub truncation_bound: f64,
}

/// Mode `1` of `m(w, theta) = S w^{1 + 2/d + i c/d} (F~ - i S h)` at `(S w cos, S w sin, -i w)`, as
/// `(exponent, coefficient)` pairs. Only homogeneous terms `k + m + n = q` survive.
pub fn inner_mode_one_terms(spec: &ModelSpec, series: &PerturbationSeries, prec: u32) -> Vec<(HPComplex, HPComplex)> {
    let s = spec.amplitude(prec);
    let d = from_rational(prec, &spec.d);
    let shift_re = Float::with_val(prec, 2u32) / &d + 1u32;
    let shift_im = from_rational(prec, &spec.c) / &d;
    let mut out: Vec<(HPComplex, HPComplex)> = Vec::new();
    for t in series.terms().iter().filter(|t| t.k + t.m + t.n == t.q) {
        let (re, im) = match t.component {
            Component::F => mode_coefficient(t.k + 1, t.m, 1),
            Component::G => mode_coefficient(t.k, t.m + 1, 1),
            Component::H => mode_coefficient(t.k, t.m, 1),
        };
        if re == 0 && im == 0 {
            continue;
        }
        let mut coef = HPComplex::new(from_rational(prec, &re), from_rational(prec, &im));
        coef = coef.scale(&from_rational(prec, &t.value));
        coef = coef.scale(&Float::with_val(prec, (&s).pow(t.k + t.m + 1)));
        if t.component == Component::H {
            // -i S
            coef = coef.mul_i().scale(&Float::with_val(prec, -&s));
        }
        coef = &coef * &HPComplex::from_f64(prec, 0.0, -1.0).powi(t.n as i64);
        let e = HPComplex::new(Float::with_val(prec, &shift_re + t.q), shift_im.clone());
        match out.iter_mut().find(|(ee, _)| *ee == e) {
            Some((_, c)) => *c += &coef,
            None => out.push((e, coef)),
        }
    }
    out.retain(|(_, c)| !c.is_zero());
    out
}

pub fn borel_constant(spec: &ModelSpec, series: &PerturbationSeries, cfg: &ScalarConfig) -> Result<BorelConstant> {
    spec.validate()?;
    let prec = cfg.precision_bits;
    let wp = prec + 24;
    let terms = inner_mode_one_terms(spec, series, wp);
    let d = from_rational(wp, &spec.d);
    let zeta = from_rational(wp, &spec.alpha0) / &d;
    let m_hat = borel_transform(&terms, &zeta)?;
    let k = Float::with_val(wp, Constant::Pi) * 4u32 / &d;
    let constant = m_hat.scale(&k).with_prec(prec);
    let c1 = constant.re.clone();
    let c2 = Float::with_val(prec, -&constant.im);
    Ok(BorelConstant { constant, c1, c2, m_hat: m_hat.with_prec(prec), terms_used: terms.len(), truncation_bound: 0.0 })
}

/// Leading asymptotic of `Upsilon_0^{[1]}`:
/// `delta^{p - 2/d - i c/d} e^{-alpha pi / (2 d delta)} C / 2`.
pub fn upsilon1_asymptotic(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    cfg: &ScalarConfig,
) -> Result<MelnikovValue> {
    let prec = cfg.precision_bits;
    let wp = prec + 24;
    let bc = borel_constant(spec, series, &ScalarConfig { precision_bits: wp, ..cfg.clone() })?;
    let pr = Params { delta: Float::with_val(wp, &params.delta), sigma: Float::with_val(wp, &params.sigma) };
    let d = from_rational(wp, &spec.d);
    let alpha = pr.alpha(spec);
    let p = from_rational(wp, &spec.p);
    let expo = HPComplex::new(p - Float::with_val(wp, 2u32) / &d, -(from_rational(wp, &spec.c) / &d));
    let ld = HPComplex::from_real(Float::with_val(wp, pr.delta.ln_ref()));
    let mut e = (&ld * &expo).exp();
    let pi = Float::with_val(wp, Constant::Pi);
    let decay = Float::with_val(wp, &alpha * &pi) / (Float::with_val(wp, &d * &pr.delta) * 2u32);
    e = e.scale(&(-decay).exp());
    let v = (&e * &bc.constant).scale_f64(0.5);
    Ok(MelnikovValue { value: v.with_prec(prec), error: 0.0, route: Route::Asymptotic })
}

fn cosh_pow_2_over_d(d: &Float, u: &Float) -> Float {
    let p = u.prec().max(d.prec());
    let ch = Float::with_val(p, Float::with_val(p, u * d).cosh_ref());
    let e = Float::with_val(p, 2u32) / d;
    ch.pow(&e)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealValue {
    pub value: Float,
    pub error: f64,
}

/// Phase-shifted forcing `F(0)(w, theta - (eta(w) - eta(u)) / delta) / cosh^{2/d}(d w)` with
/// `eta(w) = alpha w + delta (c/d) log cosh(d w)`.
struct PointIntegrand<'a> {
    vf: VectorField,
    spec: &'a ModelSpec,
    params: Params,
    theta: Float,
    u: Float,
    omega: Float,
    c_over_d: Float,
    d: Float,
    lc_u: Float,
}

impl<'a> PointIntegrand<'a> {
    fn new(spec: &'a ModelSpec, series: &PerturbationSeries, params: &Params, u: &Float, theta: &Float, wp: u32) -> Result<Self> {
        let vf = VectorField::compile(spec, series, params, wp)?;
        let pr = Params { delta: Float::with_val(wp, &params.delta), sigma: Float::with_val(wp, &params.sigma) };
        let d = from_rational(wp, &spec.d);
        let omega = pr.omega(spec);
        let c_over_d = from_rational(wp, &(Rational::from(&spec.c / &spec.d)));
        let lc_u = Float::with_val(wp, Float::with_val(wp, u * &d).cosh_ref()).ln();
        Ok(PointIntegrand {
            vf,
            spec,
            params: pr,
            theta: Float::with_val(wp, theta),
            u: Float::with_val(wp, u),
            omega,
            c_over_d,
            d,
            lc_u,
        })
    }

    fn eval(&self, w: &Float) -> Result<Float> {
        let p = self.vf.prec;
        let ch = Float::with_val(p, Float::with_val(p, w * &self.d).cosh_ref());
        let lc = Float::with_val(p, ch.ln_ref());
        let mut th = Float::with_val(p, &self.theta - Float::with_val(p, &self.omega * Float::with_val(p, w - &self.u)));
        th -= Float::with_val(p, &self.c_over_d * Float::with_val(p, &lc - &self.lc_u));
        let f = forcing_f0_with(&self.vf, self.spec, &self.params, w, &th)?;
        let e = Float::with_val(p, 2u32) / &self.d;
        Ok(f / ch.pow(&e))
    }

    /// Node spacing that resolves the fastest mode, with exponential convergence from there.
    fn step(&self, max_mode: u32) -> f64 {
        let a = std::f64::consts::FRAC_PI_4 / self.d.to_f64();
        let bits = self.vf.prec as f64 * std::f64::consts::LN_2;
        let h = 2.0 * std::f64::consts::PI * a / (bits + self.omega.to_f64() * max_mode as f64 * a);
        (4.0 * h).min(0.5)
    }
}

fn max_mode(series: &PerturbationSeries) -> u32 {
    series.terms().iter().map(|t| t.k + t.m + 1).max().unwrap_or(1)
}

fn natural_scale(spec: &ModelSpec, params: &Params) -> f64 {
    params.delta_pow(spec, 3).to_f64()
}

/// `M(u, theta) = cosh^{2/d}(d u) int F(0)(w, theta - (eta(w) - eta(u))/delta) / cosh^{2/d}(d w) dw` on the real line.
pub fn melnikov_pointwise(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    u: &Float,
    theta: &Float,
    cfg: &ScalarConfig,
) -> Result<RealValue> {
    cfg.validate()?;
    let wp = working(cfg);
    let ig = PointIntegrand::new(spec, series, params, u, theta, wp)?;
    let mut opts = QuadOptions::new(wp, cfg.quadrature_rel_tol);
    opts.h0 = ig.step(max_mode(series));
    opts.min_level = 2;
    opts.abs_tol = cfg.quadrature_rel_tol * natural_scale(spec, params);
    let r = integrate(&Range::LineTrapezoid, &opts, |w: &Float| ig.eval(w))?;
    let k = cosh_pow_2_over_d(&ig.d, &ig.u);
    Ok(RealValue { value: Float::with_val(cfg.precision_bits, &r.value * &k), error: r.error * k.to_f64() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphCorrection {
    pub value: Float,
    pub error: f64,
    /// `|r10| <= 100 delta^{p+3} cosh^{-3}(d u)`.
    pub within_bound: bool,
}

/// First-order correction of the graph of the unstable (`int_{-inf}^u`) or stable (`-int_u^{inf}`) manifold,
/// times `cosh^{2/d}(d u)`.
pub fn r10_graph(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    branch: Branch,
    u: &Float,
    theta: &Float,
    cfg: &ScalarConfig,
) -> Result<GraphCorrection> {
    cfg.validate()?;
    let wp = working(cfg);
    let ig = PointIntegrand::new(spec, series, params, u, theta, wp)?;
    let mut opts = QuadOptions::new(wp, cfg.quadrature_rel_tol);
    opts.h0 = ig.step(max_mode(series));
    opts.min_level = 2;
    opts.abs_tol = cfg.quadrature_rel_tol * natural_scale(spec, params);
    let range = match branch {
        Branch::Unstable => Range::Below(ig.u.clone()),
        Branch::Stable => Range::Above(ig.u.clone()),
    };
    let r = integrate(&range, &opts, |w: &Float| ig.eval(w))?;
    let k = cosh_pow_2_over_d(&ig.d, &ig.u);
    let mut value = Float::with_val(cfg.precision_bits, &r.value * &k);
    if branch == Branch::Stable {
        value = -value;
    }
    let du = Float::with_val(wp, &ig.u * &ig.d);
    let bound = natural_scale(spec, params) * 100.0 / du.cosh().to_f64().powi(3);
    let within_bound = value.to_f64().abs() <= bound;
    Ok(GraphCorrection { value, error: r.error * k.to_f64(), within_bound })
}

/// `cosh^{2/d}(d u) [ Upsilon^{[0]} + delta^{p - 2/d} e^{-alpha pi/(2 d delta)} (C1 cos(theta + vartheta) + C2 sin(theta + vartheta)) ]`
/// with `vartheta = alpha u / delta + (c/d)(log cosh(d u) - log delta)`.
pub fn melnikov_asymptotic(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    u: &Float,
    theta: &Float,
    cfg: &ScalarConfig,
) -> Result<Float> {
    let prec = cfg.precision_bits;
    let wp = prec + 24;
    let avg = upsilon0_quadrature(spec, series, params, 0, cfg)?;
    let bc = borel_constant(spec, series, &ScalarConfig { precision_bits: wp, ..cfg.clone() })?;
    let pr = Params { delta: Float::with_val(wp, &params.delta), sigma: Float::with_val(wp, &params.sigma) };
    let d = from_rational(wp, &spec.d);
    let alpha = pr.alpha(spec);
    let u = Float::with_val(wp, u);
    let lc = Float::with_val(wp, Float::with_val(wp, &u * &d).cosh_ref()).ln();
    let ld = Float::with_val(wp, pr.delta.ln_ref());
    let mut ph = Float::with_val(wp, theta) + Float::with_val(wp, &alpha * &u) / &pr.delta;
    ph += from_rational(wp, &(Rational::from(&spec.c / &spec.d))) * (lc - ld);
    let (s, c) = ph.sin_cos(Float::new(wp));
    let osc = c * &bc.c1 + s * &bc.c2;
    let pi = Float::with_val(wp, Constant::Pi);
    let decay = (-(Float::with_val(wp, &alpha * &pi) / (Float::with_val(wp, &d * &pr.delta) * 2u32))).exp();
    let pw = Float::with_val(wp, (&pr.delta).pow(from_rational(wp, &spec.p) - Float::with_val(wp, 2u32) / &d));
    let total = Float::with_val(wp, &avg.value.re) + osc * decay * pw;
    Ok(Float::with_val(prec, total * cosh_pow_2_over_d(&d, &u)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AverageIJ {
    /// `I = ((d+1)/b) int cosh^{-2/d-2}(d w) dw`.
    pub i: Float,
    /// `J = delta^{-(p+3)} int [F(0)^{[0]} + ((d+1)/b) Z0 H(0)^{[0]}] / cosh^{2/d}(d w) dw`.
    pub j: Float,
    pub j_error: f64,
}

/// `I` in closed form: `S^2 sqrt(pi) Gamma(1/d + 1) / (d Gamma(1/d + 3/2))`.
pub fn average_i(spec: &ModelSpec, prec: u32) -> Float {
    let d = from_rational(prec, &spec.d);
    let s2 = from_rational(prec, &((&spec.d + Rational::from(1)) / &spec.b));
    let inv = Float::with_val(prec, d.recip_ref());
    let g1 = Float::with_val(prec, &inv + 1u32).gamma();
    let g2 = Float::with_val(prec, &inv + 1.5f64).gamma();
    let sp = Float::with_val(prec, Constant::Pi).sqrt();
    s2 * sp * g1 / (g2 * d)
}

pub fn average_ij(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    delta: &Float,
    cfg: &ScalarConfig,
) -> Result<AverageIJ> {
    let prec = cfg.precision_bits;
    let params = Params::new(spec, Float::with_val(prec, delta), Float::new(prec))?;
    let v = upsilon0_quadrature(spec, series, &params, 0, cfg)?;
    let scale = params.delta_pow(spec, 3);
    let j = Float::with_val(prec, &v.value.re / &scale);
    Ok(AverageIJ { i: average_i(spec, prec), j, j_error: v.error / scale.to_f64() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaStar {
    pub sigma: Float,
    pub seed: Float,
    /// `|Upsilon_0^{[0]}(sigma)|` re-evaluated at the returned root.
    pub residual: Float,
    pub iterations: u32,
}

/// Dissipation `sigma*` that cancels the Melnikov average `Upsilon_0^{[0]} = sigma I + delta^{p+3} J`.
pub fn sigma_star(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    delta: &Float,
    cfg: &ScalarConfig,
    tol: f64,
) -> Result<SigmaStar> {
    let prec = cfg.precision_bits;
    let delta = Float::with_val(prec, delta);
    let zero_params = Params::new(spec, delta.clone(), Float::new(prec))?;
    if spec.conservative {
        let v = upsilon0_quadrature(spec, series, &zero_params, 0, cfg)?;
        return Ok(SigmaStar { sigma: Float::new(prec), seed: Float::new(prec), residual: v.value.abs(), iterations: 0 });
    }
    let ij = average_ij(spec, series, &delta, cfg)?;
    let scale = zero_params.delta_pow(spec, 3);
    let seed = -Float::with_val(prec, &ij.j / &ij.i) * &scale;
    let eval = |s: &Float| -> Result<Float> {
        let params = Params::new(spec, delta.clone(), s.clone())?;
        Ok(upsilon0_quadrature(spec, series, &params, 0, cfg)?.value.re)
    };
    // secant from the seed and a nearby point; the map is affine in sigma so this converges at once
    let width = Float::with_val(prec, seed.abs_ref()).max(&scale) / 16u32;
    let mut s0 = Float::with_val(prec, &seed - &width);
    let mut s1 = seed.clone();
    let mut f0 = eval(&s0)?;
    let mut f1 = eval(&s1)?;
    let mut it = 0u32;
    let target = |s: &Float| {
        Float::with_val(prec, Float::with_val(prec, s.abs_ref()) * &ij.i)
            + Float::with_val(prec, ij.j.abs_ref()) * &scale
    };
    while it < 40 {
        if Float::with_val(prec, f1.abs_ref()) <= Float::with_val(prec, target(&s1) * tol) || f1.is_zero() {
            return Ok(SigmaStar { sigma: s1, seed, residual: f1.abs(), iterations: it });
        }
        let df = Float::with_val(prec, &f1 - &f0);
        if df.is_zero() {
            break;
        }
        let s2 = Float::with_val(prec, &s1 - Float::with_val(prec, &f1 * Float::with_val(prec, &s1 - &s0)) / &df);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = eval(&s1)?;
        it += 1;
    }
    Err(Error::Convergence { what: "sigma* root finding", detail: format!("residual {:e}", f1.to_f64()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hp::dec;
    use crate::model::{test_system_c, test_system_d};

    const P: u32 = 192;

    fn cfg() -> ScalarConfig {
        ScalarConfig::new(P, 1e-35).unwrap()
    }

    #[test]
    fn routes_agree_for_test_system_c() {
        let (spec, series) = test_system_c();
        let params = Params::new(&spec, dec(P, "0.2"), Float::new(P)).unwrap();
        let a = upsilon0_quadrature(&spec, &series, &params, 1, &cfg()).unwrap();
        let b = upsilon0_gamma_series(&spec, &series, &params, 1, &cfg()).unwrap();
        let e = (&a.value - &b.value).abs_f64() / b.value.abs_f64();
        assert!(e < 1e-30, "{e:e}");
        // hand value -0.0011809 i
        assert!(b.value.re.to_f64().abs() < 1e-40);
        assert!((b.value.im.to_f64() + 0.0011809).abs() < 1e-7);
    }

    #[test]
    fn borel_constant_of_test_system_c() {
        let (spec, series) = test_system_c();
        let bc = borel_constant(&spec, &series, &cfg()).unwrap();
        // -i 7 pi sqrt 2 / 120
        let expect = 7.0 * std::f64::consts::PI * 2f64.sqrt() / 120.0;
        assert!(bc.c1.to_f64().abs() < 1e-50);
        assert!((bc.c2.to_f64() - expect).abs() < 1e-15);
    }

    #[test]
    fn borel_constant_vanishes_for_test_system_d() {
        let (spec, series) = test_system_d();
        let bc = borel_constant(&spec, &series, &cfg()).unwrap();
        assert!(bc.constant.is_zero());
        assert_eq!(bc.terms_used, 0);
    }

    #[test]
    fn borel_of_single_monomial() {
        // w^{2 + i c} -> zeta^{1 + i c} / Gamma(2 + i c)
        let e = HPComplex::from_f64(P, 2.0, 0.5);
        let one = HPComplex::one(P);
        let z = Float::with_val(P, 1.5);
        let v = borel_transform(&[(e.clone(), one)], &z).unwrap();
        let mut em1 = e.clone();
        em1.re -= 1u32;
        let expect = &HPComplex::from_real(z.clone()).pow(&em1).unwrap() / &gamma(&e).unwrap();
        assert!((&v - &expect).abs_f64() < 1e-50);
    }

    #[test]
    fn averages_of_test_system_d() {
        let (spec, series) = test_system_d();
        let ij = average_ij(&spec, &series, &dec(P, "0.1"), &cfg()).unwrap();
        assert!((ij.i.to_f64() - 8.0 / 3.0).abs() < 1e-14);
        assert!((ij.j.to_f64() - 0.8).abs() < 1e-14);
        let s = sigma_star(&spec, &series, &dec(P, "0.1"), &cfg(), 1e-25).unwrap();
        assert!((s.sigma.to_f64() + 0.3e-3).abs() < 1e-17);
    }

    #[test]
    fn zero_series_has_zero_sigma_star() {
        let (spec, _) = test_system_d();
        let zero = PerturbationSeries::new(3);
        let s = sigma_star(&spec, &zero, &dec(P, "0.1"), &cfg(), 1e-25).unwrap();
        assert!(s.sigma.is_zero());
    }
}
