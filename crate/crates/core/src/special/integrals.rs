//! The integrals
//! `I(n, Q, C, omega, d, l) = int_R e^{-i omega l s} sinh^n(d s) / cosh^{Q + 1 + i C l}(d s) ds`
//! by quadrature, Beta closed form plus recurrence, and the large-`omega` asymptotic.
//!
//! `l` is signed: `I(-l) = conj(I(l))` for real parameters.

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use super::gamma::gamma;
use super::quadrature::{integrate, QuadOptions, Range};
use crate::error::{Error, Result};
use crate::hp::{HPComplex, ScalarConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IIntegralKey {
    pub n: u32,
    pub q: Float,
    pub c: Float,
    pub omega: Float,
    pub d: Float,
    pub l: i32,
}

#[derive(Clone, Debug)]
pub struct IValue {
    pub value: HPComplex,
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct IBound {
    pub bound: Float,
    pub modulus: Float,
    pub holds: bool,
}

impl IIntegralKey {
    pub fn new(n: u32, q: Float, c: Float, omega: Float, d: Float, l: i32) -> Result<Self> {
        let key = IIntegralKey { n, q, c, omega, d, l };
        key.validate()?;
        Ok(key)
    }

    /// Convenience constructor from doubles at precision `prec`.
    pub fn from_f64(prec: u32, n: u32, q: f64, c: f64, omega: f64, d: f64, l: i32) -> Result<Self> {
        Self::new(
            n,
            Float::with_val(prec, q),
            Float::with_val(prec, c),
            Float::with_val(prec, omega),
            Float::with_val(prec, d),
            l,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0) {
            return Err(Error::InvalidInput("omega must be positive".into()));
        }
        if !(self.d > 0) {
            return Err(Error::InvalidInput("d must be positive".into()));
        }
        if !self.q.is_finite() || !self.c.is_finite() {
            return Err(Error::InvalidInput("Q and C must be finite".into()));
        }
        if !(Float::with_val(self.prec(), &self.q + 1u32) > self.n) {
            return Err(Error::Domain(format!(
                "integral diverges: need Q + 1 > n (Q = {}, n = {})",
                self.q.to_f64(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn prec(&self) -> u32 {
        self.q.prec().max(self.omega.prec())
    }

    fn shifted(&self, dn: u32, dq: u32) -> IIntegralKey {
        IIntegralKey {
            n: self.n - dn,
            q: Float::with_val(self.q.prec(), &self.q - dq),
            c: self.c.clone(),
            omega: self.omega.clone(),
            d: self.d.clone(),
            l: self.l,
        }
    }

    /// `Q + 1 + i C l`.
    fn exponent(&self, prec: u32) -> HPComplex {
        HPComplex::new(Float::with_val(prec, &self.q + 1u32), Float::with_val(prec, &self.c * self.l))
    }

    /// Distance `eta` (in units of `d s`) between the shifted contour and the pole at `-i pi / 2`.
    fn contour_eta(&self, cfg: &ScalarConfig) -> f64 {
        let d = self.d.to_f64();
        let q = self.q.to_f64();
        let rho = cfg.contour_shift_rho.unwrap_or(q.max(8.0) * d);
        let lam = self.omega.to_f64() * self.l.unsigned_abs() as f64;
        (rho / lam).min(std::f64::consts::FRAC_PI_4)
    }
}

/// Shifted and bent contour for `l != 0`:
/// `s(t) = t - i sgn(l) [ (pi/2 - eta)/d + sqrt(t^2 + T0^2) - T0 ]`, with `T0 = eta / d`.
/// It stays off the imaginary axis except at `t = 0`, so it avoids every zero of `cosh(d s)`.
pub(crate) struct BentContour {
    prec: u32,
    sgn: i32,
    phi: Float,
    t0: Float,
}

impl BentContour {
    pub(crate) fn new(prec: u32, d: &Float, eta: f64, sgn: i32) -> Self {
        let half_pi = Float::with_val(prec, Constant::Pi) / 2u32;
        let phi = Float::with_val(prec, (half_pi - eta) / d);
        let t0 = Float::with_val(prec, eta) / d;
        BentContour { prec, sgn, phi, t0 }
    }

    pub(crate) fn half_width(&self) -> f64 {
        self.t0.to_f64()
    }

    /// Returns `(s(t), s'(t))`.
    pub(crate) fn point(&self, t: &Float) -> (HPComplex, HPComplex) {
        let p = self.prec;
        let r = Float::with_val(p, Float::with_val(p, t.square_ref()) + Float::with_val(p, self.t0.square_ref())).sqrt();
        let mut depth = Float::with_val(p, &r - &self.t0);
        depth += &self.phi;
        let slope = Float::with_val(p, t / &r);
        if self.sgn > 0 {
            (HPComplex::new(t.clone(), -depth), HPComplex::new(Float::with_val(p, 1), -slope))
        } else {
            (HPComplex::new(t.clone(), depth), HPComplex::new(Float::with_val(p, 1), slope))
        }
    }
}

fn integrand(key: &IIntegralKey, s: &HPComplex, prec: u32) -> HPComplex {
    let ds = s.scale(&key.d);
    let lam = Float::with_val(prec, &key.omega * key.l);
    // e^{-i lam s}
    let ph = HPComplex::new(Float::with_val(prec, &s.im * &lam), -Float::with_val(prec, &s.re * &lam));
    let mut log_val = &ph - &(&key.exponent(prec) * &ds.log_cosh());
    if key.n > 0 {
        log_val += &ds.sinh().ln().scale_f64(key.n as f64);
    }
    log_val.exp()
}

/// Numerical quadrature. Real line for `l = 0`, otherwise the bent shifted contour.
pub fn i_quadrature(key: &IIntegralKey, cfg: &ScalarConfig) -> Result<IValue> {
    key.validate()?;
    cfg.validate()?;
    let prec = cfg.precision_bits;
    let wp = prec + 24;
    let mut opts = QuadOptions::new(wp, cfg.quadrature_rel_tol);
    let kk = IIntegralKey {
        n: key.n,
        q: Float::with_val(wp, &key.q),
        c: Float::with_val(wp, &key.c),
        omega: Float::with_val(wp, &key.omega),
        d: Float::with_val(wp, &key.d),
        l: key.l,
    };
    let r = if key.l == 0 {
        opts.h0 = (0.5 / key.d.to_f64()).min(0.5);
        integrate(&Range::Line, &opts, |t: &Float| {
            let s = HPComplex::from_real(t.clone());
            Ok(integrand(&kk, &s, wp))
        })?
    } else {
        let eta = key.contour_eta(cfg);
        let path = BentContour::new(wp, &kk.d, eta, key.l.signum());
        opts.h0 = path.half_width().min(0.5);
        integrate(&Range::Line, &opts, |t: &Float| {
            let (s, ds) = path.point(t);
            Ok(&integrand(&kk, &s, wp) * &ds)
        })?
    };
    Ok(IValue { value: r.value.with_prec(prec), error: r.error })
}

/// Beta closed form, valid for `n = 0` and `Q > -1`:
/// `2^{b-1} d^{-1} Gamma(b - a) Gamma(a) / Gamma(b)`, `b = Q + 1 + i C l`, `a = (b + i omega l / d) / 2`.
pub fn i_closed_beta(key: &IIntegralKey) -> Result<HPComplex> {
    key.validate()?;
    if key.n != 0 {
        return Err(Error::Precondition("Beta closed form needs n = 0".into()));
    }
    if !(key.q > -1) {
        return Err(Error::Domain("Beta closed form needs Q > -1".into()));
    }
    let prec = key.prec();
    let wp = prec + 32;
    let b = key.exponent(wp);
    let shift = Float::with_val(wp, Float::with_val(wp, &key.omega * key.l) / &key.d);
    let a = HPComplex::new(Float::with_val(wp, &b.re / 2u32), Float::with_val(wp, &b.im + &shift) / 2u32);
    let bma = &b - &a;
    let mut pw = b.clone();
    pw.re -= 1u32;
    let two = HPComplex::from_real(Float::with_val(wp, 2));
    let factor = two.pow(&pw)?;
    let g = &(&gamma(&bma)? * &gamma(&a)?) / &gamma(&b)?;
    let out = (&factor * &g).scale(&Float::with_val(wp, key.d.recip_ref()));
    Ok(out.with_prec(prec))
}

/// One recurrence step:
/// `I(n, Q) = -i l omega / (d (Q + i C l)) I(n-1, Q-1) + (n - 1)/(Q + i C l) I(n-2, Q-2)`.
/// `prev2` is ignored when `n = 1`.
pub fn i_recurrence(key: &IIntegralKey, prev1: &HPComplex, prev2: &HPComplex) -> Result<HPComplex> {
    key.validate()?;
    if key.n == 0 {
        return Err(Error::Precondition("recurrence needs n >= 1".into()));
    }
    let prec = key.prec();
    let beta = HPComplex::new(key.q.clone(), Float::with_val(prec, &key.c * key.l));
    if beta.is_zero() {
        return Err(Error::Domain("recurrence divides by Q + i C l = 0".into()));
    }
    let lw = Float::with_val(prec, Float::with_val(prec, &key.omega * key.l) / &key.d);
    let coef1 = &HPComplex::new(Float::new(prec), -lw) / &beta;
    let mut out = &coef1 * prev1;
    if key.n >= 2 {
        let coef2 = &HPComplex::from_real(Float::with_val(prec, key.n - 1)) / &beta;
        out += &(&coef2 * prev2);
    }
    Ok(out)
}

/// Beta closed form for the base case followed by the recurrence.
pub fn i_closed(key: &IIntegralKey) -> Result<HPComplex> {
    key.validate()?;
    match key.n {
        0 => i_closed_beta(key),
        1 => {
            let p1 = i_closed(&key.shifted(1, 1))?;
            i_recurrence(key, &p1, &HPComplex::zero(key.prec()))
        }
        _ => {
            let p1 = i_closed(&key.shifted(1, 1))?;
            let p2 = i_closed(&key.shifted(2, 2))?;
            i_recurrence(key, &p1, &p2)
        }
    }
}

/// Leading large-`omega` term from the nearest pole:
/// `(2 pi / d) (lam / d)^{Q + i C l} (-i)^n e^{-pi lam / (2 d)} / Gamma(Q + 1 + i C l)`, `lam = omega l`,
/// for `l > 0`, and its conjugate for `l < 0`.
pub fn i_asymptotic(key: &IIntegralKey) -> Result<HPComplex> {
    key.validate()?;
    if key.l == 0 {
        return Err(Error::Domain("no exponentially small asymptotic for l = 0".into()));
    }
    let prec = key.prec();
    let wp = prec + 32;
    let lpos = key.l.unsigned_abs();
    let pos = IIntegralKey { l: lpos as i32, ..key.clone() };
    let lam = Float::with_val(wp, &pos.omega * lpos);
    let ratio = HPComplex::from_real(Float::with_val(wp, &lam / &pos.d));
    let mut expo = pos.exponent(wp);
    expo.re -= 1u32;
    let pw = ratio.pow(&expo)?;
    let pi = Float::with_val(wp, Constant::Pi);
    let decay = Float::with_val(wp, -(Float::with_val(wp, &pi * &lam) / Float::with_val(wp, &pos.d * 2u32))).exp();
    let scale = Float::with_val(wp, &pi * 2u32) / &pos.d * decay;
    let mi = HPComplex::new(Float::new(wp), Float::with_val(wp, -1)).powi(pos.n as i64);
    let out = &(&pw * &mi).scale(&scale) / &gamma(&pos.exponent(wp))?;
    let out = out.with_prec(prec);
    Ok(if key.l > 0 { out } else { out.conj() })
}

/// Explicit majorant of `|I|` of the form `K omega^Q e^{-pi omega |l| / (2 d)}`, obtained on the
/// contour at distance `d / (omega |l|)` below the pole:
/// `e^{1 + |C l| pi / 2} e^{-pi omega |l| / (2 d)} int cosh^n(d t) (sinh^2(d t) + sin^2 eta)^{-(Q+1)/2} dt`.
pub fn i_bound_check(key: &IIntegralKey, value: &HPComplex, cfg: &ScalarConfig) -> Result<IBound> {
    key.validate()?;
    let prec = cfg.precision_bits;
    let wp = prec + 16;
    let d = Float::with_val(wp, &key.d);
    let q1 = Float::with_val(wp, &key.q + 1u32);
    let lam = Float::with_val(wp, &key.omega * key.l.unsigned_abs());
    let (pref, sin_eta) = if key.l == 0 {
        (Float::with_val(wp, 1), Float::with_val(wp, 1))
    } else {
        let eta = Float::with_val(wp, &d / &lam);
        if eta.to_f64() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain("bound needs omega |l| > 2 d / pi".into()));
        }
        let pi = Float::with_val(wp, Constant::Pi);
        let cl = Float::with_val(wp, &key.c * key.l).abs();
        let mut e = Float::with_val(wp, &cl * &pi) / 2u32 + 1u32;
        e -= Float::with_val(wp, &pi * &lam) / Float::with_val(wp, &d * 2u32);
        (e.exp(), eta.sin())
    };
    let s2 = Float::with_val(wp, sin_eta.square_ref());
    let mut opts = QuadOptions::new(wp, 1e-12);
    opts.h0 = (0.25 * sin_eta.to_f64() / key.d.to_f64()).min(0.5);
    let n = key.n;
    let r = integrate(&Range::Line, &opts, |t: &Float| {
        let dt = Float::with_val(wp, t * &d);
        let (sh, ch) = dt.sinh_cosh(Float::new(wp));
        let base = Float::with_val(wp, sh.square_ref()) + &s2;
        let mut v = Float::with_val(wp, (&ch).pow(n));
        v /= base.pow(Float::with_val(wp, &q1 / 2u32));
        Ok(v)
    })?;
    let bound = Float::with_val(prec, Float::with_val(wp, &r.value * (1.0 + 1e-10)) * &pref);
    let modulus = value.abs();
    let holds = modulus <= bound;
    Ok(IBound { bound, modulus, holds })
}
