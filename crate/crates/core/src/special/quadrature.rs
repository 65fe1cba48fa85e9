//! Double-exponential trapezoidal quadrature with level doubling.

use rug::Float;

use crate::error::{Error, Result};
use crate::hp::HPComplex;

/// Values that can be accumulated by the quadrature.
pub trait QuadValue: Clone {
    fn zero_like(prec: u32) -> Self;
    fn add_scaled(&mut self, v: &Self, w: &Float);
    fn halve(&mut self);
    fn magnitude(&self) -> f64;
    fn distance(&self, other: &Self) -> f64;
}

impl QuadValue for Float {
    fn zero_like(prec: u32) -> Self {
        Float::new(prec)
    }
    fn add_scaled(&mut self, v: &Self, w: &Float) {
        *self += v * w;
    }
    fn halve(&mut self) {
        *self /= 2u32;
    }
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
    fn distance(&self, other: &Self) -> f64 {
        Float::with_val(self.prec(), self - other).to_f64().abs()
    }
}

impl QuadValue for HPComplex {
    fn zero_like(prec: u32) -> Self {
        HPComplex::zero(prec)
    }
    fn add_scaled(&mut self, v: &Self, w: &Float) {
        self.re += &v.re * w;
        self.im += &v.im * w;
    }
    fn halve(&mut self) {
        self.re /= 2u32;
        self.im /= 2u32;
    }
    fn magnitude(&self) -> f64 {
        self.abs_f64()
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs_f64()
    }
}

/// Integration range and the change of variables used on it.
#[derive(Clone, Debug)]
pub enum Range {
    /// The whole real line, mapped by `x = sinh(t)`.
    Line,
    /// The whole real line with the identity map; suited to oscillatory integrands
    /// whose tails decay exponentially.
    LineTrapezoid,
    /// `[a, +inf)`, mapped by `x = a + log(1 + exp(t - exp(-t)))`: double-exponential
    /// clustering at `a`, unit node spacing at infinity.
    Above(Float),
    /// `(-inf, a]`, mirror image of `Above`.
    Below(Float),
}

impl Range {
    fn default_t_max(&self) -> f64 {
        match self {
            Range::Line => 12.0,
            _ => 2000.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadOptions {
    pub prec: u32,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Coarsest step in the transformed variable.
    pub h0: f64,
    pub min_level: u32,
    pub max_level: u32,
    /// Largest |t| in the transformed variable; `None` uses the range's default.
    pub t_max: Option<f64>,
}

impl QuadOptions {
    pub fn new(prec: u32, rel_tol: f64) -> Self {
        QuadOptions { prec, rel_tol, abs_tol: 0.0, h0: 0.5, min_level: 3, max_level: 16, t_max: None }
    }
}

#[derive(Clone, Debug)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub levels: u32,
    pub evaluations: usize,
}

struct Node {
    x: Float,
    w: Float,
}

fn node(range: &Range, t: &Float, prec: u32) -> Node {
    match range {
        Range::Line => {
            let (s, c) = t.clone().sinh_cosh(Float::new(prec));
            Node { x: s, w: c }
        }
        Range::LineTrapezoid => Node { x: t.clone(), w: Float::with_val(prec, 1) },
        Range::Above(a) | Range::Below(a) => {
            // g = log(1 + exp(v)), v = t - exp(-t); g' = (1 + exp(-t)) / (1 + exp(-v))
            let e = Float::with_val(prec, -t).exp();
            let v = Float::with_val(prec, t - &e);
            let g = if v > 0 {
                Float::with_val(prec, -&v).exp().ln_1p() + &v
            } else {
                Float::with_val(prec, v.exp_ref()).ln_1p()
            };
            let ev = Float::with_val(prec, -&v).exp();
            let w = Float::with_val(prec, Float::with_val(prec, 1) + &e) / (ev + 1u32);
            let x = if matches!(range, Range::Above(_)) {
                Float::with_val(prec, a + &g)
            } else {
                Float::with_val(prec, a - &g)
            };
            Node { x, w }
        }
    }
}

/// Integrates `f` over `range`. Fails with `Error::Accuracy` if the requested tolerance is not met.
pub fn integrate<T, F>(range: &Range, opts: &QuadOptions, mut f: F) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: FnMut(&Float) -> Result<T>,
{
    let prec = opts.prec;
    let mut evals = 0usize;
    let mut eval = |t: &Float, evals: &mut usize| -> Result<T> {
        let nd = node(range, t, prec);
        *evals += 1;
        let v = f(&nd.x)?;
        let mut out = T::zero_like(prec);
        out.add_scaled(&v, &nd.w);
        if !out.magnitude().is_finite() {
            return Err(Error::Domain(format!("integrand not finite at x = {}", nd.x.to_f64())));
        }
        Ok(out)
    };

    // Level 0: walk outwards until the terms are negligible against the running peak.
    let h0 = Float::with_val(prec, opts.h0);
    let cutoff_rel = 2f64.powi(-(prec as i32) - 8).max(1e-300);
    let mut sum0 = eval(&Float::new(prec), &mut evals)?;
    let mut peak = sum0.magnitude();
    let mut j_bounds = [0i64; 2];
    let j_cap = (opts.t_max.unwrap_or(range.default_t_max()) / opts.h0).ceil() as i64;
    for (side, sign) in [(0usize, -1i64), (1usize, 1i64)] {
        let mut small = 0;
        let mut j = 0i64;
        while j < j_cap {
            j += 1;
            let t = Float::with_val(prec, &h0 * (sign * j));
            let v = eval(&t, &mut evals)?;
            let m = v.magnitude();
            peak = peak.max(m);
            let one = Float::with_val(prec, 1);
            sum0.add_scaled(&v, &one);
            if m <= cutoff_rel * peak {
                small += 1;
                if small >= 4 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        j_bounds[side] = j;
    }
    let (jl, jr) = (j_bounds[0], j_bounds[1]);
    let mut raw = sum0;
    let mut prev = T::zero_like(prec);
    prev.add_scaled(&raw, &h0);
    let mut err = f64::INFINITY;
    let mut h = h0.clone();
    let mut level = 0u32;
    while level < opts.max_level {
        level += 1;
        h /= 2u32;
        // new nodes sit at odd multiples of h, inside the level-0 window
        let mut odd = T::zero_like(prec);
        let one = Float::with_val(prec, 1);
        let lo = -(jl << level);
        let hi = jr << level;
        let mut k = lo + 1;
        while k < hi {
            let t = Float::with_val(prec, &h * k);
            let v = eval(&t, &mut evals)?;
            odd.add_scaled(&v, &one);
            k += 2;
        }
        // raw holds the sum over all nodes of the previous level (unit weights)
        raw.add_scaled(&odd, &one);
        let mut cur = T::zero_like(prec);
        cur.add_scaled(&raw, &h);
        err = cur.distance(&prev);
        let tol = (opts.rel_tol * cur.magnitude()).max(opts.abs_tol);
        prev = cur;
        if level >= opts.min_level && err <= tol {
            return Ok(QuadResult { value: prev, error: err, levels: level, evaluations: evals });
        }
    }
    Err(Error::Accuracy { achieved: err / prev.magnitude().max(f64::MIN_POSITIVE), requested: opts.rel_tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::float::Constant;

    const P: u32 = 200;

    #[test]
    fn gaussian_on_line() {
        let opts = QuadOptions::new(P, 1e-50);
        let r = integrate(&Range::Line, &opts, |x: &Float| Ok((-Float::with_val(P, x.square_ref())).exp())).unwrap();
        let sqrt_pi = Float::with_val(P, Constant::Pi).sqrt();
        let e = (Float::with_val(P, &r.value - &sqrt_pi)).abs().to_f64();
        assert!(e < 1e-50, "{e:e}");
    }

    #[test]
    fn sech_squared_half_lines() {
        // int_0^inf sech^2 = 1 and int_{-inf}^0 sech^2 = 1
        let opts = QuadOptions::new(P, 1e-45);
        let f = |x: &Float| Ok(Float::with_val(P, x.cosh_ref()).square().recip());
        let a = integrate(&Range::Above(Float::new(P)), &opts, f).unwrap();
        let b = integrate(&Range::Below(Float::new(P)), &opts, f).unwrap();
        assert!((a.value.to_f64() - 1.0).abs() < 1e-40);
        assert!((Float::with_val(P, &b.value - 1u32)).abs().to_f64() < 1e-44);
    }

    #[test]
    fn oscillatory_fourier_transform() {
        // int e^{-i w x} sech(x) dx = pi sech(pi w / 2)
        let w = 6.0;
        let mut opts = QuadOptions::new(P, 1e-40);
        opts.h0 = 0.125;
        let r = integrate(&Range::Line, &opts, |x: &Float| {
            let ph = Float::with_val(P, x * -w);
            let mut z = HPComplex::polar(&Float::with_val(P, 1), &ph);
            z *= &Float::with_val(P, x.cosh_ref()).recip();
            Ok(z)
        })
        .unwrap();
        let pi = Float::with_val(P, Constant::Pi);
        let exact = Float::with_val(P, &pi / Float::with_val(P, &pi * (w / 2.0)).cosh());
        assert!((Float::with_val(P, &r.value.re - &exact)).abs().to_f64() < 1e-40 * exact.to_f64());
        assert!(r.value.im.to_f64().abs() < 1e-40);
    }

    #[test]
    fn oscillatory_half_line() {
        // int_0^inf e^{-x} cos(20 x) dx = 1 / 401
        let mut opts = QuadOptions::new(P, 1e-40);
        opts.h0 = 0.05;
        let r = integrate(&Range::Above(Float::new(P)), &opts, |x: &Float| {
            Ok(Float::with_val(P, -x).exp() * Float::with_val(P, x * 20u32).cos())
        })
        .unwrap();
        let exact = Float::with_val(P, 1) / 401u32;
        assert!((Float::with_val(P, &r.value - &exact)).abs().to_f64() < 1e-42);
        let below = integrate(&Range::Below(Float::new(P)), &opts, |x: &Float| {
            Ok(Float::with_val(P, x.clone()).exp() * Float::with_val(P, x * 20u32).cos())
        })
        .unwrap();
        assert!((Float::with_val(P, &below.value - &exact)).abs().to_f64() < 1e-42);
    }

    #[test]
    fn trapezoid_on_line() {
        let mut opts = QuadOptions::new(P, 1e-40);
        opts.h0 = 0.25;
        let r = integrate(&Range::LineTrapezoid, &opts, |x: &Float| {
            Ok(Float::with_val(P, x.cosh_ref()).recip() * Float::with_val(P, x * 3u32).cos())
        })
        .unwrap();
        let pi = Float::with_val(P, Constant::Pi);
        let exact = Float::with_val(P, &pi / Float::with_val(P, &pi * 1.5f64).cosh());
        assert!((Float::with_val(P, &r.value - &exact)).abs().to_f64() < 1e-42);
    }

    #[test]
    fn reports_failure_when_levels_run_out() {
        let mut opts = QuadOptions::new(P, 1e-60);
        opts.max_level = 2;
        let r = integrate(&Range::Line, &opts, |x: &Float| Ok(Float::with_val(P, x.cosh_ref()).recip()));
        assert!(matches!(r, Err(Error::Accuracy { .. })));
    }
}
