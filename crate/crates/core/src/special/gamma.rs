//! Complex Gamma function: reflection, upward shift, then Stirling with a Bernoulli tail.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::hp::HPComplex;

fn bernoulli_cache() -> &'static Mutex<HashMap<u32, Arc<Vec<Float>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Vec<Float>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `B_2, B_4, ..., B_{2k}` at precision `prec`, from `B_{2k} = (-1)^{k+1} 2 (2k)! zeta(2k) / (2 pi)^{2k}`.
pub fn bernoulli_even(prec: u32, count: usize) -> Arc<Vec<Float>> {
    let mut cache = bernoulli_cache().lock().unwrap();
    if let Some(v) = cache.get(&prec) {
        if v.len() >= count {
            return v.clone();
        }
    }
    let wp = prec + 32;
    let two_pi = Float::with_val(wp, Constant::Pi) * 2u32;
    let out: Vec<Float> = (1..=count as u32)
        .map(|k| {
            let z = Float::with_val(wp, Float::zeta_u(2 * k));
            let f = Float::with_val(wp, Float::factorial(2 * k));
            let pw = Float::with_val(wp, (&two_pi).pow(2 * k));
            let mut b = z * f * 2u32 / pw;
            if k % 2 == 0 {
                b = -b;
            }
            Float::with_val(prec, b)
        })
        .collect();
    let arc = Arc::new(out);
    cache.insert(prec, arc.clone());
    arc
}

fn nonpositive_integer(z: &HPComplex) -> Option<i64> {
    if z.im.is_zero() && z.re.is_integer() && z.re <= 0 {
        return z.re.to_integer().and_then(|i| i.to_i64());
    }
    None
}

/// `ln Gamma(w)` by Stirling's series for `Re w` large; the branch may differ from the principal one by `2 pi i`.
fn ln_gamma_stirling(w: &HPComplex, wp: u32) -> Result<HPComplex> {
    let half = Float::with_val(wp, 0.5);
    let ln2pi = Float::with_val(wp, Float::with_val(wp, Constant::Pi) * 2u32).ln() / 2u32;
    let lw = w.ln();
    let wm = HPComplex::new(Float::with_val(wp, &w.re - &half), w.im.clone());
    let mut acc = &(&wm * &lw) - w;
    acc.re += &ln2pi;

    // Remainder after k terms is bounded by the next term times sec(arg/2)^{2k+2}.
    let half_arg = w.arg().to_f64() / 2.0;
    let sec2 = 1.0 / half_arg.cos().powi(2);
    let eps = 2f64.powi(-(wp as i32));
    let w2 = w * w;
    let mut wpow = w.clone();
    let mut bern = bernoulli_even(wp, 64);
    let mut k = 1usize;
    loop {
        if k > bern.len() {
            bern = bernoulli_even(wp, 2 * k);
        }
        let b = &bern[k - 1];
        let denom = Float::with_val(wp, (2 * k) * (2 * k - 1));
        let coef = Float::with_val(wp, b / &denom);
        let term = wpow.recip().scale(&coef);
        let size = term.abs_f64() * sec2.powi(k as i32 + 1);
        acc += &term;
        if size <= eps * acc.abs_f64().max(1.0) {
            return Ok(acc);
        }
        if k > 20 * wp as usize {
            return Err(Error::Convergence { what: "Stirling series", detail: format!("|w| = {}", w.abs_f64()) });
        }
        wpow = &wpow * &w2;
        k += 1;
    }
}

/// Complex Gamma function at the precision of `z`.
pub fn gamma(z: &HPComplex) -> Result<HPComplex> {
    let prec = z.prec();
    if !z.is_finite() {
        return Err(Error::Domain("Gamma of a non-finite argument".into()));
    }
    if let Some(n) = nonpositive_integer(z) {
        return Err(Error::Pole(n));
    }
    let wp = prec + 32 + (z.abs_f64().max(1.0).log2().ceil() as u32);
    let zz = z.with_prec(wp);
    let out = if zz.re < 0.5 {
        // Gamma(z) = pi / (sin(pi z) Gamma(1 - z))
        let pi = Float::with_val(wp, Constant::Pi);
        let one_minus = &HPComplex::one(wp) - &zz;
        let g = gamma_right(&one_minus, wp)?;
        let s = zz.scale(&pi).sin();
        &HPComplex::from_real(pi) / &(&s * &g)
    } else {
        gamma_right(&zz, wp)?
    };
    Ok(out.with_prec(prec))
}

fn gamma_right(z: &HPComplex, wp: u32) -> Result<HPComplex> {
    let target = 0.2 * wp as f64 + 10.0;
    let shift = (target - z.re.to_f64()).ceil().max(0.0) as u32;
    let mut prod = HPComplex::one(wp);
    let mut w = z.clone();
    for _ in 0..shift {
        prod = &prod * &w;
        w.re += 1u32;
    }
    let lg = ln_gamma_stirling(&w, wp)?;
    Ok(&lg.exp() / &prod)
}

/// `Gamma(a) Gamma(b) / Gamma(a + b)`.
pub fn beta(a: &HPComplex, b: &HPComplex) -> Result<HPComplex> {
    let ab = a + b;
    Ok(&(&gamma(a)? * &gamma(b)?) / &gamma(&ab)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 256;

    fn c(re: f64, im: f64) -> HPComplex {
        HPComplex::from_f64(P, re, im)
    }

    fn rel(a: &HPComplex, b: &HPComplex) -> f64 {
        (a - b).abs_f64() / b.abs_f64()
    }

    #[test]
    fn bernoulli_small() {
        let b = bernoulli_even(P, 4);
        let expect = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0];
        for (x, e) in b.iter().zip(expect) {
            assert!((x.to_f64() - e).abs() < 1e-15);
        }
        let b6 = Float::with_val(P, &b[2]) * 42u32;
        assert!((b6 - 1u32).abs() < 1e-70);
    }

    #[test]
    fn real_values_match_mpfr() {
        for x in [0.5, 1.0, 2.5, 7.25, 33.3, -0.5, -2.75, 0.01] {
            let g = gamma(&c(x, 0.0)).unwrap();
            let mp = Float::with_val(P, x).gamma();
            let e = (Float::with_val(P, &g.re - &mp) / &mp).abs().to_f64();
            assert!(e < 1e-72, "x = {x}: rel err {e:e}");
            assert!(g.im.to_f64().abs() < 1e-70 * mp.to_f64().abs());
        }
    }

    #[test]
    fn modulus_on_imaginary_axis() {
        // |Gamma(iy)|^2 = pi / (y sinh(pi y))
        for y in [0.3, 1.0, 5.0, 40.0] {
            let g = gamma(&c(0.0, y)).unwrap();
            let pi = Float::with_val(P, Constant::Pi);
            let yy = Float::with_val(P, y);
            let expect = Float::with_val(P, &pi / (Float::with_val(P, &pi * &yy).sinh() * &yy));
            let e = ((g.norm_sqr() / &expect) - 1u32).abs().to_f64();
            assert!(e < 1e-70, "y = {y}: {e:e}");
        }
    }

    #[test]
    fn modulus_on_half_line() {
        // |Gamma(1/2 + iy)|^2 = pi / cosh(pi y)
        for y in [0.1, 2.0, 25.0] {
            let g = gamma(&c(0.5, y)).unwrap();
            let pi = Float::with_val(P, Constant::Pi);
            let expect = Float::with_val(P, &pi / Float::with_val(P, &pi * y).cosh());
            let e = ((g.norm_sqr() / &expect) - 1u32).abs().to_f64();
            assert!(e < 1e-70, "y = {y}: {e:e}");
        }
    }

    #[test]
    fn poles() {
        assert!(matches!(gamma(&c(0.0, 0.0)), Err(Error::Pole(0))));
        assert!(matches!(gamma(&c(-3.0, 0.0)), Err(Error::Pole(-3))));
        assert!(gamma(&c(-3.0, 1e-30)).is_ok());
    }

    #[test]
    fn beta_symmetric() {
        let a = c(1.5, 2.0);
        let b = c(0.7, -1.1);
        assert!(rel(&beta(&a, &b).unwrap(), &beta(&b, &a).unwrap()) < 1e-70);
        // B(1, b) = 1/b
        let one = HPComplex::one(P);
        assert!(rel(&beta(&one, &b).unwrap(), &b.recip()) < 1e-70);
    }
}
