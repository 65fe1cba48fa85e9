//! Multiprecision scalars: MPFR reals plus a small complex type on top of them.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Real = Float;

/// Working precision and tolerance shared by the special-function and quadrature code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarConfig {
    pub precision_bits: u32,
    pub quadrature_rel_tol: f64,
    /// Contour distance parameter; `None` picks `max(8, Q) * d`.
    pub contour_shift_rho: Option<f64>,
}

impl ScalarConfig {
    pub fn new(precision_bits: u32, quadrature_rel_tol: f64) -> Result<Self> {
        let cfg = ScalarConfig { precision_bits, quadrature_rel_tol, contour_shift_rho: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_precision(precision_bits: u32) -> Result<Self> {
        Self::new(precision_bits, 2f64.powi(-(precision_bits as i32) + 24))
    }

    pub fn validate(&self) -> Result<()> {
        if self.precision_bits < 64 {
            return Err(Error::InvalidInput(format!(
                "precision_bits = {} is below 64",
                self.precision_bits
            )));
        }
        let floor = 2f64.powi(-(self.precision_bits as i32) + 8);
        if !(self.quadrature_rel_tol >= floor) {
            return Err(Error::InvalidInput(format!(
                "quadrature_rel_tol = {:e} is below 2^(8 - precision) = {:e}",
                self.quadrature_rel_tol, floor
            )));
        }
        if let Some(rho) = self.contour_shift_rho {
            if !(rho > 0.0) {
                return Err(Error::InvalidInput("contour_shift_rho must be positive".into()));
            }
        }
        Ok(())
    }
}

pub fn real(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

/// Float from an exact decimal literal; panics on malformed input, so meant for literals.
pub fn dec(prec: u32, s: &str) -> Float {
    Float::with_val(prec, &parse_decimal(s).expect("decimal literal"))
}

pub fn from_rational(prec: u32, q: &Rational) -> Float {
    Float::with_val(prec, q)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

/// Parses a decimal literal such as `-1.25e-3` into an exact rational.
pub fn parse_decimal(s: &str) -> Result<Rational> {
    let bad = || Error::InvalidInput(format!("not a decimal number: {s:?}"));
    let t = s.trim();
    if t.is_empty() {
        return Err(bad());
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.as_bytes().first() {
        Some(b'-') => (true, &mantissa[1..]),
        Some(b'+') => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(i) => (&digits[..i], &digits[i + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let num = rug::Integer::from_str_radix(if all.is_empty() { "0" } else { &all }, 10)
        .map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = rug::Integer::from(10);
    let mut q = Rational::from(num);
    if scale >= 0 {
        q *= Rational::from(ten.pow(scale as u32));
    } else {
        q /= Rational::from(ten.pow((-scale) as u32));
    }
    if neg {
        q = -q;
    }
    Ok(q)
}

/// Exact decimal-ish rendering of a rational for logs and cache keys.
pub fn rational_string(q: &Rational) -> String {
    if *q.denom() == 1 {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Full-precision decimal string of a float.
pub fn float_string(x: &Float) -> String {
    if x.is_zero() {
        return "0".into();
    }
    let digits = (x.prec() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1;
    x.to_string_radix(10, Some(digits))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HPComplex {
    pub re: Float,
    pub im: Float,
}

impl HPComplex {
    pub fn new(re: Float, im: Float) -> Self {
        HPComplex { re, im }
    }

    pub fn zero(prec: u32) -> Self {
        HPComplex { re: Float::new(prec), im: Float::new(prec) }
    }

    pub fn one(prec: u32) -> Self {
        HPComplex { re: Float::with_val(prec, 1), im: Float::new(prec) }
    }

    pub fn i(prec: u32) -> Self {
        HPComplex { re: Float::new(prec), im: Float::with_val(prec, 1) }
    }

    pub fn from_f64(prec: u32, re: f64, im: f64) -> Self {
        HPComplex { re: Float::with_val(prec, re), im: Float::with_val(prec, im) }
    }

    pub fn from_real(re: Float) -> Self {
        let im = Float::new(re.prec());
        HPComplex { re, im }
    }

    /// `r * e^{i phi}`.
    pub fn polar(r: &Float, phi: &Float) -> Self {
        let p = r.prec().max(phi.prec());
        let (s, c) = Float::with_val(p, phi).sin_cos(Float::new(p));
        HPComplex { re: c * r, im: s * r }
    }

    pub fn prec(&self) -> u32 {
        self.re.prec().max(self.im.prec())
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        HPComplex { re: Float::with_val(prec, &self.re), im: Float::with_val(prec, &self.im) }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        HPComplex { re: self.re.clone(), im: Float::with_val(self.im.prec(), -&self.im) }
    }

    pub fn norm_sqr(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.square_ref()) + Float::with_val(p, self.im.square_ref())
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.prec(), self.re.hypot_ref(&self.im))
    }

    pub fn abs_f64(&self) -> f64 {
        self.abs().to_f64()
    }

    pub fn arg(&self) -> Float {
        Float::with_val(self.prec(), self.im.atan2_ref(&self.re))
    }

    pub fn scale(&self, k: &Float) -> Self {
        let p = self.prec().max(k.prec());
        HPComplex { re: Float::with_val(p, &self.re * k), im: Float::with_val(p, &self.im * k) }
    }

    pub fn scale_f64(&self, k: f64) -> Self {
        HPComplex { re: Float::with_val(self.prec(), &self.re * k), im: Float::with_val(self.prec(), &self.im * k) }
    }

    /// Multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        HPComplex { re: Float::with_val(self.prec(), -&self.im), im: self.re.clone() }
    }

    pub fn recip(&self) -> Self {
        let n = self.norm_sqr();
        HPComplex {
            re: Float::with_val(self.prec(), &self.re / &n),
            im: Float::with_val(self.prec(), -Float::with_val(self.prec(), &self.im / &n)),
        }
    }

    pub fn exp(&self) -> Self {
        let p = self.prec();
        let m = Float::with_val(p, self.re.exp_ref());
        HPComplex::polar(&m, &self.im)
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Self {
        let p = self.prec();
        HPComplex { re: Float::with_val(p, self.abs().ln_ref()), im: self.arg() }
    }

    /// Principal power `self^w`.
    pub fn pow(&self, w: &HPComplex) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Domain("complex power of zero".into()));
        }
        Ok((&self.ln() * w).exp())
    }

    pub fn powi(&self, n: i64) -> Self {
        let mut base = if n < 0 { self.recip() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = HPComplex::one(self.prec());
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Self {
        let p = self.prec();
        let a = self.abs();
        let re = Float::with_val(p, (Float::with_val(p, &a + &self.re) / 2u32).sqrt_ref());
        let mut im = Float::with_val(p, (Float::with_val(p, &a - &self.re) / 2u32).sqrt_ref());
        if self.im.is_sign_negative() {
            im = -im;
        }
        HPComplex { re, im }
    }

    pub fn cosh(&self) -> Self {
        let p = self.prec();
        let (sh, ch) = Float::with_val(p, &self.re).sinh_cosh(Float::new(p));
        let (s, c) = Float::with_val(p, &self.im).sin_cos(Float::new(p));
        HPComplex { re: ch * c, im: sh * s }
    }

    pub fn sinh(&self) -> Self {
        let p = self.prec();
        let (sh, ch) = Float::with_val(p, &self.re).sinh_cosh(Float::new(p));
        let (s, c) = Float::with_val(p, &self.im).sin_cos(Float::new(p));
        HPComplex { re: sh * c, im: ch * s }
    }

    pub fn sin(&self) -> Self {
        let p = self.prec();
        let (s, c) = Float::with_val(p, &self.re).sin_cos(Float::new(p));
        let (sh, ch) = Float::with_val(p, &self.im).sinh_cosh(Float::new(p));
        HPComplex { re: s * ch, im: c * sh }
    }

    /// `log cosh(z)`, continued analytically off the imaginary axis:
    /// `s z + log((1 + exp(-2 s z)) / 2)` with `s = sign(Re z)`.
    /// Agrees with the principal branch wherever `Re cosh(z) > 0`.
    pub fn log_cosh(&self) -> Self {
        let p = self.prec();
        let z = if self.re.is_sign_negative() { -self } else { self.clone() };
        let mut e = z.scale_f64(-2.0).exp();
        e.re += 1u32;
        let mut l = e.ln();
        l.re -= Float::with_val(p, 2u32).ln();
        &z + &l
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

impl fmt::Display for HPComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.to_f64();
        write!(f, "{a:.17e}{b:+.17e}i")
    }
}

impl<'a> Add<&'a HPComplex> for &'a HPComplex {
    type Output = HPComplex;
    fn add(self, o: &HPComplex) -> HPComplex {
        let p = self.prec().max(o.prec());
        HPComplex { re: Float::with_val(p, &self.re + &o.re), im: Float::with_val(p, &self.im + &o.im) }
    }
}

impl<'a> Sub<&'a HPComplex> for &'a HPComplex {
    type Output = HPComplex;
    fn sub(self, o: &HPComplex) -> HPComplex {
        let p = self.prec().max(o.prec());
        HPComplex { re: Float::with_val(p, &self.re - &o.re), im: Float::with_val(p, &self.im - &o.im) }
    }
}

impl<'a> Mul<&'a HPComplex> for &'a HPComplex {
    type Output = HPComplex;
    fn mul(self, o: &HPComplex) -> HPComplex {
        let p = self.prec().max(o.prec());
        let re = Float::with_val(p, &self.re * &o.re) - Float::with_val(p, &self.im * &o.im);
        let im = Float::with_val(p, &self.re * &o.im) + Float::with_val(p, &self.im * &o.re);
        HPComplex { re, im }
    }
}

impl<'a> Div<&'a HPComplex> for &'a HPComplex {
    type Output = HPComplex;
    fn div(self, o: &HPComplex) -> HPComplex {
        let n = o.norm_sqr();
        let t = self * &o.conj();
        HPComplex { re: t.re / &n, im: t.im / &n }
    }
}

impl Neg for &HPComplex {
    type Output = HPComplex;
    fn neg(self) -> HPComplex {
        HPComplex { re: Float::with_val(self.re.prec(), -&self.re), im: Float::with_val(self.im.prec(), -&self.im) }
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr<HPComplex> for HPComplex {
            type Output = HPComplex;
            fn $m(self, o: HPComplex) -> HPComplex {
                (&self).$m(&o)
            }
        }
        impl<'a> $tr<&'a HPComplex> for HPComplex {
            type Output = HPComplex;
            fn $m(self, o: &HPComplex) -> HPComplex {
                (&self).$m(o)
            }
        }
        impl<'a> $tr<HPComplex> for &'a HPComplex {
            type Output = HPComplex;
            fn $m(self, o: HPComplex) -> HPComplex {
                self.$m(&o)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);
owned_ops!(Div, div);

impl Neg for HPComplex {
    type Output = HPComplex;
    fn neg(self) -> HPComplex {
        -&self
    }
}

impl AddAssign<&HPComplex> for HPComplex {
    fn add_assign(&mut self, o: &HPComplex) {
        self.re += &o.re;
        self.im += &o.im;
    }
}

impl AddAssign<HPComplex> for HPComplex {
    fn add_assign(&mut self, o: HPComplex) {
        *self += &o;
    }
}

impl SubAssign<&HPComplex> for HPComplex {
    fn sub_assign(&mut self, o: &HPComplex) {
        self.re -= &o.re;
        self.im -= &o.im;
    }
}

impl MulAssign<&HPComplex> for HPComplex {
    fn mul_assign(&mut self, o: &HPComplex) {
        *self = &*self * o;
    }
}

impl MulAssign<&Float> for HPComplex {
    fn mul_assign(&mut self, o: &Float) {
        self.re *= o;
        self.im *= o;
    }
}
