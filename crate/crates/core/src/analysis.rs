//! Fits of measured splittings to the exponential law and comparison of the prediction routes.

use nalgebra::{DMatrix, DVector};
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hp::{from_rational, HPComplex, ScalarConfig};
use crate::manifolds::{sharp_bound_check, splitting, ManifoldConfig, SplittingSample};
use crate::melnikov::{sigma_star, upsilon0_gamma_series, upsilon0_quadrature, upsilon1_asymptotic};
use crate::model::{l0_constant, ModelSpec, Params, PerturbationSeries};

/// One measurement of `|Delta^{[1]}|` for the fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitPoint {
    pub delta: f64,
    pub magnitude: f64,
    /// Absolute uncertainty of `magnitude`.
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnedFit {
    pub power: f64,
    pub rate: f64,
    pub rate_stderr: f64,
    pub log_prefactor: f64,
}

/// `log |Delta^{[1]}| = log_prefactor + power log(delta) - rate / delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub power: f64,
    pub log_prefactor: f64,
    pub rate_stderr: f64,
    pub power_stderr: f64,
    pub log_prefactor_stderr: f64,
    pub residuals: Vec<f64>,
    pub residual_rms: f64,
    pub condition_estimate: f64,
    /// Second fit with the power held fixed, when requested.
    pub pinned: Option<PinnedFit>,
}

struct Lsq {
    coef: Vec<f64>,
    stderr: Vec<f64>,
    residuals: Vec<f64>,
    condition: f64,
}

fn weighted_lsq(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<Lsq> {
    let (n, k) = x.shape();
    let sw = w.map(f64::sqrt);
    let mut xa = x.clone();
    for i in 0..n {
        for j in 0..k {
            xa[(i, j)] *= sw[i];
        }
    }
    let ya = y.component_mul(&sw);
    let svd = xa.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) {
        return Err(Error::InsufficientData("fit design matrix is singular".into()));
    }
    let coef = svd.solve(&ya, 0.0).map_err(|e| Error::InsufficientData(e.to_string()))?;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * &coef)[0]).collect();
    let dof = n.saturating_sub(k).max(1) as f64;
    let s2 = (0..n).map(|i| w[i] * residuals[i] * residuals[i]).sum::<f64>() / dof;
    let xtx = xa.transpose() * &xa;
    let cov = xtx.try_inverse().ok_or_else(|| Error::InsufficientData("normal matrix is singular".into()))? * s2;
    Ok(Lsq {
        coef: coef.iter().copied().collect(),
        stderr: (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        residuals,
        condition: smax / smin,
    })
}

/// Weighted least-squares fit of the exponential law, weights `1/sigma^2` with `sigma` the
/// relative error of each magnitude.
pub fn fit_points(points: &[FitPoint], pinned_power: Option<f64>) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.delta > 0.0 && p.magnitude > 0.0 && p.error >= 0.0)) {
        return Err(Error::InvalidInput("fit points need positive delta and magnitude".into()));
    }
    let lo = points.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.delta).fold(0.0, f64::max);
    if hi < 2.0 * lo {
        return Err(Error::InsufficientData(format!("delta range [{lo}, {hi}] spans less than a factor 2")));
    }
    let n = points.len();
    let rel: Vec<f64> = points.iter().map(|p| (p.error / p.magnitude).max(1e-15)).collect();
    let wmax = rel.iter().map(|r| 1.0 / (r * r)).fold(0.0, f64::max);
    let w = DVector::from_iterator(n, rel.iter().map(|r| 1.0 / (r * r) / wmax));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.magnitude.ln()));
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => points[i].delta.ln(),
        _ => -1.0 / points[i].delta,
    });
    let free = weighted_lsq(&x, &y, &w)?;
    let pinned = match pinned_power {
        Some(pw) => {
            let yp = DVector::from_iterator(n, (0..n).map(|i| y[i] - pw * points[i].delta.ln()));
            let xp = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { -1.0 / points[i].delta });
            let f = weighted_lsq(&xp, &yp, &w)?;
            Some(PinnedFit { power: pw, rate: f.coef[1], rate_stderr: f.stderr[1], log_prefactor: f.coef[0] })
        }
        None => None,
    };
    let residual_rms = (free.residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(FitResult {
        rate: free.coef[2],
        power: free.coef[1],
        log_prefactor: free.coef[0],
        rate_stderr: free.stderr[2],
        power_stderr: free.stderr[1],
        log_prefactor_stderr: free.stderr[0],
        residuals: free.residuals,
        residual_rms,
        condition_estimate: free.condition,
        pinned,
    })
}

/// Fit of `|Delta^{[1]}|` over trusted samples; the pinned fit uses `p - 2/d`.
pub fn fit_exponential_law(spec: &ModelSpec, samples: &[SplittingSample]) -> Result<FitResult> {
    if let Some(s) = samples.iter().find(|s| !s.trusted) {
        return Err(Error::InvalidInput(format!("untrusted sample at delta = {}", s.delta.to_f64())));
    }
    let points: Vec<FitPoint> = samples
        .iter()
        .map(|s| FitPoint { delta: s.delta.to_f64(), magnitude: s.delta_modes[1].abs_f64(), error: s.error_budget.total })
        .collect();
    let power = spec.p.to_f64() - 2.0 / spec.d.to_f64();
    fit_points(&points, Some(power))
}

/// Expected `(rate, power)` of the law: `(alpha0 pi / (2 d), p - 2/d)`.
pub fn law_exponents(spec: &ModelSpec) -> (f64, f64) {
    let d = spec.d.to_f64();
    (spec.alpha0.to_f64() * std::f64::consts::PI / (2.0 * d), spec.p.to_f64() - 2.0 / d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaMode {
    Zero,
    SigmaStar,
    Fixed(String),
}

impl SigmaMode {
    pub fn resolve(&self, spec: &ModelSpec, series: &PerturbationSeries, delta: &Float, cfg: &ScalarConfig) -> Result<Float> {
        let prec = cfg.precision_bits;
        match self {
            SigmaMode::Zero => Ok(Float::new(prec)),
            SigmaMode::SigmaStar => Ok(sigma_star(spec, series, delta, cfg, 2f64.powi(-(prec as i32) / 2))?.sigma),
            SigmaMode::Fixed(s) => Ok(from_rational(prec, &crate::hp::parse_decimal(s)?)),
        }
    }
}

/// Factor carrying mode `l` of the Melnikov expansion to the section `u`:
/// `cosh^{2/d}(d u) e^{i l (alpha u / delta + (c/d) log cosh(d u))}`.
pub fn mode_factor(spec: &ModelSpec, params: &Params, u: &Float, l: i32, prec: u32) -> HPComplex {
    let d = from_rational(prec, &spec.d);
    let c = from_rational(prec, &spec.c);
    let du = Float::with_val(prec, u * &d);
    let lc = Float::with_val(prec, du.cosh_ref()).ln();
    let amp = Float::with_val(prec, &lc * 2u32) / &d;
    let phase = (Float::with_val(prec, params.omega(spec) * u) + Float::with_val(prec, &c * &lc) / &d) * l;
    HPComplex::polar(&amp.exp(), &phase)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub delta: Float,
    pub sigma: Float,
    pub trusted: bool,
    pub error_budget: f64,
    pub measured_mode0: HPComplex,
    pub measured: HPComplex,
    pub melnikov_mode0: HPComplex,
    pub melnikov: HPComplex,
    pub melnikov_error: f64,
    pub asymptotic: HPComplex,
    pub asymptotic_error: f64,
    pub ratio_melnikov: f64,
    pub ratio_asymptotic: f64,
    pub phase_gap_melnikov: f64,
    pub phase_gap_asymptotic: f64,
    /// Phase gap after the `e^{-i alpha L0 delta^{p+2} log(delta) / d}` correction of the Melnikov value.
    pub phase_gap_corrected: f64,
    pub sharp_bound: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    /// Not enough data to evaluate the check.
    Skipped,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub fit: Option<FitResult>,
    /// `|ratio - 1|` against the Melnikov value shrinks as delta decreases.
    pub monotone_shrinkage: bool,
    pub verdicts: Vec<Verdict>,
}

fn gap(measured: &HPComplex, predicted: &HPComplex) -> (f64, f64) {
    if predicted.is_zero() || measured.is_zero() {
        let same = predicted.is_zero() && measured.is_zero();
        return (if same { 1.0 } else { f64::NAN }, 0.0);
    }
    let q = measured / predicted;
    (q.abs_f64(), q.arg().to_f64())
}

/// Report rows for already measured samples.
pub fn build_report(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    samples: &[SplittingSample],
    cfg: &ScalarConfig,
) -> Result<ComparisonReport> {
    let prec = cfg.precision_bits;
    let l0 = from_rational(prec, &l0_constant(spec, series)?);
    let d = from_rational(prec, &spec.d);
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let params = Params::new(spec, Float::with_val(prec, &s.delta), Float::with_val(prec, &s.sigma))?;
        let fac = mode_factor(spec, &params, &s.u_section, 1, prec);
        let m0 = upsilon0_quadrature(spec, series, &params, 0, cfg)?;
        let m1 = upsilon0_gamma_series(spec, series, &params, 1, cfg)?;
        let asy = upsilon1_asymptotic(spec, series, &params, cfg)?;
        let melnikov = &m1.value * &fac;
        let asymptotic = &asy.value * &fac;
        let cosh_amp = fac.abs();
        let melnikov_mode0 = m0.value.scale(&cosh_amp);
        let measured = s.delta_modes[1].clone();
        let (ratio_melnikov, phase_gap_melnikov) = gap(&measured, &melnikov);
        let (ratio_asymptotic, phase_gap_asymptotic) = gap(&measured, &asymptotic);
        let ld = Float::with_val(prec, s.delta.ln_ref());
        let shift = -(Float::with_val(prec, params.alpha(spec) * &l0) / &d * params.delta_pow(spec, 2) * ld);
        let corrected = &melnikov * &HPComplex::polar(&Float::with_val(prec, 1), &shift);
        let (_, phase_gap_corrected) = gap(&measured, &corrected);
        let sharp = sharp_bound_check(spec, s, m0.value.abs_f64(), 2.0, 1e3);
        rows.push(ComparisonRow {
            delta: s.delta.clone(),
            sigma: s.sigma.clone(),
            trusted: s.trusted,
            error_budget: s.error_budget.total,
            measured_mode0: s.delta_modes[0].clone(),
            measured,
            melnikov_mode0,
            melnikov,
            melnikov_error: m1.error * cosh_amp.to_f64(),
            asymptotic,
            asymptotic_error: asy.error * cosh_amp.to_f64(),
            ratio_melnikov,
            ratio_asymptotic,
            phase_gap_melnikov,
            phase_gap_asymptotic,
            phase_gap_corrected,
            sharp_bound: sharp,
        });
    }
    rows.sort_by(|a, b| b.delta.partial_cmp(&a.delta).unwrap());
    let devs: Vec<f64> = rows.iter().map(|r| (r.ratio_melnikov - 1.0).abs()).collect();
    let monotone_shrinkage = devs.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-12);
    let trusted: Vec<SplittingSample> = samples.iter().filter(|s| s.trusted).cloned().collect();
    let fit = if trusted.len() >= 4 { fit_exponential_law(spec, &trusted).ok() } else { None };
    let verdicts = verdicts(spec, &rows, fit.as_ref(), monotone_shrinkage);
    Ok(ComparisonReport { rows, fit, monotone_shrinkage, verdicts })
}

fn verdicts(spec: &ModelSpec, rows: &[ComparisonRow], fit: Option<&FitResult>, monotone: bool) -> Vec<Verdict> {
    let mut out = Vec::new();
    if rows.is_empty() {
        return out;
    }
    let all_trusted = rows.iter().all(|r| r.trusted);
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let dev = |r: &ComparisonRow| (r.ratio_melnikov - 1.0).abs();
    out.push(Verdict {
        name: "splitting-vs-melnikov".into(),
        status: Status::from_bool(all_trusted && dev(first) <= 0.3 && monotone && dev(last) <= 0.15 && last.phase_gap_melnikov.abs() <= 0.3),
        detail: format!(
            "deviation {:.3e} at delta {} .. {:.3e} at delta {}, phase gap {:.3e}, monotone {monotone}, trusted {all_trusted}",
            dev(first),
            first.delta.to_f64(),
            dev(last),
            last.delta.to_f64(),
            last.phase_gap_melnikov
        ),
    });
    let (rate, power) = law_exponents(spec);
    out.push(match fit {
        Some(f) => Verdict {
            name: "exponential-rate-fit".into(),
            status: Status::from_bool((f.rate / rate - 1.0).abs() <= 0.02 && (f.power - power).abs() <= 0.3),
            detail: format!(
                "rate {:.6} vs {rate:.6}, power {:.4} vs {power:.4} (with the power pinned the rate is {:.6})",
                f.rate,
                f.power,
                f.pinned.as_ref().map_or(f64::NAN, |p| p.rate)
            ),
        },
        None => Verdict {
            name: "exponential-rate-fit".into(),
            status: Status::Skipped,
            detail: "fewer than 4 trusted samples".into(),
        },
    });
    out.push(Verdict {
        name: "sharp-bound".into(),
        status: Status::from_bool(rows.iter().filter(|r| r.trusted).all(|r| r.sharp_bound)),
        detail: format!("{} trusted rows checked with M = 1e3, kappa = 2", rows.iter().filter(|r| r.trusted).count()),
    });
    out
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "delta {:<8} ratio {:.6} (asymptotic {:.6}) phase gap {:+.3e} (corrected {:+.3e}) budget {:.2e} trusted {}\n",
                r.delta.to_f64(),
                r.ratio_melnikov,
                r.ratio_asymptotic,
                r.phase_gap_melnikov,
                r.phase_gap_corrected,
                r.error_budget,
                r.trusted
            ));
        }
        if let Some(f) = &self.fit {
            s.push_str(&format!(
                "fit: rate {:.6} +- {:.2e}, power {:.4} +- {:.2e}, log prefactor {:.4}, rms {:.2e}, cond {:.2e}\n",
                f.rate, f.rate_stderr, f.power, f.power_stderr, f.log_prefactor, f.residual_rms, f.condition_estimate
            ));
            if let Some(p) = &f.pinned {
                s.push_str(&format!("pinned fit (power {:.4}): rate {:.6} +- {:.2e}\n", p.power, p.rate, p.rate_stderr));
            }
        }
        for v in &self.verdicts {
            s.push_str(&format!("{} {}: {}\n", v.status.label(), v.name, v.detail));
        }
        s
    }
}

/// Measures every delta of the ladder and compares it with the predictions.
pub fn compare_routes(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    deltas: &[Float],
    sigma_mode: &SigmaMode,
    u_section: &Float,
    n_theta: usize,
    cfg: &ScalarConfig,
    manifold_cfg: impl Fn(f64) -> Result<ManifoldConfig>,
) -> Result<ComparisonReport> {
    let mut samples = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let mcfg = manifold_cfg(delta.to_f64())?;
        let prec = mcfg.integrator.precision_bits.max(cfg.precision_bits);
        let scfg = ScalarConfig { precision_bits: prec, ..cfg.clone() };
        let sigma = sigma_mode.resolve(spec, series, delta, &scfg)?;
        let params = Params::new(spec, Float::with_val(prec, delta), sigma)?;
        samples.push(splitting(spec, series, &params, u_section, n_theta, &mcfg)?);
    }
    build_report(spec, series, &samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(delta: f64) -> f64 {
        (0.3 - 2.0 * delta.ln() - std::f64::consts::FRAC_PI_2 / delta).exp()
    }

    #[test]
    fn exact_law_is_recovered() {
        let pts: Vec<FitPoint> = [0.25, 0.2, 0.15, 0.12, 0.1]
            .iter()
            .map(|&d| FitPoint { delta: d, magnitude: law(d), error: 1e-3 * law(d) })
            .collect();
        let f = fit_points(&pts, Some(-2.0)).unwrap();
        assert!((f.rate - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((f.power + 2.0).abs() < 1e-6);
        assert!((f.log_prefactor - 0.3).abs() < 1e-6);
        assert!(f.residual_rms < 1e-9);
        let p = f.pinned.unwrap();
        assert!((p.rate - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn short_inputs_are_refused() {
        let two = [FitPoint { delta: 0.2, magnitude: 1e-3, error: 1e-9 }, FitPoint { delta: 0.1, magnitude: 1e-6, error: 1e-12 }];
        assert!(matches!(fit_points(&two, None), Err(Error::InsufficientData(_))));
        let narrow: Vec<FitPoint> =
            [0.2, 0.18, 0.16, 0.14].iter().map(|&d| FitPoint { delta: d, magnitude: law(d), error: 1e-9 }).collect();
        assert!(matches!(fit_points(&narrow, None), Err(Error::InsufficientData(_))));
    }
}
