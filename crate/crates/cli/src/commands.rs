//! The batch commands. Each writes its artifacts under the output directory and returns their paths.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hopfzero::analysis::{build_report, ComparisonReport, SigmaMode};
use hopfzero::hp::{float_string, HPComplex, ScalarConfig};
use hopfzero::manifolds::{default_precision, splitting, ManifoldConfig, SplittingSample};
use hopfzero::melnikov::{upsilon0_gamma_series, upsilon0_quadrature, upsilon1_asymptotic, MelnikovValue};
use hopfzero::model::{ModelSpec, Params, PerturbationSeries};
use hopfzero::special::{i_asymptotic, i_closed, i_quadrature, IIntegralKey};
use rayon::prelude::*;
use rug::{Float, Rational};
use serde::Serialize;

use crate::cache::{key_of, write_atomic, Cache, Lookup};
use crate::config::{Run, SplittingJob};

pub const INTEGRALS_HEADER: &[&str] = &[
    "n",
    "q",
    "c",
    "omega",
    "d",
    "l",
    "quadrature_re",
    "quadrature_im",
    "quadrature_error",
    "closed_re",
    "closed_im",
    "asymptotic_re",
    "asymptotic_im",
    "gap_closed",
    "gap_asymptotic",
    "status",
];

pub const MELNIKOV_HEADER: &[&str] = &["delta", "sigma", "l", "route", "re", "im", "error", "status"];

pub const SPLITTING_HEADER: &[&str] = &[
    "delta",
    "sigma",
    "u_section",
    "n_theta",
    "precision_bits",
    "seed_radius",
    "trusted",
    "mode0_re",
    "mode0_im",
    "mode1_re",
    "mode1_im",
    "d_mode1_re",
    "d_mode1_im",
    "max_abs_delta",
    "budget_integrator",
    "budget_seeding",
    "budget_refinement",
    "budget_total",
];

pub const MODES_HEADER: &[&str] = &["delta", "quantity", "l", "re", "im"];

pub const REPORT_HEADER: &[&str] = &[
    "delta",
    "sigma",
    "trusted",
    "error_budget",
    "measured_mode0_re",
    "measured_mode0_im",
    "melnikov_mode0_re",
    "melnikov_mode0_im",
    "measured_re",
    "measured_im",
    "melnikov_re",
    "melnikov_im",
    "melnikov_error",
    "asymptotic_re",
    "asymptotic_im",
    "asymptotic_error",
    "ratio_melnikov",
    "ratio_asymptotic",
    "phase_gap_melnikov",
    "phase_gap_asymptotic",
    "phase_gap_corrected",
    "sharp_bound",
];

fn rat(q: &Rational) -> String {
    hopfzero::hp::rational_string(q)
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn re_im(z: &HPComplex) -> [String; 2] {
    [float_string(&z.re), float_string(&z.im)]
}

fn relative_gap(a: &HPComplex, b: &HPComplex) -> String {
    let scale = b.abs_f64();
    if scale == 0.0 {
        return num((a - b).abs_f64());
    }
    num((a - b).abs_f64() / scale)
}

fn write_csv(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn integral_row(key: &IIntegralKey, cfg: &ScalarConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let quad = i_quadrature(key, cfg).map_err(|e| errors.push(format!("quadrature: {e}"))).ok();
    let closed = i_closed(key).map_err(|e| errors.push(format!("closed: {e}"))).ok();
    // the asymptotic route only exists for oscillating modes
    let asy = if key.l == 0 { None } else { i_asymptotic(key).map_err(|e| errors.push(format!("asymptotic: {e}"))).ok() };
    let pair = |z: &Option<HPComplex>| z.as_ref().map_or([String::new(), String::new()], re_im);
    let gap = |z: &Option<HPComplex>| match (z, &quad) {
        (Some(z), Some(q)) => relative_gap(z, &q.value),
        _ => String::new(),
    };
    let mut row = vec![
        key.n.to_string(),
        float_string(&key.q),
        float_string(&key.c),
        float_string(&key.omega),
        float_string(&key.d),
        key.l.to_string(),
    ];
    row.extend(pair(&quad.as_ref().map(|q| q.value.clone())));
    row.push(quad.as_ref().map_or(String::new(), |q| num(q.error)));
    row.extend(pair(&closed));
    row.extend(pair(&asy));
    row.push(gap(&closed));
    row.push(gap(&asy));
    row.push(if errors.is_empty() { "ok".into() } else { errors.join("; ") });
    row
}

pub fn cmd_integrals(run: &Run) -> Result<PathBuf> {
    let lat = run.integrals.as_ref().context("the config has no [integrals] section")?;
    let p = run.precision;
    let cfg = ScalarConfig::with_precision(p)?;
    let f = |q: &Rational| Float::with_val(p, q);
    let mut tasks = Vec::new();
    for &n in &lat.n {
        for q in &lat.q {
            for c in &lat.c {
                for w in &lat.omega {
                    for &l in &lat.l {
                        tasks.push((n, q, c, w, l));
                    }
                }
            }
        }
    }
    let rows: Vec<Vec<String>> = tasks
        .par_iter()
        .map(|&(n, q, c, w, l)| match IIntegralKey::new(n, f(q), f(c), f(w), f(&lat.d), l) {
            Ok(key) => integral_row(&key, &cfg),
            Err(e) => {
                let mut row = vec![n.to_string(), rat(q), rat(c), rat(w), rat(&lat.d), l.to_string()];
                row.resize(INTEGRALS_HEADER.len() - 1, String::new());
                row.push(format!("key: {e}"));
                row
            }
        })
        .collect();
    let path = run.output_dir.join("integrals.csv");
    write_csv(&path, INTEGRALS_HEADER, &rows)?;
    Ok(path)
}

fn melnikov_rows(run: &Run, delta: &Rational, mode: &SigmaMode, modes: &[i32]) -> Vec<Vec<String>> {
    let p = run.precision;
    let cfg = ScalarConfig::with_precision(p).expect("precision checked at load");
    let d = Float::with_val(p, delta);
    let fail = |sigma: String, e: String| vec![vec![rat(delta), sigma, String::new(), String::new(), String::new(), String::new(), String::new(), e]];
    let sigma = match mode.resolve(&run.spec, &run.series, &d, &cfg) {
        Ok(s) => s,
        Err(e) => return fail(String::new(), format!("sigma: {e}")),
    };
    let params = match Params::new(&run.spec, d, sigma.clone()) {
        Ok(p) => p,
        Err(e) => return fail(float_string(&sigma), format!("params: {e}")),
    };
    let mut rows = Vec::new();
    let mut push = |l: i32, route: &str, v: hopfzero::Result<MelnikovValue>| {
        let mut row = vec![rat(delta), float_string(&sigma), l.to_string(), route.to_string()];
        match v {
            Ok(v) => {
                row.extend(re_im(&v.value));
                row.push(num(v.error));
                row.push("ok".into());
            }
            Err(e) => {
                row.extend([String::new(), String::new(), String::new()]);
                row.push(e.to_string());
            }
        }
        rows.push(row);
    };
    for &l in modes {
        push(l, "quadrature", upsilon0_quadrature(&run.spec, &run.series, &params, l, &cfg));
        push(l, "gamma_series", upsilon0_gamma_series(&run.spec, &run.series, &params, l, &cfg));
        if l == 1 {
            push(l, "asymptotic", upsilon1_asymptotic(&run.spec, &run.series, &params, &cfg));
        }
    }
    rows
}

pub fn cmd_melnikov(run: &Run) -> Result<PathBuf> {
    let job = run.melnikov.as_ref().context("the config has no [melnikov] section")?;
    let rows: Vec<Vec<String>> = job
        .deltas
        .par_iter()
        .map(|d| melnikov_rows(run, d, &job.sigma_mode, &job.modes))
        .collect::<Vec<_>>()
        .concat();
    let path = run.output_dir.join("melnikov.csv");
    write_csv(&path, MELNIKOV_HEADER, &rows)?;
    Ok(path)
}

#[derive(Serialize)]
struct SplittingKey<'a> {
    kind: &'static str,
    format: u32,
    spec: &'a ModelSpec,
    series: &'a PerturbationSeries,
    delta: String,
    sigma: String,
    u_section: String,
    n_theta: usize,
    manifold: &'a ManifoldConfig,
}

/// Everything needed to measure or look up one delta of the ladder.
pub struct SplittingTask {
    pub params: Params,
    pub u_section: Float,
    pub manifold: ManifoldConfig,
    pub key: String,
}

pub fn splitting_task(run: &Run, job: &SplittingJob, delta: &Rational) -> Result<SplittingTask> {
    let p = job.precision.or(run.precision_override).unwrap_or_else(|| default_precision(delta.to_f64()));
    let mut manifold = ManifoldConfig::new(p)?;
    if let Some(r) = job.seed_radius {
        manifold.rho = r;
        manifold.validate()?;
    }
    let cfg = ScalarConfig::with_precision(p)?;
    let d = Float::with_val(p, delta);
    let sigma = job.sigma_mode.resolve(&run.spec, &run.series, &d, &cfg).with_context(|| format!("sigma at delta {}", rat(delta)))?;
    let params = Params::new(&run.spec, d, sigma)?;
    let u_section = Float::with_val(p, &job.u_section);
    let key = key_of(&SplittingKey {
        kind: "splitting",
        format: 1,
        spec: &run.spec,
        series: &run.series,
        delta: float_string(&params.delta),
        sigma: float_string(&params.sigma),
        u_section: float_string(&u_section),
        n_theta: job.n_theta,
        manifold: &manifold,
    });
    Ok(SplittingTask { params, u_section, manifold, key })
}

/// Sample for one delta, from the cache when a valid entry exists. The flag tells how it was obtained.
pub fn measure(run: &Run, job: &SplittingJob, delta: &Rational, cache: &Cache) -> Result<(SplittingSample, &'static str)> {
    let t = splitting_task(run, job, delta)?;
    let origin = match cache.load::<SplittingSample>(&t.key) {
        Lookup::Hit(s) => return Ok((s, "hit")),
        Lookup::Corrupt => {
            eprintln!("cache entry for delta {} failed its checksum; recomputing", rat(delta));
            "recomputed"
        }
        Lookup::Miss => "miss",
    };
    let s = splitting(&run.spec, &run.series, &t.params, &t.u_section, job.n_theta, &t.manifold)
        .with_context(|| format!("splitting at delta {}", rat(delta)))?;
    cache.store(&t.key, &s).with_context(|| format!("caching delta {}", rat(delta)))?;
    Ok((s, if cache.enabled() { origin } else { "off" }))
}

fn splitting_row(s: &SplittingSample) -> Vec<String> {
    let mut row = vec![
        float_string(&s.delta),
        float_string(&s.sigma),
        float_string(&s.u_section),
        s.n_theta.to_string(),
        s.precision_bits.to_string(),
        num(s.seed_radius),
        s.trusted.to_string(),
    ];
    row.extend(re_im(&s.delta_modes[0]));
    row.extend(re_im(&s.delta_modes[1]));
    row.extend(re_im(&s.d_modes[1]));
    row.push(num(s.max_abs_delta()));
    let b = &s.error_budget;
    row.extend([num(b.integrator), num(b.seeding), num(b.refinement), num(b.total)]);
    row
}

fn mode_rows(s: &SplittingSample) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (name, modes) in [("delta", &s.delta_modes), ("d", &s.d_modes)] {
        for (l, m) in modes.iter().enumerate() {
            let [re, im] = re_im(m);
            rows.push(vec![float_string(&s.delta), name.to_string(), l.to_string(), re, im]);
        }
    }
    rows
}

pub fn cmd_splitting(run: &Run, cache: &Cache) -> Result<Vec<PathBuf>> {
    let job = run.splitting.as_ref().context("the config has no [splitting] section")?;
    let samples: Vec<(SplittingSample, &str)> =
        job.deltas.par_iter().map(|d| measure(run, job, d, cache)).collect::<Result<_>>()?;
    for (s, origin) in &samples {
        eprintln!("splitting delta {}: cache {origin}", s.delta.to_f64());
    }
    let rows: Vec<Vec<String>> = samples.iter().map(|(s, _)| splitting_row(s)).collect();
    let modes: Vec<Vec<String>> = samples.iter().flat_map(|(s, _)| mode_rows(s)).collect();
    let a = run.output_dir.join("splitting.csv");
    let b = run.output_dir.join("splitting_modes.csv");
    write_csv(&a, SPLITTING_HEADER, &rows)?;
    write_csv(&b, MODES_HEADER, &modes)?;
    Ok(vec![a, b])
}

fn report_row(r: &hopfzero::analysis::ComparisonRow) -> Vec<String> {
    let mut row = vec![float_string(&r.delta), float_string(&r.sigma), r.trusted.to_string(), num(r.error_budget)];
    for z in [&r.measured_mode0, &r.melnikov_mode0, &r.measured, &r.melnikov] {
        row.extend(re_im(z));
    }
    row.push(num(r.melnikov_error));
    row.extend(re_im(&r.asymptotic));
    row.push(num(r.asymptotic_error));
    for x in [r.ratio_melnikov, r.ratio_asymptotic, r.phase_gap_melnikov, r.phase_gap_asymptotic, r.phase_gap_corrected] {
        row.push(num(x));
    }
    row.push(r.sharp_bound.to_string());
    row
}

/// Builds the comparison from cached samples only; missing deltas are an error that lists them.
pub fn cmd_report(run: &Run, cache: &Cache) -> Result<(ComparisonReport, Vec<PathBuf>)> {
    let job = run.splitting.as_ref().context("the report needs a [splitting] section naming the delta ladder")?;
    if !cache.enabled() {
        bail!("the report reads the splitting cache, which --no-cache disables");
    }
    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for d in &job.deltas {
        let t = splitting_task(run, job, d)?;
        match cache.load::<SplittingSample>(&t.key) {
            Lookup::Hit(s) => samples.push(s),
            Lookup::Miss => missing.push(format!("splitting delta={}", rat(d))),
            Lookup::Corrupt => missing.push(format!("splitting delta={} (corrupted entry)", rat(d))),
        }
    }
    if !missing.is_empty() {
        bail!("missing inputs (run `splitting` first): {}", missing.join(", "));
    }
    let cfg = ScalarConfig::with_precision(run.precision)?;
    let report = build_report(&run.spec, &run.series, &samples, &cfg)?;
    let rows: Vec<Vec<String>> = report.rows.iter().map(report_row).collect();
    let csv_path = run.output_dir.join("report.csv");
    let txt_path = run.output_dir.join("report.txt");
    let json_path = run.output_dir.join("report.json");
    write_csv(&csv_path, REPORT_HEADER, &rows)?;
    write_atomic(&txt_path, report.summary().as_bytes())?;
    write_atomic(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok((report, vec![csv_path, txt_path, json_path]))
}

/// One-paragraph description of a validated configuration.
pub fn describe(run: &Run) -> String {
    let mut s = format!(
        "model: b={} c={} d={} alpha0={} p={} conservative={} with {} perturbation terms (qmax {})\n",
        rat(&run.spec.b),
        rat(&run.spec.c),
        rat(&run.spec.d),
        rat(&run.spec.alpha0),
        rat(&run.spec.p),
        run.spec.conservative,
        run.series.terms().len(),
        run.series.qmax()
    );
    s.push_str(&format!("precision: {} bits; output: {}; cache: {}\n", run.precision, run.output_dir.display(), run.cache_dir.display()));
    if let Some(l) = &run.integrals {
        let n = l.n.len() * l.q.len() * l.c.len() * l.omega.len() * l.l.len();
        s.push_str(&format!("integrals: {n} lattice points\n"));
    }
    if let Some(m) = &run.melnikov {
        s.push_str(&format!("melnikov: {} deltas, modes {:?}, sigma {:?}\n", m.deltas.len(), m.modes, m.sigma_mode));
    }
    if let Some(j) = &run.splitting {
        let ds: Vec<String> = j.deltas.iter().map(rat).collect();
        s.push_str(&format!(
            "splitting: deltas [{}], n_theta {}, u_section {}, sigma {:?}\n",
            ds.join(", "),
            j.n_theta,
            rat(&j.u_section),
            j.sigma_mode
        ));
    }
    s
}
