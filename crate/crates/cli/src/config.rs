//! Run configuration: a versioned TOML document, validated on load.

use std::path::{Path, PathBuf};

use hopfzero::analysis::SigmaMode;
use hopfzero::hp::parse_decimal;
use hopfzero::model::{test_system_c, test_system_d, Component, ModelSpec, Params, PerturbationSeries};
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.to_string() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Working precision of the integral and Melnikov routes.
    pub precision: Option<u32>,
    pub model: ModelConfig,
    pub integrals: Option<IntegralsConfig>,
    pub melnikov: Option<MelnikovConfig>,
    pub splitting: Option<SplittingConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `test_system_c` or `test_system_d`; explicit fields below override it.
    pub preset: Option<String>,
    pub alpha0: Option<String>,
    pub alpha1: Option<String>,
    pub alpha2: Option<String>,
    pub b: Option<String>,
    pub c: Option<String>,
    pub d: Option<String>,
    pub p: Option<String>,
    pub conservative: Option<bool>,
    pub qmax: Option<u32>,
    /// Replaces the preset series when present; an empty list is the unperturbed system.
    pub terms: Option<Vec<TermConfig>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub component: String,
    pub q: u32,
    pub k: u32,
    pub m: u32,
    pub n: u32,
    pub value: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralsConfig {
    #[serde(default)]
    pub n: Vec<u32>,
    #[serde(default)]
    pub q: Vec<String>,
    #[serde(default)]
    pub c: Vec<String>,
    #[serde(default)]
    pub omega: Vec<String>,
    #[serde(default = "default_one")]
    pub d: String,
    #[serde(default = "default_l")]
    pub l: Vec<i32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelnikovConfig {
    pub deltas: Vec<String>,
    #[serde(default = "default_sigma_mode")]
    pub sigma_mode: String,
    #[serde(default = "default_modes")]
    pub modes: Vec<i32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingConfig {
    pub deltas: Vec<String>,
    #[serde(default = "default_sigma_mode")]
    pub sigma_mode: String,
    #[serde(default = "default_zero")]
    pub u_section: String,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    /// Overrides the precision ladder chosen from delta.
    pub precision: Option<u32>,
    pub seed_radius: Option<String>,
}

fn default_one() -> String {
    "1".into()
}
fn default_zero() -> String {
    "0".into()
}
fn default_l() -> Vec<i32> {
    vec![1]
}
fn default_sigma_mode() -> String {
    "zero".into()
}
fn default_modes() -> Vec<i32> {
    vec![0, 1, -1, 2, -2]
}
fn default_n_theta() -> usize {
    16
}

/// Decimal literal or fraction `a/b`.
pub fn parse_rational(s: &str) -> hopfzero::Result<Rational> {
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse_decimal(b)?;
            if den == 0 {
                return Err(hopfzero::Error::InvalidInput(format!("zero denominator in {s:?}")));
            }
            Ok(parse_decimal(a)? / den)
        }
        None => parse_decimal(s),
    }
}

pub fn parse_sigma_mode(s: &str) -> hopfzero::Result<SigmaMode> {
    match s {
        "zero" => Ok(SigmaMode::Zero),
        "sigma_star" => Ok(SigmaMode::SigmaStar),
        _ => match s.strip_prefix("fixed:") {
            Some(v) => {
                parse_decimal(v)?;
                Ok(SigmaMode::Fixed(v.trim().to_string()))
            }
            None => Err(hopfzero::Error::InvalidInput(format!(
                "sigma_mode {s:?} is not one of zero, sigma_star, fixed:<value>"
            ))),
        },
    }
}

#[derive(Clone, Debug)]
pub struct Lattice {
    pub n: Vec<u32>,
    pub q: Vec<Rational>,
    pub c: Vec<Rational>,
    pub omega: Vec<Rational>,
    pub d: Rational,
    pub l: Vec<i32>,
}

#[derive(Clone, Debug)]
pub struct MelnikovJob {
    pub deltas: Vec<Rational>,
    pub sigma_mode: SigmaMode,
    pub modes: Vec<i32>,
}

#[derive(Clone, Debug)]
pub struct SplittingJob {
    pub deltas: Vec<Rational>,
    pub sigma_mode: SigmaMode,
    pub u_section: Rational,
    pub n_theta: usize,
    pub precision: Option<u32>,
    pub seed_radius: Option<f64>,
}

/// A validated configuration with every number parsed exactly.
#[derive(Clone, Debug)]
pub struct Run {
    pub spec: ModelSpec,
    pub series: PerturbationSeries,
    pub precision: u32,
    /// Command-line precision, which also replaces the splitting precision ladder.
    pub precision_override: Option<u32>,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub integrals: Option<Lattice>,
    pub melnikov: Option<MelnikovJob>,
    pub splitting: Option<SplittingJob>,
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Schema { path, message: inner.message().trim().to_string() }
    })
}

fn rational_at(path: &str, s: &str) -> Result<Rational, ConfigError> {
    parse_rational(s).map_err(|e| invalid(path, e))
}

fn rationals_at(path: &str, v: &[String]) -> Result<Vec<Rational>, ConfigError> {
    v.iter().enumerate().map(|(i, s)| rational_at(&format!("{path}[{i}]"), s)).collect()
}

fn component(path: &str, s: &str) -> Result<Component, ConfigError> {
    match s {
        "f" | "F" => Ok(Component::F),
        "g" | "G" => Ok(Component::G),
        "h" | "H" => Ok(Component::H),
        _ => Err(invalid(path, format!("component {s:?} is not one of f, g, h"))),
    }
}

fn model(m: &ModelConfig) -> Result<(ModelSpec, PerturbationSeries), ConfigError> {
    let (mut spec, mut series) = match m.preset.as_deref() {
        Some("test_system_c") => test_system_c(),
        Some("test_system_d") => test_system_d(),
        Some(other) => return Err(invalid("model.preset", format!("unknown preset {other:?}"))),
        None => {
            let missing: Vec<&str> = [("alpha0", &m.alpha0), ("b", &m.b), ("c", &m.c), ("d", &m.d)]
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .collect();
            if !missing.is_empty() || m.conservative.is_none() {
                return Err(invalid("model", "without a preset, alpha0, b, c, d and conservative are required"));
            }
            let zero = Rational::new();
            let spec = ModelSpec {
                alpha0: zero.clone(),
                alpha1: zero.clone(),
                alpha2: zero.clone(),
                b: zero.clone(),
                c: zero.clone(),
                d: zero.clone(),
                p: zero,
                conservative: false,
            };
            (spec, PerturbationSeries::new(m.qmax.unwrap_or(3)))
        }
    };
    for (name, slot, value) in [
        ("alpha0", &mut spec.alpha0, &m.alpha0),
        ("alpha1", &mut spec.alpha1, &m.alpha1),
        ("alpha2", &mut spec.alpha2, &m.alpha2),
        ("b", &mut spec.b, &m.b),
        ("c", &mut spec.c, &m.c),
        ("d", &mut spec.d, &m.d),
        ("p", &mut spec.p, &m.p),
    ] {
        if let Some(v) = value {
            *slot = rational_at(&format!("model.{name}"), v)?;
        }
    }
    if let Some(c) = m.conservative {
        spec.conservative = c;
    }
    spec.validate().map_err(|e| invalid("model", e))?;
    if let Some(terms) = &m.terms {
        let qmax = m.qmax.unwrap_or_else(|| terms.iter().map(|t| t.q).max().unwrap_or(3).max(3));
        series = PerturbationSeries::new(qmax);
        for (i, t) in terms.iter().enumerate() {
            let path = format!("model.terms[{i}]");
            let comp = component(&format!("{path}.component"), &t.component)?;
            let value = rational_at(&format!("{path}.value"), &t.value)?;
            series.set(comp, t.q, t.k, t.m, t.n, value).map_err(|e| invalid(&path, e))?;
        }
    }
    Ok((spec, series))
}

fn check_deltas(spec: &ModelSpec, path: &str, deltas: &[Rational], mode: &SigmaMode) -> Result<(), ConfigError> {
    for (i, d) in deltas.iter().enumerate() {
        let sigma = match mode {
            SigmaMode::Fixed(s) => Float::with_val(128, &parse_decimal(s).map_err(|e| invalid(path, e))?),
            _ => Float::new(128),
        };
        Params::new(spec, Float::with_val(128, d), sigma).map_err(|e| invalid(format!("{path}[{i}]"), e))?;
    }
    Ok(())
}

impl RunConfig {
    /// Checks every constraint and parses all numbers; `out` and `precision` come from the command line.
    pub fn resolve(&self, out: Option<&Path>, precision: Option<u32>) -> Result<Run, ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        let (spec, series) = model(&self.model)?;
        let precision_override = precision;
        let precision = precision.or(self.precision).unwrap_or(256);
        hopfzero::ScalarConfig::with_precision(precision).map_err(|e| invalid("precision", e))?;
        let output_dir = out.map(Path::to_path_buf).or_else(|| self.output_dir.clone()).unwrap_or_else(|| "out".into());
        let cache_dir = self.cache_dir.clone().unwrap_or_else(|| output_dir.join("cache"));
        let integrals = match &self.integrals {
            None => None,
            Some(c) => Some(Lattice {
                n: c.n.clone(),
                q: rationals_at("integrals.q", &c.q)?,
                c: rationals_at("integrals.c", &c.c)?,
                omega: rationals_at("integrals.omega", &c.omega)?,
                d: rational_at("integrals.d", &c.d)?,
                l: c.l.clone(),
            }),
        };
        let melnikov = match &self.melnikov {
            None => None,
            Some(c) => {
                let deltas = rationals_at("melnikov.deltas", &c.deltas)?;
                let sigma_mode = parse_sigma_mode(&c.sigma_mode).map_err(|e| invalid("melnikov.sigma_mode", e))?;
                check_deltas(&spec, "melnikov.deltas", &deltas, &sigma_mode)?;
                Some(MelnikovJob { deltas, sigma_mode, modes: c.modes.clone() })
            }
        };
        let splitting = match &self.splitting {
            None => None,
            Some(c) => {
                let deltas = rationals_at("splitting.deltas", &c.deltas)?;
                let sigma_mode = parse_sigma_mode(&c.sigma_mode).map_err(|e| invalid("splitting.sigma_mode", e))?;
                check_deltas(&spec, "splitting.deltas", &deltas, &sigma_mode)?;
                if c.n_theta < 4 || c.n_theta % 2 != 0 {
                    return Err(invalid("splitting.n_theta", "must be even and at least 4"));
                }
                let seed_radius = match &c.seed_radius {
                    None => None,
                    Some(s) => {
                        let r = rational_at("splitting.seed_radius", s)?.to_f64();
                        if !(r > 0.0 && r < 0.1) {
                            return Err(invalid("splitting.seed_radius", "must lie in (0, 0.1)"));
                        }
                        Some(r)
                    }
                };
                if let Some(p) = c.precision {
                    hopfzero::ScalarConfig::with_precision(p).map_err(|e| invalid("splitting.precision", e))?;
                }
                Some(SplittingJob {
                    deltas,
                    sigma_mode,
                    u_section: rational_at("splitting.u_section", &c.u_section)?,
                    n_theta: c.n_theta,
                    precision: c.precision,
                    seed_radius,
                })
            }
        };
        Ok(Run { spec, series, precision, precision_override, output_dir, cache_dir, integrals, melnikov, splitting })
    }
}
