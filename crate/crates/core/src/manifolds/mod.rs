//! Numerical two-dimensional invariant manifolds of the saddle-foci and their splitting on the
//! plane `z = Z0(u)`.

mod bs;
mod taylor;

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

pub use crate::melnikov::Branch;
pub use taylor::{integrate_to_section, Crossing, IntegratorConfig, Method, SectionHit, TaylorJet, Trajectory};

use crate::error::{Error, Result};
use crate::hp::{pi, HPComplex};
use crate::linalg::{self, CVec3, Vec3};
use crate::model::{critical_points_of, ModelSpec, Params, PerturbationSeries, StateCartesian, VectorField};

/// Working precision for a given `delta`.
pub fn default_precision(delta: f64) -> u32 {
    if delta >= 0.15 {
        128
    } else if delta >= 0.07 {
        256
    } else {
        512
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedOrder {
    Linear,
    Quadratic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub integrator: IntegratorConfig,
    /// Distance of the seeds from the critical point.
    pub rho: f64,
    pub seed_order: SeedOrder,
    /// Extrapolate the section radii over `{rho, rho/2}`.
    pub richardson: bool,
    /// Tolerance on the angle at the section.
    pub theta_tol: f64,
    pub t_max: f64,
    pub max_iterations: usize,
}

impl ManifoldConfig {
    pub fn new(precision_bits: u32) -> Result<Self> {
        let tol = 2f64.powf(-0.75 * precision_bits as f64);
        let cfg = ManifoldConfig {
            integrator: IntegratorConfig::new(precision_bits, tol)?,
            rho: 1e-3,
            seed_order: SeedOrder::Quadratic,
            richardson: true,
            theta_tol: (tol * 1e4).max(2f64.powf(-(precision_bits as f64) / 2.0)),
            t_max: 80.0,
            max_iterations: 40,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn for_delta(delta: f64) -> Result<Self> {
        Self::new(default_precision(delta))
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.rho > 0.0 && self.rho <= 0.1) {
            return Err(Error::InvalidInput("seed radius must lie in (0, 0.1]".into()));
        }
        if !(self.theta_tol > 0.0 && self.t_max > 0.0) {
            return Err(Error::InvalidInput("theta_tol and t_max must be positive".into()));
        }
        Ok(())
    }
}

/// Flow of the field together with a step-halving estimate of the global error.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub trajectory: Trajectory,
    pub global_error: f64,
}

/// Integrates the full field from `state0` for time `t_final` (negative means backwards).
pub fn integrate(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    state0: &StateCartesian,
    t_final: &Float,
    cfg: &IntegratorConfig,
) -> Result<FlowResult> {
    cfg.validate()?;
    let x0 = state0.to_vec3();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    let mut vf = VectorField::compile(spec, series, params, cfg.precision_bits)?;
    if t_final.is_sign_negative() {
        vf = vf.reversed();
    }
    let t = Float::with_val(cfg.precision_bits, t_final.abs_ref());
    let trajectory = taylor::integrate(&vf, &x0, &t, cfg)?;
    let mut half = cfg.clone();
    half.step_scale *= 0.5;
    let fine = taylor::integrate(&vf, &x0, &t, &half)?;
    let global_error = linalg::norm(&linalg::sub(&trajectory.state, &fine.state)).to_f64();
    Ok(FlowResult { trajectory, global_error })
}

/// Quadratic parameterization of the local two-dimensional manifold at a saddle-focus,
/// `W(s) = S + 2 Re(v s + P20 s^2) + P11 |s|^2` with `s' = lambda s`.
#[derive(Clone, Debug)]
pub struct LocalManifold {
    pub branch: Branch,
    pub point: Vec3,
    /// Eigenvalue along the manifold (positive real part for the flow in `field`).
    pub eigenvalue: HPComplex,
    pub transverse_eigenvalue: Float,
    pub order: SeedOrder,
    v: CVec3,
    p20: CVec3,
    p11: Vec3,
    field: VectorField,
}

fn bilinear(h: &[linalg::Mat3; 3], a: &CVec3, b: &CVec3) -> CVec3 {
    let prec = a[0].prec();
    [0, 1, 2].map(|i| {
        let mut acc = HPComplex::zero(prec);
        for j in 0..3 {
            for k in 0..3 {
                if !h[i][j][k].is_zero() {
                    acc += &(&a[j] * &b[k]).scale(&h[i][j][k]);
                }
            }
        }
        acc
    })
}

impl LocalManifold {
    /// `vf` is the forward field; the stable manifold is built as the unstable one of its reversal.
    pub fn new(vf: &VectorField, branch: Branch, order: SeedOrder) -> Result<Self> {
        let prec = vf.prec;
        let field = match branch {
            Branch::Unstable => vf.clone(),
            Branch::Stable => vf.reversed(),
        };
        let tol = 2f64.powi(-(prec as i32) + 12);
        let cps = critical_points_of(&field, tol)?;
        let cp = match branch {
            Branch::Unstable => cps.minus,
            Branch::Stable => cps.plus,
        };
        let lambda = cp.complex_eigenvalue.clone();
        if !(lambda.re.is_sign_positive() && !lambda.re.is_zero() && cp.real_eigenvalue.is_sign_negative()) {
            return Err(Error::Domain("degenerate eigenstructure at the saddle-focus".into()));
        }
        let v = cp.complex_eigenvector.clone();
        let hess = field.hessian(&cp.position);
        let jc = linalg::mat_to_complex(&cp.jacobian);
        let shifted = |mu: &HPComplex| {
            let mut m = jc.clone();
            for (i, row) in m.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    *e = -e.clone();
                    if i == j {
                        *e += mu;
                    }
                }
            }
            m
        };
        let bvv = bilinear(&hess, &v, &v).map(|c| c.scale_f64(0.5));
        let two_l = lambda.scale_f64(2.0);
        let p20 = linalg::solve_complex(&shifted(&two_l), &bvv)?;
        let vbar = v.clone().map(|c| c.conj());
        let bvvb = bilinear(&hess, &v, &vbar);
        let re2 = HPComplex::from_real(Float::with_val(prec, &lambda.re * 2u32));
        let p11c = linalg::solve_complex(&shifted(&re2), &bvvb)?;
        let p11 = p11c.map(|c| c.re);
        Ok(LocalManifold {
            branch,
            point: cp.position,
            eigenvalue: lambda,
            transverse_eigenvalue: cp.real_eigenvalue,
            order,
            v,
            p20,
            p11,
            field,
        })
    }

    /// The field along which this manifold is unstable.
    pub fn field(&self) -> &VectorField {
        &self.field
    }

    /// Orientation of the first crossing with the section in `field()` time.
    pub fn crossing(&self) -> Crossing {
        match self.branch {
            Branch::Unstable => Crossing::Upward,
            Branch::Stable => Crossing::Downward,
        }
    }

    /// Predicted exponent `k` of the seeding error `O(rho^k)` measured at the section.
    pub fn seeding_exponent(&self) -> f64 {
        let normal = match self.order {
            SeedOrder::Linear => 2.0,
            SeedOrder::Quadratic => 3.0,
        };
        normal + self.transverse_eigenvalue.to_f64().abs() / self.eigenvalue.re.to_f64()
    }

    /// Seed at parameter angle `phi`, at distance exactly `rho` from the critical point.
    pub fn seed(&self, phi: &Float, rho: &Float) -> Vec3 {
        let prec = self.field.prec;
        let e = HPComplex::polar(&Float::with_val(prec, 1), phi);
        let lin: Vec3 = [0, 1, 2].map(|i| Float::with_val(prec, (&self.v[i] * &e).re.clone() * 2u32));
        let t = Float::with_val(prec, rho / linalg::norm(&lin));
        let mut disp = linalg::scale(&lin, &t);
        if self.order == SeedOrder::Quadratic {
            let s2 = e.powi(2).scale(&Float::with_val(prec, t.square_ref()));
            let t2 = Float::with_val(prec, t.square_ref());
            for i in 0..3 {
                disp[i] += Float::with_val(prec, (&self.p20[i] * &s2).re.clone() * 2u32);
                disp[i] += Float::with_val(prec, &self.p11[i] * &t2);
            }
            let k = Float::with_val(prec, rho / linalg::norm(&disp));
            disp = linalg::scale(&disp, &k);
        }
        linalg::add(&self.point, &disp)
    }
}

/// Seeds on the local manifold at `n_angles` equispaced parameter angles.
pub fn seed_manifold(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    side: Branch,
    rho: &Float,
    n_angles: usize,
    order: SeedOrder,
    prec: u32,
) -> Result<Vec<StateCartesian>> {
    if n_angles == 0 {
        return Err(Error::InvalidInput("n_angles must be positive".into()));
    }
    let vf = VectorField::compile(spec, series, params, prec)?;
    let lm = LocalManifold::new(&vf, side, order)?;
    let two_pi = Float::with_val(prec, pi(prec) * 2u32);
    Ok((0..n_angles)
        .map(|k| {
            let phi = Float::with_val(prec, &two_pi * k as u32) / n_angles as u32;
            StateCartesian::from_vec3(lm.seed(&phi, rho))
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionCrossing {
    pub theta_target: Float,
    /// Angle at the crossing, reduced to `(-pi, pi]` around the target.
    pub theta_at_section: Float,
    /// `(x^2 + y^2) / 2` at the crossing.
    pub r_at_section: Float,
    pub crossing_time: Float,
    /// `|z - Z0(u)|` at the crossing.
    pub refinement_residual: f64,
    pub theta_residual: f64,
    /// `|dr/dz|` along the flow at the crossing.
    pub dr_dz: f64,
    pub seed_angle: Float,
    pub iterations: usize,
}

struct Shooter<'a> {
    lm: &'a LocalManifold,
    rho: Float,
    z_section: Float,
    cfg: &'a ManifoldConfig,
}

impl Shooter<'_> {
    fn shoot(&self, phi: &Float, integ: &IntegratorConfig) -> Result<(SectionCrossing, Vec3)> {
        let prec = integ.precision_bits;
        let seed = self.lm.seed(phi, &self.rho);
        let hit = integrate_to_section(self.lm.field(), &seed, &self.z_section, self.lm.crossing(), self.cfg.t_max, integ)?;
        let s = &hit.state;
        let theta = Float::with_val(prec, s[1].atan2_ref(&s[0]));
        let r = (Float::with_val(prec, s[0].square_ref()) + Float::with_val(prec, s[1].square_ref())) / 2u32;
        let v = self.lm.field().eval(s);
        let rdot = Float::with_val(prec, &s[0] * &v[0]) + Float::with_val(prec, &s[1] * &v[1]);
        let dr_dz = (rdot.to_f64() / v[2].to_f64()).abs();
        Ok((
            SectionCrossing {
                theta_target: theta.clone(),
                theta_at_section: theta,
                r_at_section: r,
                crossing_time: hit.t,
                refinement_residual: hit.z_residual,
                theta_residual: 0.0,
                dr_dz,
                seed_angle: phi.clone(),
                iterations: 1,
            },
            hit.state,
        ))
    }

    fn prec(&self) -> u32 {
        self.cfg.integrator.precision_bits
    }

    fn wrap(&self, x: Float) -> Float {
        let prec = self.prec();
        let two_pi = Float::with_val(prec, pi(prec) * 2u32);
        let k = Float::with_val(prec, &x / &two_pi).round();
        x - k * two_pi
    }

    fn finish(&self, mut c: SectionCrossing, target: &Float, iterations: usize) -> SectionCrossing {
        let prec = self.prec();
        let off = self.wrap(Float::with_val(prec, &c.theta_at_section - target));
        c.theta_residual = off.to_f64().abs();
        c.theta_at_section = Float::with_val(prec, target + &off);
        c.theta_target = target.clone();
        c.iterations = iterations;
        c
    }

    /// Secant iteration on the seed angle, falling back to a bracketing search.
    fn match_theta(&self, target: &Float, phi0: Float, kappa: f64) -> Result<SectionCrossing> {
        let prec = self.prec();
        let integ = &self.cfg.integrator;
        let mut evals = 0;
        let mut phi_a = phi0;
        let (ca, _) = self.shoot(&phi_a, integ)?;
        evals += 1;
        let mut fa = self.wrap(Float::with_val(prec, &ca.theta_at_section - target));
        if fa.to_f64().abs() <= self.cfg.theta_tol {
            return Ok(self.finish(ca, target, evals));
        }
        let mut phi_b = Float::with_val(prec, &phi_a - Float::with_val(prec, &fa / kappa));
        for _ in 0..self.cfg.max_iterations {
            let (cb, _) = self.shoot(&phi_b, integ)?;
            evals += 1;
            let fb = self.wrap(Float::with_val(prec, &cb.theta_at_section - target));
            if fb.to_f64().abs() <= self.cfg.theta_tol {
                return Ok(self.finish(cb, target, evals));
            }
            let dphi = Float::with_val(prec, &phi_b - &phi_a);
            let mut slope = Float::with_val(prec, &fb - &fa) / &dphi;
            let sf = slope.to_f64();
            if !(sf.is_finite() && sf * kappa > 0.0 && sf.abs() > 0.1 * kappa.abs() && sf.abs() < 10.0 * kappa.abs()) {
                slope = Float::with_val(prec, kappa);
            }
            let next = Float::with_val(prec, &phi_b - Float::with_val(prec, &fb / &slope));
            phi_a = phi_b;
            fa = fb;
            phi_b = next;
        }
        self.bracket_theta(target)
    }

    fn bracket_theta(&self, target: &Float) -> Result<SectionCrossing> {
        let prec = self.prec();
        let integ = &self.cfg.integrator;
        let m = 48u32;
        let two_pi = Float::with_val(prec, pi(prec) * 2u32);
        let grid: Vec<Float> = (0..=m).map(|k| Float::with_val(prec, &two_pi * k) / m).collect();
        let vals: Vec<Float> = grid
            .iter()
            .map(|phi| {
                let (c, _) = self.shoot(phi, integ)?;
                Ok(self.wrap(Float::with_val(prec, &c.theta_at_section - target)))
            })
            .collect::<Result<_>>()?;
        let brackets: Vec<usize> = (0..m as usize)
            .filter(|&k| {
                let (a, b) = (vals[k].to_f64(), vals[k + 1].to_f64());
                a * b <= 0.0 && (a - b).abs() < std::f64::consts::PI
            })
            .collect();
        if brackets.len() != 1 {
            return Err(Error::Convergence {
                what: "section angle matching",
                detail: format!("non-monotone angle map: {} sign changes", brackets.len()),
            });
        }
        let k = brackets[0];
        let (mut a, mut fa) = (grid[k].clone(), vals[k].clone());
        let (mut b, mut fb) = (grid[k + 1].clone(), vals[k + 1].clone());
        let mut side = 0;
        for it in 0..200 {
            let c = Float::with_val(prec, &b - Float::with_val(prec, &b - &a) * &fb / Float::with_val(prec, &fb - &fa));
            let (cc, _) = self.shoot(&c, integ)?;
            let fc = self.wrap(Float::with_val(prec, &cc.theta_at_section - target));
            if fc.to_f64().abs() <= self.cfg.theta_tol {
                return Ok(self.finish(cc, target, it + 1 + m as usize));
            }
            if (fc.is_sign_negative()) == (fa.is_sign_negative()) {
                a = c;
                fa = fc;
                if side == -1 {
                    fb /= 2u32;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa /= 2u32;
                }
                side = 1;
            }
        }
        Err(Error::Convergence { what: "section angle matching", detail: "bracketing did not converge".into() })
    }
}

fn z_section(vf: &VectorField, u_section: &Float) -> Float {
    Float::with_val(vf.prec, &vf.d * u_section).tanh()
}

fn match_targets(lm: &LocalManifold, rho: f64, zs: &Float, targets: &[Float], cfg: &ManifoldConfig) -> Result<Vec<SectionCrossing>> {
    let prec = cfg.integrator.precision_bits;
    let sh = Shooter { lm, rho: Float::with_val(prec, rho), z_section: zs.clone(), cfg };
    let h = 0.05;
    let (c0, _) = sh.shoot(&Float::new(prec), &cfg.integrator)?;
    let (c1, _) = sh.shoot(&Float::with_val(prec, h), &cfg.integrator)?;
    let kappa = sh.wrap(Float::with_val(prec, &c1.theta_at_section - &c0.theta_at_section)).to_f64() / h;
    if !(kappa.abs() > 0.2 && kappa.abs() < 5.0) {
        return Err(Error::Convergence {
            what: "section angle matching",
            detail: format!("angle map derivative {kappa} is not close to +-1"),
        });
    }
    targets
        .par_iter()
        .map(|t| {
            let off = sh.wrap(Float::with_val(prec, t - &c0.theta_at_section));
            sh.match_theta(t, off / kappa, kappa)
        })
        .collect()
}

/// Crossings of one manifold with `z = Z0(u_section)` at the requested angles.
pub fn section_radius(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    side: Branch,
    u_section: &Float,
    theta_targets: &[Float],
    cfg: &ManifoldConfig,
) -> Result<Vec<SectionCrossing>> {
    cfg.validate()?;
    let vf = VectorField::compile(spec, series, params, cfg.integrator.precision_bits)?;
    let lm = LocalManifold::new(&vf, side, cfg.seed_order)?;
    let zs = z_section(&vf, u_section);
    match_targets(&lm, cfg.rho, &zs, theta_targets, cfg)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub integrator: f64,
    pub seeding: f64,
    pub refinement: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingSample {
    pub delta: Float,
    pub sigma: Float,
    pub u_section: Float,
    pub n_theta: usize,
    pub seed_radius: f64,
    pub precision_bits: u32,
    pub thetas: Vec<Float>,
    pub r_unstable: Vec<Float>,
    pub r_stable: Vec<Float>,
    /// `r^u - r^s` at `thetas`.
    pub delta_values: Vec<Float>,
    /// `sqrt(2 r^u) - sqrt(2 r^s)` at `thetas`.
    pub d_values: Vec<Float>,
    /// Modes `l = 0 ..= n_theta/2 - 1` of `Delta(theta) = sum_l Delta^[l] e^{i l theta}`.
    pub delta_modes: Vec<HPComplex>,
    pub d_modes: Vec<HPComplex>,
    pub error_budget: ErrorBudget,
    pub trusted: bool,
}

impl SplittingSample {
    /// Mode `l` of `Delta`; negative modes are conjugates.
    pub fn mode(&self, l: i32) -> Option<HPComplex> {
        let m = self.delta_modes.get(l.unsigned_abs() as usize)?;
        Some(if l < 0 { m.conj() } else { m.clone() })
    }

    pub fn max_abs_delta(&self) -> f64 {
        self.delta_values.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
    }
}

fn dft(values: &[Float], thetas: &[Float], lmax: usize) -> Vec<HPComplex> {
    let prec = values[0].prec();
    let inv_n = Float::with_val(prec, values.len() as u32).recip();
    (0..=lmax)
        .map(|l| {
            let mut acc = HPComplex::zero(prec);
            for (v, th) in values.iter().zip(thetas) {
                let ang = -Float::with_val(prec, th * l as u32);
                acc += &HPComplex::polar(v, &ang);
            }
            acc.scale(&inv_n)
        })
        .collect()
}

struct SideResult {
    r: Vec<Float>,
    integrator: f64,
    seeding: f64,
    refinement: f64,
}

fn measure_side(lm: &LocalManifold, zs: &Float, thetas: &[Float], cfg: &ManifoldConfig) -> Result<SideResult> {
    let prec = cfg.integrator.precision_bits;
    let n = thetas.len();
    let fine = match_targets(lm, cfg.rho / 2.0, zs, thetas, cfg)?;
    let coarse = match_targets(lm, cfg.rho, zs, thetas, cfg)?;
    let k = lm.seeding_exponent();
    let denom = 2f64.powf(k) - 1.0;
    let mut r = Vec::with_capacity(n);
    let mut seeding = 0.0f64;
    for (f, c) in fine.iter().zip(&coarse) {
        let diff = Float::with_val(prec, &f.r_at_section - &c.r_at_section);
        // the next-order coefficient oscillates with log(rho), so the whole difference is budgeted
        seeding = seeding.max(diff.to_f64().abs());
        if cfg.richardson {
            r.push(Float::with_val(prec, &f.r_at_section + diff / denom));
        } else {
            r.push(f.r_at_section.clone());
        }
    }
    let slope = (0..n)
        .map(|j| Float::with_val(prec, &r[(j + 1) % n] - &r[j]).to_f64().abs())
        .fold(0.0, f64::max)
        * n as f64
        / (2.0 * std::f64::consts::PI);
    let refinement = fine
        .iter()
        .map(|c| slope * c.theta_residual + c.dr_dz * c.refinement_residual)
        .fold(0.0, f64::max);
    let sh = Shooter { lm, rho: Float::with_val(prec, cfg.rho / 2.0), z_section: zs.clone(), cfg };
    let mut half = cfg.integrator.clone();
    half.step_scale *= 0.5;
    let integrator = fine
        .par_iter()
        .map(|c| {
            let (rep, _) = sh.shoot(&c.seed_angle, &half)?;
            let dr = Float::with_val(prec, &rep.r_at_section - &c.r_at_section).to_f64().abs();
            let dth = sh.wrap(Float::with_val(prec, &rep.theta_at_section - &c.theta_at_section)).to_f64().abs();
            Ok(dr + slope * dth)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SideResult { r, integrator, seeding, refinement })
}

/// Measures `Delta(u, theta) = r^u - r^s` at `n_theta` equispaced angles on `z = Z0(u_section)`.
pub fn splitting(
    spec: &ModelSpec,
    series: &PerturbationSeries,
    params: &Params,
    u_section: &Float,
    n_theta: usize,
    cfg: &ManifoldConfig,
) -> Result<SplittingSample> {
    cfg.validate()?;
    if n_theta < 4 || !n_theta.is_multiple_of(2) {
        return Err(Error::InvalidInput("n_theta must be even and at least 4".into()));
    }
    let prec = cfg.integrator.precision_bits;
    let vf = VectorField::compile(spec, series, params, prec)?;
    let zs = z_section(&vf, u_section);
    let two_pi = Float::with_val(prec, pi(prec) * 2u32);
    let thetas: Vec<Float> = (0..n_theta).map(|j| Float::with_val(prec, &two_pi * j as u32) / n_theta as u32).collect();
    let sides = [Branch::Unstable, Branch::Stable]
        .par_iter()
        .map(|&b| {
            let lm = LocalManifold::new(&vf, b, cfg.seed_order)?;
            measure_side(&lm, &zs, &thetas, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (su, ss) = (&sides[0], &sides[1]);
    let delta_values: Vec<Float> = su.r.iter().zip(&ss.r).map(|(a, b)| Float::with_val(prec, a - b)).collect();
    let d_values: Vec<Float> = su
        .r
        .iter()
        .zip(&ss.r)
        .map(|(a, b)| Float::with_val(prec, a * 2u32).sqrt() - Float::with_val(prec, b * 2u32).sqrt())
        .collect();
    let lmax = n_theta / 2 - 1;
    let delta_modes = dft(&delta_values, &thetas, lmax);
    let d_modes = dft(&d_values, &thetas, lmax);
    let integrator = su.integrator + ss.integrator;
    let seeding = su.seeding + ss.seeding;
    let refinement = su.refinement + ss.refinement;
    let total = integrator + seeding + refinement;
    let trusted = total < 0.1 * delta_modes[1].abs_f64();
    Ok(SplittingSample {
        delta: params.delta.clone(),
        sigma: params.sigma.clone(),
        u_section: u_section.clone(),
        n_theta,
        seed_radius: cfg.rho,
        precision_bits: prec,
        thetas,
        r_unstable: su.r.clone(),
        r_stable: ss.r.clone(),
        delta_values,
        d_values,
        delta_modes,
        d_modes,
        error_budget: ErrorBudget { integrator, seeding, refinement, total },
        trusted,
    })
}

/// `max |Delta| <= cosh^{2/d}(d u) (|Upsilon| + M delta^{p - 2/d} kappa^{-3 - 2/d} e^{-alpha pi/(2 d delta) + alpha kappa})`.
pub fn sharp_bound_check(spec: &ModelSpec, sample: &SplittingSample, upsilon0_abs: f64, kappa: f64, m: f64) -> bool {
    let delta = sample.delta.to_f64();
    let sigma = sample.sigma.to_f64();
    let d = spec.d.to_f64();
    let p = spec.p.to_f64();
    let alpha = spec.alpha0.to_f64() + spec.alpha1.to_f64() * delta * sigma + spec.alpha2.to_f64() * delta * delta;
    let u = sample.u_section.to_f64();
    let log_tail = m.ln() + (p - 2.0 / d) * delta.ln() + (-3.0 - 2.0 / d) * kappa.ln()
        - alpha * std::f64::consts::PI / (2.0 * d * delta)
        + alpha * kappa;
    let bound = (d * u).cosh().powf(2.0 / d) * (upsilon0_abs + log_tail.exp());
    sample.max_abs_delta() <= bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hp::dec;
    use crate::model::test_system_c;

    const P: u32 = 128;

    fn unperturbed(delta: &str) -> (ModelSpec, PerturbationSeries, Params) {
        let (spec, _) = test_system_c();
        let params = Params::new(&spec, dec(P, delta), Float::new(P)).unwrap();
        (spec, PerturbationSeries::new(3), params)
    }

    #[test]
    fn unperturbed_seeds_lie_in_the_eigenplane() {
        let (spec, zero, params) = unperturbed("0.2");
        let rho = dec(P, "0.001");
        let seeds = seed_manifold(&spec, &zero, &params, Branch::Unstable, &rho, 8, SeedOrder::Linear, P).unwrap();
        for s in &seeds {
            assert!(Float::with_val(P, &s.z + 1u32).abs().to_f64() < 1e-35);
            let dist = (Float::with_val(P, s.x.square_ref()) + Float::with_val(P, s.y.square_ref())).sqrt();
            assert!(Float::with_val(P, dist - &rho).abs().to_f64() < 1e-35);
        }
    }

    #[test]
    fn quadratic_seeds_follow_the_connection_surface() {
        // the unperturbed unstable manifold is x^2 + y^2 = (d + 1)(1 - z^2) / b
        let (spec, zero, params) = unperturbed("0.2");
        let rho = dec(P, "0.001");
        for order in [SeedOrder::Linear, SeedOrder::Quadratic] {
            let seeds = seed_manifold(&spec, &zero, &params, Branch::Unstable, &rho, 8, order, P).unwrap();
            let worst = seeds
                .iter()
                .map(|s| {
                    let rr = Float::with_val(P, s.x.square_ref()) + Float::with_val(P, s.y.square_ref());
                    let gap = rr - (1u32 - Float::with_val(P, s.z.square_ref())) * 2u32;
                    gap.to_f64().abs()
                })
                .fold(0.0, f64::max);
            match order {
                SeedOrder::Linear => assert!(worst > 1e-7),
                SeedOrder::Quadratic => assert!(worst < 1e-8, "{worst}"),
            }
        }
    }

    #[test]
    fn unperturbed_section_radius_is_r0() {
        let (spec, zero, params) = unperturbed("0.25");
        let cfg = ManifoldConfig::new(P).unwrap();
        let targets: Vec<Float> = [0.0, 1.0, -2.5].iter().map(|&t| Float::with_val(P, t)).collect();
        let u = Float::new(P);
        for side in [Branch::Unstable, Branch::Stable] {
            let cs = section_radius(&spec, &zero, &params, side, &u, &targets, &cfg).unwrap();
            for c in cs {
                assert!((c.r_at_section.to_f64() - 1.0).abs() < 1e-25, "{side:?} {}", c.r_at_section);
                assert!(c.theta_residual <= cfg.theta_tol);
            }
        }
    }

    #[test]
    fn dft_recovers_modes() {
        let n = 8;
        let two_pi = Float::with_val(P, pi(P) * 2u32);
        let th: Vec<Float> = (0..n).map(|j| Float::with_val(P, &two_pi * j as u32) / n as u32).collect();
        // 0.5 + 2 cos(theta - 0.3) = 0.5 + e^{-0.3 i} e^{i theta} + c.c.
        let v: Vec<Float> = th.iter().map(|t| (Float::with_val(P, t - 0.3f64).cos() * 2u32) + 0.5f64).collect();
        let m = dft(&v, &th, 3);
        assert!((m[0].re.to_f64() - 0.5).abs() < 1e-30);
        assert!((m[1].re.to_f64() - 0.3f64.cos()).abs() < 1e-30);
        assert!((m[1].im.to_f64() + 0.3f64.sin()).abs() < 1e-30);
        assert!(m[2].abs_f64() < 1e-30);
    }
}
