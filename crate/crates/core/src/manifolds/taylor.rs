//! Variable-order Taylor-series integration of a polynomial vector field.
//!
//! Taylor coefficients come from the recurrence on a product graph of the monomials; the step
//! size follows Jorba and Zou, and section crossings are located on the step polynomial itself.

use rug::Float;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::model::VectorField;

#[derive(Clone, Copy, Debug)]
enum Operand {
    Var(usize),
    Node(usize),
}

/// Jet engine for one compiled field.
pub struct TaylorJet {
    prec: u32,
    order: usize,
    nodes: Vec<(Operand, Operand)>,
    comps: [Vec<(Operand, Float)>; 3],
    constants: [Float; 3],
    vars: [Vec<Float>; 3],
    vals: Vec<Vec<Float>>,
}

impl TaylorJet {
    pub fn new(field: &VectorField, order: usize) -> Self {
        let prec = field.prec;
        let monos = field.monomials().to_vec();
        let mut keys: Vec<[u32; 3]> = Vec::new();
        let mut nodes: Vec<(Operand, Operand)> = Vec::new();
        fn operand(m: [u32; 3], keys: &mut Vec<[u32; 3]>, nodes: &mut Vec<(Operand, Operand)>) -> Operand {
            let deg: u32 = m.iter().sum();
            assert!(deg >= 1);
            if deg == 1 {
                return Operand::Var(m.iter().position(|&e| e == 1).unwrap());
            }
            if let Some(i) = keys.iter().position(|k| *k == m) {
                return Operand::Node(i);
            }
            let j = m.iter().position(|&e| e > 0).unwrap();
            let mut lower = m;
            lower[j] -= 1;
            let a = operand(lower, keys, nodes);
            keys.push(m);
            nodes.push((a, Operand::Var(j)));
            Operand::Node(nodes.len() - 1)
        }
        let comps = [0, 1, 2].map(|i| {
            field
                .terms(i)
                .into_iter()
                .map(|(idx, c)| (operand(monos[idx], &mut keys, &mut nodes), c))
                .collect::<Vec<_>>()
        });
        let constants = [0, 1, 2].map(|i| field.constant(i));
        let vars = [0, 1, 2].map(|_| (0..=order).map(|_| Float::new(prec)).collect());
        let vals = nodes.iter().map(|_| (0..=order).map(|_| Float::new(prec)).collect()).collect();
        TaylorJet { prec, order, nodes, comps, constants, vars, vals }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn get(&self, o: Operand, j: usize) -> &Float {
        match o {
            Operand::Var(i) => &self.vars[i][j],
            Operand::Node(i) => &self.vals[i][j],
        }
    }

    /// Fills the Taylor coefficients of the solution through `x0`.
    pub fn expand(&mut self, x0: &Vec3) {
        let prec = self.prec;
        for i in 0..3 {
            self.vars[i][0].assign_float(&x0[i]);
        }
        let mut acc = Float::new(prec);
        for j in 0..self.order {
            for n in 0..self.nodes.len() {
                let (a, b) = self.nodes[n];
                acc.assign_float_zero();
                for i in 0..=j {
                    acc += self.get(a, i) * self.get(b, j - i);
                }
                self.vals[n][j].assign_float(&acc);
            }
            for c in 0..3 {
                acc.assign_float_zero();
                for (o, coef) in &self.comps[c] {
                    acc += self.get(*o, j) * coef;
                }
                if j == 0 {
                    acc += &self.constants[c];
                }
                acc /= (j + 1) as u32;
                self.vars[c][j + 1].assign_float(&acc);
            }
        }
    }

    /// `max_i |x_i^{[j]}|`.
    pub fn coefficient_norm(&self, j: usize) -> f64 {
        (0..3).map(|i| self.vars[i][j].to_f64().abs()).fold(0.0, f64::max)
    }

    /// Evaluates component `i` of the step polynomial at `h`.
    pub fn eval_component(&self, i: usize, h: &Float) -> Float {
        let mut acc = Float::with_val(self.prec, &self.vars[i][self.order]);
        for j in (0..self.order).rev() {
            acc *= h;
            acc += &self.vars[i][j];
        }
        acc
    }

    pub fn eval(&self, h: &Float) -> Vec3 {
        [0, 1, 2].map(|i| self.eval_component(i, h))
    }

    /// Derivative of component `i` of the step polynomial at `h`.
    pub fn eval_component_derivative(&self, i: usize, h: &Float) -> Float {
        let mut acc = Float::with_val(self.prec, &self.vars[i][self.order] * self.order as u32);
        for j in (1..self.order).rev() {
            acc *= h;
            acc += Float::with_val(self.prec, &self.vars[i][j] * j as u32);
        }
        acc
    }
}

trait AssignExt {
    fn assign_float(&mut self, v: &Float);
    fn assign_float_zero(&mut self);
}

impl AssignExt for Float {
    fn assign_float(&mut self, v: &Float) {
        use rug::Assign;
        self.assign(v);
    }
    fn assign_float_zero(&mut self) {
        use rug::Assign;
        self.assign(0u32);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    Taylor,
    BulirschStoer,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub precision_bits: u32,
    pub max_steps: usize,
    /// Multiplies every step the controller proposes; 0.5 gives the step-halving replica.
    pub step_scale: f64,
}

impl IntegratorConfig {
    pub fn new(precision_bits: u32, tol: f64) -> Result<Self> {
        let c = IntegratorConfig {
            method: Method::Taylor,
            abs_tol: tol,
            rel_tol: tol,
            precision_bits,
            max_steps: 100_000,
            step_scale: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let floor = 2f64.powi(-(self.precision_bits as i32) + 16);
        if !(self.abs_tol >= floor && self.rel_tol >= floor) {
            return Err(Error::InvalidInput(format!(
                "integrator tolerances must be at least 2^(16 - precision) = {floor:e}"
            )));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::InvalidInput("step_scale must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn taylor_order(&self) -> usize {
        let eps = self.abs_tol.min(self.rel_tol);
        ((-eps.ln() / 2.0).ceil() as usize + 1).max(8)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Float,
    pub state: Vec3,
    pub steps: usize,
    /// `(t, state)` at every accepted step.
    pub checkpoints: Vec<(Float, Vec3)>,
}

/// Orientation of `z - z_section` at a crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    Upward,
    Downward,
}

impl Crossing {
    pub fn sign(self) -> i32 {
        match self {
            Crossing::Upward => 1,
            Crossing::Downward => -1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SectionHit {
    pub t: Float,
    pub state: Vec3,
    pub steps: usize,
    /// `|z - z_section|` at the returned point.
    pub z_residual: f64,
}

fn taylor_step_size(jet: &TaylorJet, x: &Vec3, cfg: &IntegratorConfig) -> f64 {
    let n = jet.order();
    let xn = (0..3).map(|i| x[i].to_f64().abs()).fold(0.0, f64::max);
    let eps = cfg.abs_tol.max(cfg.rel_tol * xn);
    let mut h = f64::INFINITY;
    for j in [n - 1, n] {
        let c = jet.coefficient_norm(j);
        if c > 0.0 {
            h = h.min((eps / c).powf(1.0 / j as f64));
        }
    }
    if !h.is_finite() {
        h = 1.0;
    }
    h * (-0.7 / (n as f64 - 1.0)).exp() * cfg.step_scale
}

fn check_state(x: &Vec3) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.to_f64().abs() > 1e3) {
        return Err(Error::Domain("trajectory left the region of interest".into()));
    }
    Ok(())
}

/// Integrates from `x0` over `[0, t_end]` (`t_end > 0`).
pub fn integrate(field: &VectorField, x0: &Vec3, t_end: &Float, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.method == Method::BulirschStoer {
        return super::bs::integrate(field, x0, t_end, cfg);
    }
    let prec = cfg.precision_bits;
    let mut jet = TaylorJet::new(field, cfg.taylor_order());
    let mut x: Vec3 = [0, 1, 2].map(|i| Float::with_val(prec, &x0[i]));
    let mut t = Float::new(prec);
    let mut checkpoints = vec![(t.clone(), x.clone())];
    let mut steps = 0;
    while t < *t_end {
        if steps >= cfg.max_steps {
            return Err(Error::Convergence { what: "Taylor integration", detail: "max_steps reached".into() });
        }
        jet.expand(&x);
        let mut h = Float::with_val(prec, taylor_step_size(&jet, &x, cfg));
        let rest = Float::with_val(prec, t_end - &t);
        let last = h >= rest;
        if last {
            h = rest;
        }
        x = jet.eval(&h);
        check_state(&x)?;
        if last {
            t = t_end.clone();
        } else {
            t += &h;
        }
        steps += 1;
        checkpoints.push((t.clone(), x.clone()));
    }
    Ok(Trajectory { t, state: x, steps, checkpoints })
}

/// Integrates from `x0` until `z` first crosses `z_section` with the given orientation, giving up
/// after `t_max`.
pub fn integrate_to_section(
    field: &VectorField,
    x0: &Vec3,
    z_section: &Float,
    crossing: Crossing,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<SectionHit> {
    cfg.validate()?;
    if cfg.method == Method::BulirschStoer {
        return super::bs::integrate_to_section(field, x0, z_section, crossing, t_max, cfg);
    }
    let sg = crossing.sign();
    let prec = cfg.precision_bits;
    let mut jet = TaylorJet::new(field, cfg.taylor_order());
    let mut x: Vec3 = [0, 1, 2].map(|i| Float::with_val(prec, &x0[i]));
    let mut t = Float::new(prec);
    let mut steps = 0;
    let zs = Float::with_val(prec, z_section);
    let tiny = 2f64.powi(-(prec as i32) + 8);
    while t.to_f64() < t_max {
        if steps >= cfg.max_steps {
            return Err(Error::Convergence { what: "section search", detail: "max_steps reached".into() });
        }
        jet.expand(&x);
        let h = Float::with_val(prec, taylor_step_size(&jet, &x, cfg));
        let g0 = Float::with_val(prec, &x[2] - &zs) * sg;
        let g1 = Float::with_val(prec, jet.eval_component(2, &h) - &zs) * sg;
        if g0 < 0 && g1 >= 0 {
            // root of z(tau) - z_section on [0, h]: Newton safeguarded by bisection
            let mut lo = Float::new(prec);
            let mut hi = h.clone();
            let mut tau = Float::with_val(prec, &h * Float::with_val(prec, -&g0) / Float::with_val(prec, &g1 - &g0));
            for _ in 0..200 {
                let g = Float::with_val(prec, jet.eval_component(2, &tau) - &zs) * sg;
                if g < 0 {
                    lo = tau.clone();
                } else {
                    hi = tau.clone();
                }
                let dg = jet.eval_component_derivative(2, &tau) * sg;
                let mut next = Float::with_val(prec, &tau - Float::with_val(prec, &g / &dg));
                if !(next > lo && next < hi) {
                    next = Float::with_val(prec, &lo + &hi) / 2u32;
                }
                let moved = Float::with_val(prec, &next - &tau).abs().to_f64();
                tau = next;
                if moved <= tiny * h.to_f64() {
                    break;
                }
            }
            let state = jet.eval(&tau);
            let z_residual = Float::with_val(prec, &state[2] - &zs).abs().to_f64();
            t += &tau;
            return Ok(SectionHit { t, state, steps: steps + 1, z_residual });
        }
        x = jet.eval(&h);
        check_state(&x)?;
        t += &h;
        steps += 1;
    }
    Err(Error::Convergence { what: "section search", detail: format!("no crossing before t = {t_max}") })
}
