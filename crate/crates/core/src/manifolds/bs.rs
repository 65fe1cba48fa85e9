//! Gragg–Bulirsch–Stoer extrapolation, the cross-check for the Taylor integrator.

use rug::Float;

use super::taylor::{Crossing, IntegratorConfig, SectionHit, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::model::VectorField;

const K_MAX: usize = 14;

fn midpoint(field: &VectorField, x: &Vec3, big_h: &Float, n: usize) -> Vec3 {
    let prec = field.prec;
    let h = Float::with_val(prec, big_h / n as u32);
    let two_h = Float::with_val(prec, &h * 2u32);
    let mut z0 = x.clone();
    let mut z1 = linalg::add(x, &linalg::scale(&field.eval(x), &h));
    for _ in 1..n {
        let z2 = linalg::add(&z0, &linalg::scale(&field.eval(&z1), &two_h));
        z0 = z1;
        z1 = z2;
    }
    let tail = linalg::add(&z1, &linalg::scale(&field.eval(&z1), &h));
    [0, 1, 2].map(|i| Float::with_val(prec, &z0[i] + &tail[i]) / 2u32)
}

/// One extrapolated step; `Some((state, error, columns))` once two diagonal entries agree.
fn extrapolated_step(field: &VectorField, x: &Vec3, h: &Float, cfg: &IntegratorConfig) -> Option<(Vec3, f64, usize)> {
    let prec = field.prec;
    let xn = x.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max);
    let tol = cfg.abs_tol.max(cfg.rel_tol * xn);
    let seq: Vec<usize> = (1..=K_MAX).map(|k| 2 * k).collect();
    let mut table: Vec<Vec3> = Vec::new();
    for k in 0..K_MAX {
        let mut row = vec![midpoint(field, x, h, seq[k])];
        for j in 1..=k {
            let (a, b) = ((seq[k] * seq[k]) as u32, (seq[k - j] * seq[k - j]) as u32);
            let r = Float::with_val(prec, a - b) / b;
            let next = [0, 1, 2].map(|i| {
                let diff = Float::with_val(prec, &row[j - 1][i] - &table[j - 1][i]);
                Float::with_val(prec, &row[j - 1][i] + diff / &r)
            });
            row.push(next);
        }
        if k >= 2 {
            let err = linalg::norm(&linalg::sub(&row[k], &row[k - 1])).to_f64();
            if !err.is_finite() {
                return None;
            }
            if err <= tol {
                return Some((row[k].clone(), err, k));
            }
        }
        table = row;
    }
    None
}

fn check_state(x: &Vec3) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || v.to_f64().abs() > 1e3) {
        return Err(Error::Domain("trajectory left the region of interest".into()));
    }
    Ok(())
}

struct Stepper<'a> {
    field: &'a VectorField,
    cfg: &'a IntegratorConfig,
    h: f64,
}

impl Stepper<'_> {
    /// Accepted step of at most `limit`; returns `(state, step)`.
    fn step(&mut self, x: &Vec3, limit: Option<&Float>) -> Result<(Vec3, Float)> {
        let prec = self.field.prec;
        for _ in 0..60 {
            let mut h = Float::with_val(prec, self.h * self.cfg.step_scale);
            let capped = matches!(limit, Some(l) if h >= *l);
            if let (true, Some(l)) = (capped, limit) {
                h = l.clone();
            }
            match extrapolated_step(self.field, x, &h, self.cfg) {
                Some((y, _, k)) => {
                    if !capped {
                        if k <= K_MAX / 2 {
                            self.h *= 1.5;
                        } else if k >= K_MAX - 2 {
                            self.h *= 0.7;
                        }
                    }
                    check_state(&y)?;
                    return Ok((y, h));
                }
                None => self.h *= 0.5,
            }
        }
        Err(Error::Convergence { what: "Bulirsch-Stoer step", detail: "step size underflow".into() })
    }
}

pub fn integrate(field: &VectorField, x0: &Vec3, t_end: &Float, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let prec = cfg.precision_bits;
    let mut st = Stepper { field, cfg, h: 0.1 };
    let mut x: Vec3 = [0, 1, 2].map(|i| Float::with_val(prec, &x0[i]));
    let mut t = Float::new(prec);
    let mut checkpoints = vec![(t.clone(), x.clone())];
    let mut steps = 0;
    while t < *t_end {
        if steps >= cfg.max_steps {
            return Err(Error::Convergence { what: "Bulirsch-Stoer integration", detail: "max_steps reached".into() });
        }
        let rest = Float::with_val(prec, t_end - &t);
        let (y, h) = st.step(&x, Some(&rest))?;
        x = y;
        if h >= rest {
            t = t_end.clone();
        } else {
            t += &h;
        }
        steps += 1;
        checkpoints.push((t.clone(), x.clone()));
    }
    Ok(Trajectory { t, state: x, steps, checkpoints })
}

pub fn integrate_to_section(
    field: &VectorField,
    x0: &Vec3,
    z_section: &Float,
    crossing: Crossing,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<SectionHit> {
    let prec = cfg.precision_bits;
    let sg = crossing.sign();
    let mut st = Stepper { field, cfg, h: 0.1 };
    let mut x: Vec3 = [0, 1, 2].map(|i| Float::with_val(prec, &x0[i]));
    let mut t = Float::new(prec);
    let mut steps = 0;
    while t.to_f64() < t_max {
        if steps >= cfg.max_steps {
            return Err(Error::Convergence { what: "section search", detail: "max_steps reached".into() });
        }
        let (y, h) = st.step(&x, None)?;
        steps += 1;
        let g0 = Float::with_val(prec, &x[2] - z_section) * sg;
        let g1 = Float::with_val(prec, &y[2] - z_section) * sg;
        if g0 < 0 && g1 >= 0 {
            // Illinois iteration on the length of the final step
            let (mut a, mut ga) = (Float::new(prec), g0);
            let (mut b, mut gb) = (h, g1);
            let mut best = (b.clone(), y.clone(), gb.clone());
            let mut side = 0;
            for _ in 0..200 {
                let m = Float::with_val(prec, &b - &a) * &gb / Float::with_val(prec, &gb - &ga);
                let c = Float::with_val(prec, &b - m);
                let yc = match extrapolated_step(field, &x, &c, cfg) {
                    Some((yc, _, _)) => yc,
                    None => return Err(Error::Convergence { what: "section search", detail: "refinement step failed".into() }),
                };
                let gc = Float::with_val(prec, &yc[2] - z_section) * sg;
                if gc.to_f64().abs() < best.2.to_f64().abs() {
                    best = (c.clone(), yc, gc.clone());
                }
                if gc.to_f64().abs() <= cfg.abs_tol * 1e-2 || gc.is_zero() {
                    break;
                }
                if gc < 0 {
                    a = c;
                    ga = gc;
                    if side == -1 {
                        gb /= 2u32;
                    }
                    side = -1;
                } else {
                    b = c;
                    gb = gc;
                    if side == 1 {
                        ga /= 2u32;
                    }
                    side = 1;
                }
            }
            t += &best.0;
            let z_residual = best.2.abs().to_f64();
            return Ok(SectionHit { t, state: best.1, steps, z_residual });
        }
        x = y;
        t += &h;
    }
    Err(Error::Convergence { what: "section search", detail: format!("no crossing before t = {t_max}") })
}

