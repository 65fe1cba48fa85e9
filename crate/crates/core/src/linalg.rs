//! 3x3 dense linear algebra in multiprecision.

use rug::Float;

use crate::error::{Error, Result};
use crate::hp::HPComplex;

pub type Vec3 = [Float; 3];
pub type Mat3 = [[Float; 3]; 3];
pub type CVec3 = [HPComplex; 3];

pub fn zeros(prec: u32) -> Vec3 {
    [Float::new(prec), Float::new(prec), Float::new(prec)]
}

pub fn norm(v: &Vec3) -> Float {
    let p = v[0].prec();
    let mut s = Float::new(p);
    for x in v {
        s += Float::with_val(p, x.square_ref());
    }
    s.sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    let p = a[0].prec();
    [0, 1, 2].map(|i| Float::with_val(p, &a[i] - &b[i]))
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    let p = a[0].prec();
    [0, 1, 2].map(|i| Float::with_val(p, &a[i] + &b[i]))
}

pub fn scale(a: &Vec3, k: &Float) -> Vec3 {
    let p = a[0].prec();
    [0, 1, 2].map(|i| Float::with_val(p, &a[i] * k))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat3, b: &Vec3) -> Result<Vec3> {
    let p = b[0].prec();
    let mut m: Vec<Vec<Float>> = (0..3)
        .map(|i| {
            let mut row: Vec<Float> = a[i].iter().map(|x| Float::with_val(p, x)).collect();
            row.push(Float::with_val(p, &b[i]));
            row
        })
        .collect();
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].clone().abs().partial_cmp(&m[j][col].clone().abs()).unwrap())
            .unwrap();
        if m[piv][col].is_zero() {
            return Err(Error::Domain("singular 3x3 system".into()));
        }
        m.swap(col, piv);
        for r in col + 1..3 {
            let f = Float::with_val(p, &m[r][col] / &m[col][col]);
            for k in col..4 {
                let t = Float::with_val(p, &m[col][k] * &f);
                m[r][k] -= t;
            }
        }
    }
    let mut x = zeros(p);
    for i in (0..3).rev() {
        let mut s = m[i][3].clone();
        for k in i + 1..3 {
            s -= Float::with_val(p, &m[i][k] * &x[k]);
        }
        x[i] = s / &m[i][i];
    }
    Ok(x)
}

/// Complex version of [`solve`].
pub fn solve_complex(a: &[[HPComplex; 3]; 3], b: &CVec3) -> Result<CVec3> {
    let mut m: Vec<Vec<HPComplex>> = (0..3)
        .map(|i| {
            let mut row = a[i].to_vec();
            row.push(b[i].clone());
            row
        })
        .collect();
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs_f64().partial_cmp(&m[j][col].abs_f64()).unwrap())
            .unwrap();
        if m[piv][col].is_zero() {
            return Err(Error::Domain("singular 3x3 system".into()));
        }
        m.swap(col, piv);
        for r in col + 1..3 {
            let f = &m[r][col] / &m[col][col];
            for k in col..4 {
                let t = &m[col][k] * &f;
                m[r][k] -= &t;
            }
        }
    }
    let p = b[0].prec();
    let mut x = [HPComplex::zero(p), HPComplex::zero(p), HPComplex::zero(p)];
    for i in (0..3).rev() {
        let mut s = m[i][3].clone();
        for k in i + 1..3 {
            s -= &(&m[i][k] * &x[k]);
        }
        x[i] = &s / &m[i][i];
    }
    Ok(x)
}

pub fn cross_complex(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        &(&a[1] * &b[2]) - &(&a[2] * &b[1]),
        &(&a[2] * &b[0]) - &(&a[0] * &b[2]),
        &(&a[0] * &b[1]) - &(&a[1] * &b[0]),
    ]
}

pub fn to_complex(v: &Vec3) -> CVec3 {
    [0, 1, 2].map(|i| HPComplex::from_real(v[i].clone()))
}

pub fn mat_to_complex(a: &Mat3) -> [[HPComplex; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| HPComplex::from_real(a[i][j].clone())))
}

pub fn mat_vec_complex(a: &Mat3, v: &CVec3) -> CVec3 {
    [0, 1, 2].map(|i| {
        let mut s = HPComplex::zero(v[0].prec());
        for j in 0..3 {
            s += &v[j].scale(&a[i][j]);
        }
        s
    })
}
