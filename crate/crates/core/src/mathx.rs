//! Signed powers and the small dense-matrix kernels used on every control step.
//!
//! Matrices here never exceed [`MAX_DIM`] rows: the largest one in the lab is
//! the 5x5 mixing matrix. Determinants use exact cofactor formulas up to 3x3
//! and LU with partial pivoting above that.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest square dimension accepted by the kernels in this module.
pub const MAX_DIM: usize = 6;

/// Tolerance on `|A - A^T|` for routines that require a symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// `|z|^q sign(z)` with `sign(0) = 0`.
pub fn signed_power(z: f64, q: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::invalid(format!("signed_power: non-finite base {z}")));
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::invalid(format!("signed_power: exponent must be positive, got {q}")));
    }
    Ok(spow(z, q))
}

/// Unchecked signed power for hot loops whose exponents were validated once.
#[inline]
pub(crate) fn spow(z: f64, q: f64) -> f64 {
    if z == 0.0 {
        // keeps the sign bit so that spow(-z) == -spow(z) holds bitwise
        z
    } else {
        // exact odd symmetry: powf sees the same |z| for z and -z
        let m = z.abs().powf(q);
        if z < 0.0 {
            -m
        } else {
            m
        }
    }
}

/// Elementwise [`signed_power`].
pub fn signed_power_vec(z: &DVector<f64>, q: f64) -> Result<DVector<f64>> {
    signed_power(0.0, q)?;
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("signed_power_vec: non-finite entry {bad}")));
    }
    Ok(z.map(|v| spow(v, q)))
}

#[inline]
pub(crate) fn spow_vec(z: &DVector<f64>, q: f64) -> DVector<f64> {
    z.map(|v| spow(v, q))
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_square(a: &DMatrix<f64>, op: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!("{op}: matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    if a.nrows() > MAX_DIM {
        return Err(Error::invalid(format!("{op}: dimension {} exceeds {MAX_DIM}", a.nrows())));
    }
    Ok(a.nrows())
}

/// Determinant of a square matrix of dimension at most [`MAX_DIM`].
pub fn det(a: &DMatrix<f64>) -> Result<f64> {
    check_square(a, "det")?;
    Ok(det_unchecked(a))
}

fn det_unchecked(a: &DMatrix<f64>) -> f64 {
    match a.nrows() {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        3 => {
            a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
                - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
                + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)])
        }
        _ => det_lu(a.clone()),
    }
}

/// Gaussian elimination with partial pivoting; consumes its working copy.
fn det_lu(mut a: DMatrix<f64>) -> f64 {
    let m = a.nrows();
    let mut acc = 1.0;
    for col in 0..m {
        let mut piv = col;
        let mut best = a[(col, col)].abs();
        for r in col + 1..m {
            let v = a[(r, col)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap_rows(piv, col);
            acc = -acc;
        }
        let p = a[(col, col)];
        acc *= p;
        for r in col + 1..m {
            let factor = a[(r, col)] / p;
            if factor != 0.0 {
                for c in col + 1..m {
                    let v = a[(col, c)];
                    a[(r, c)] -= factor * v;
                }
            }
        }
    }
    acc
}

fn minor(a: &DMatrix<f64>, skip_row: usize, skip_col: usize) -> DMatrix<f64> {
    a.clone().remove_row(skip_row).remove_column(skip_col)
}

/// Classical adjugate (transpose of the cofactor matrix).
pub fn adjugate(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = check_square(a, "adjugate")?;
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0));
    }
    let mut adj = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let sgn = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(i, j)] = sgn * det_unchecked(&minor(a, j, i));
        }
    }
    Ok(adj)
}

/// `w_j = det(phi with column j replaced by v)`, i.e. `adj(phi) v` without
/// forming the adjugate.
pub fn cramer_products(phi: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let m = check_square(phi, "cramer_products")?;
    if v.len() != m {
        return Err(Error::invalid(format!("cramer_products: vector length {} for {m}x{m} matrix", v.len())));
    }
    let mut out = DVector::zeros(m);
    let mut work = phi.clone();
    for j in 0..m {
        work.set_column(j, v);
        out[j] = det_unchecked(&work);
        work.set_column(j, &phi.column(j));
    }
    Ok(out)
}

fn check_symmetric(a: &DMatrix<f64>, op: &str) -> Result<usize> {
    let m = check_square(a, op)?;
    for i in 0..m {
        for j in i + 1..m {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if !(d <= SYMMETRY_TOL) {
                return Err(Error::invalid(format!("{op}: asymmetry {d:e} at ({i},{j})")));
            }
        }
    }
    Ok(m)
}

/// All eigenvalues of a symmetric matrix, ascending.
///
/// Closed forms up to 2x2, trigonometric cubic solution for 3x3, cyclic
/// Jacobi rotations above that.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = check_symmetric(a, "sym_eigenvalues")?;
    let mut ev = match m {
        0 => Vec::new(),
        1 => vec![a[(0, 0)]],
        2 => {
            let (p, q, r) = (a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
            let mean = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            vec![mean - rad, mean + rad]
        }
        3 => eig3_sym(a),
        _ => jacobi_eigenvalues(a),
    };
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

pub fn min_eig_sym(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.first().copied().unwrap_or(0.0))
}

pub fn max_eig_sym(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.last().copied().unwrap_or(0.0))
}

fn eig3_sym(a: &DMatrix<f64>) -> Vec<f64> {
    let s = |i, j| 0.5 * (a[(i, j)] + a[(j, i)]);
    let p1 = s(0, 1).powi(2) + s(0, 2).powi(2) + s(1, 2).powi(2);
    let (a00, a11, a22) = (a[(0, 0)], a[(1, 1)], a[(2, 2)]);
    if p1 == 0.0 {
        return vec![a00, a11, a22];
    }
    let q = (a00 + a11 + a22) / 3.0;
    let p2 = (a00 - q).powi(2) + (a11 - q).powi(2) + (a22 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            b[(i, j)] = (s(i, j) - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (det_unchecked(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    vec![e1, 3.0 * q - e1 - e3, e3]
}

fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut w = (a + a.transpose()) * 0.5;
    let scale = w.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                off += w[(i, j)] * w[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = w[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = sign_nonzero(theta) / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..m {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
            }
        }
    }
    (0..m).map(|i| w[(i, i)]).collect()
}

fn sign_nonzero(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() > MAX_DIM || a.ncols() > MAX_DIM {
        return Err(Error::invalid("spectral_norm: matrix too large"));
    }
    let gram = a.transpose() * a;
    Ok(max_eig_sym(&symmetrize(&gram))?.max(0.0).sqrt())
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
