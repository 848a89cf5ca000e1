//! Small dense helpers shared by the fitters.
//!
//! Positive definiteness is decided by a Cholesky factorization whose pivots
//! must all exceed `PIVOT_TOL` times the largest diagonal entry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for the positive-definiteness check.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower Cholesky factor of `m`, or `None` when some pivot falls below
/// `PIVOT_TOL * max_i m_ii` (or the matrix is empty or non-finite).
pub fn cholesky_checked(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = m.nrows();
    if p == 0 || m.ncols() != p {
        return None;
    }
    let max_diag = (0..p).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return None;
    }
    let floor = PIVOT_TOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky_checked(m).is_some()
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let l = cholesky_checked(m).ok_or(Error::NotPositiveDefinite(what))?;
    let p = m.nrows();
    // Solve L Lᵀ X = I column by column.
    let mut inv = DMatrix::<f64>::identity(p, p);
    for col in 0..p {
        let mut x = inv.column(col).clone_owned();
        forward_sub(&l, &mut x);
        backward_sub_t(&l, &mut x);
        inv.set_column(col, &x);
    }
    symmetrize(&mut inv);
    Ok(inv)
}

/// `log |m|` for a symmetric positive definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let l = cholesky_checked(m).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let l = cholesky_checked(m).ok_or(Error::NotPositiveDefinite(what))?;
    let mut x = b.clone();
    forward_sub(&l, &mut x);
    backward_sub_t(&l, &mut x);
    Ok(x)
}

fn forward_sub(l: &DMatrix<f64>, x: &mut DVector<f64>) {
    let p = l.nrows();
    for i in 0..p {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

fn backward_sub_t(l: &DMatrix<f64>, x: &mut DVector<f64>) {
    let p = l.nrows();
    for i in (0..p).rev() {
        let mut s = x[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs_diff(m, &m.transpose())
}
