//! Dense linear algebra: Householder QR, one-sided Jacobi SVD and
//! minimum-norm least squares.
//!
//! Matrices are [`Tensor`]s of rank 2 in row-major order. Tall inputs are
//! reduced by QR before Jacobi so that small singular values keep their
//! relative accuracy; no Gram matrix is formed.

use crate::error::{shape_err, Result, VolterraError};
use crate::tensor::Tensor;

/// Sweep limit for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Thin SVD `A = U diag(s) V^T` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` left singular vectors, `k = min(rows, cols)`.
    pub u: Tensor,
    pub s: Vec<f64>,
    /// `cols x k` right singular vectors.
    pub v: Tensor,
}

fn dims(a: &Tensor) -> Result<(usize, usize)> {
    if a.rank() != 2 {
        return shape_err(format!("expected a matrix, got shape {:?}", a.shape()));
    }
    Ok((a.shape()[0], a.shape()[1]))
}

/// Columns of a row-major matrix.
fn columns(a: &Tensor) -> Vec<Vec<f64>> {
    let (r, c) = (a.shape()[0], a.shape()[1]);
    (0..c).map(|j| (0..r).map(|i| a.data()[i * c + j]).collect()).collect()
}

fn transpose(a: &Tensor) -> Tensor {
    let (r, c) = (a.shape()[0], a.shape()[1]);
    Tensor::from_fn(&[c, r], |i| a.data()[i[1] * c + i[0]])
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR of a tall matrix given by its columns (each of equal
/// length `rows >= cols`). Returns the upper-triangular `R` as columns of
/// length `cols`.
pub fn qr_r(mut cols: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = cols.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows = cols[0].len();
    if cols.iter().any(|c| c.len() != rows) {
        return shape_err("columns of different lengths");
    }
    if rows < n {
        return shape_err(format!("QR needs rows >= cols, got {rows} x {n}"));
    }
    let mut r = vec![vec![0.0; n]; n];
    let mut v = vec![0.0; rows];
    for j in 0..n {
        let x = &cols[j][j..];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            for (k, rk) in r.iter_mut().enumerate().skip(j) {
                rk[j] = cols[k][j];
            }
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let vj = &mut v[j..];
        vj.copy_from_slice(x);
        vj[0] -= alpha;
        let vnorm2 = dot(vj, vj);
        r[j][j] = alpha;
        if vnorm2 > 0.0 {
            for k in j + 1..n {
                let ck = &mut cols[k][j..];
                let f = 2.0 * dot(vj, ck) / vnorm2;
                for (c, &vv) in ck.iter_mut().zip(vj.iter()) {
                    *c -= f * vv;
                }
            }
        }
        for k in j + 1..n {
            r[k][j] = cols[k][j];
        }
    }
    Ok(r)
}

/// One-sided Jacobi on columns `a` (each of length `rows`), accumulating
/// right rotations into `v` when given. Columns end up mutually orthogonal.
fn jacobi(a: &mut [Vec<f64>], mut v: Option<&mut [Vec<f64>]>) -> Result<()> {
    let n = a.len();
    if n < 2 {
        return Ok(());
    }
    // Dot products carry rounding error proportional to their length, so the
    // orthogonality threshold scales with it.
    let eps = f64::EPSILON * (a[0].len().max(1) as f64);
    // Columns below eps * ||A||_F are numerically zero; rotating them against
    // each other can cycle forever when they are parallel.
    let frob2: f64 = a.iter().map(|c| dot(c, c)).sum();
    let negligible = f64::EPSILON * f64::EPSILON * frob2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (ap, aq) = {
                    let (lo, hi) = a.split_at_mut(q);
                    (&mut lo[p], &mut hi[0])
                };
                let alpha = dot(ap, ap);
                let beta = dot(aq, aq);
                let gamma = dot(ap, aq);
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= eps * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in ap.iter_mut().zip(aq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                if let Some(v) = v.as_deref_mut() {
                    let (lo, hi) = v.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = c * xp - s * yq;
                        *y = s * xp + c * yq;
                    }
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(VolterraError::Numerical(format!(
        "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Singular values of a matrix given by its columns, descending.
pub fn singular_values_of_columns(cols: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = cols.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows = cols[0].len();
    let mut work = if rows > n {
        qr_r(cols)?
    } else if rows < n {
        // Wide: the rows become the columns of a tall matrix.
        qr_r((0..rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect())?
    } else {
        cols
    };
    jacobi(&mut work, None)?;
    let mut s: Vec<f64> = work.iter().map(|c| dot(c, c).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Singular values of a matrix, descending.
pub fn singular_values(a: &Tensor) -> Result<Vec<f64>> {
    dims(a)?;
    if !a.is_finite() {
        return Err(VolterraError::Numerical("non-finite matrix entry".into()));
    }
    singular_values_of_columns(columns(a))
}

/// Thin SVD of a matrix.
pub fn svd(a: &Tensor) -> Result<Svd> {
    let (r, c) = dims(a)?;
    if !a.is_finite() {
        return Err(VolterraError::Numerical("non-finite matrix entry".into()));
    }
    if r < c {
        let t = svd(&transpose(a))?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    let mut cols = columns(a);
    let mut v: Vec<Vec<f64>> = (0..c)
        .map(|j| (0..c).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    jacobi(&mut cols, Some(&mut v))?;
    let mut order: Vec<usize> = (0..c).collect();
    let norms: Vec<f64> = cols.iter().map(|col| dot(col, col).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = Tensor::from_fn(&[r, c], |idx| {
        let j = order[idx[1]];
        if norms[j] > 0.0 {
            cols[j][idx[0]] / norms[j]
        } else {
            0.0
        }
    });
    let vt = Tensor::from_fn(&[c, c], |idx| v[order[idx[1]]][idx[0]]);
    Ok(Svd { u, s, v: vt })
}

/// Minimum-norm solution of `A x = b` through the SVD, discarding singular
/// values below `rcond * s_max`. Returns the solution and the retained rank.
pub fn lstsq(a: &Tensor, b: &[f64], rcond: f64) -> Result<(Vec<f64>, usize)> {
    let (r, c) = dims(a)?;
    if b.len() != r {
        return shape_err(format!("right-hand side length {} vs {r} rows", b.len()));
    }
    let d = svd(a)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let k = d.s.len();
    let mut x = vec![0.0; c];
    let mut rank = 0;
    for j in 0..k {
        let s = d.s[j];
        if s <= rcond * smax || s == 0.0 {
            continue;
        }
        rank += 1;
        let ub: f64 = (0..r).map(|i| d.u.data()[i * k + j] * b[i]).sum();
        let f = ub / s;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += f * d.v.data()[i * k + j];
        }
    }
    Ok((x, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(r: usize, c: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
        Tensor::from_fn(&[r, c], |i| f(i[0], i[1]))
    }

    fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (r, k) = (a.shape()[0], a.shape()[1]);
        let c = b.shape()[1];
        mat(r, c, |i, j| (0..k).map(|l| a.get(&[i, l]) * b.get(&[l, j])).sum())
    }

    #[test]
    fn diagonal_matrix() {
        let a = mat(3, 3, |i, j| if i == j { [2.0, -5.0, 1.0][i] } else { 0.0 });
        let s = singular_values(&a).unwrap();
        assert_eq!(s.len(), 3);
        for (x, y) in s.iter().zip([5.0, 2.0, 1.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_reconstructs() {
        for &(r, c) in &[(5usize, 3usize), (3, 5), (4, 4)] {
            let a = mat(r, c, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.3 * j as f64 + 0.1 * (i * i) as f64);
            let d = svd(&a).unwrap();
            let k = d.s.len();
            let us = mat(r, k, |i, j| d.u.get(&[i, j]) * d.s[j]);
            let vt = mat(k, c, |i, j| d.v.get(&[j, i]));
            assert!(matmul(&us, &vt).max_abs_diff(&a) < 1e-12);
            let fast = singular_values(&a).unwrap();
            for (x, y) in fast.iter().zip(&d.s) {
                assert!((x - y).abs() < 1e-12 * d.s[0]);
            }
        }
    }

    #[test]
    fn rank_one_has_tiny_tail() {
        let a = mat(30, 8, |i, j| (i as f64 + 1.0) * (j as f64 - 3.5));
        let s = singular_values(&a).unwrap();
        assert!(s[0] > 1.0);
        assert!(s[1] < 1e-12 * s[0], "{s:?}");
    }

    #[test]
    fn least_squares_min_norm() {
        // Two identical columns: the minimum-norm solution splits evenly.
        let a = mat(4, 2, |i, _| i as f64 + 1.0);
        let b: Vec<f64> = (0..4).map(|i| 2.0 * (i as f64 + 1.0)).collect();
        let (x, rank) = lstsq(&a, &b, 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
