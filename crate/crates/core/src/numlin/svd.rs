//! One-sided (Hestenes) Jacobi SVD for square matrices.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 60;

/// `a = u * diag(s) * vᵀ` with `s` descending and the sign convention that
/// the largest-magnitude entry of every column of `u` is positive (lowest
/// row index wins ties). Columns of `v` are flipped together with `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.s.len();
        let us = Matrix::from_fn(n, n, |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose()).expect("square factors")
    }

    pub fn smallest(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    pub fn largest(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }
}

pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    if !a.is_square() {
        return Err(Error::dim(format!("svd needs a square matrix, got {:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::domain("svd input has non-finite entries"));
    }
    let n = a.rows();
    // Column-contiguous working copies: cols[j*n..(j+1)*n] is column j.
    let mut cols = a.transpose().into_vec();
    let mut vcols = Matrix::identity(n).into_vec();

    let tol = f64::EPSILON * (n as f64).max(4.0);
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = &cols[p * n..(p + 1) * n];
                    let cq = &cols[q * n..(q + 1) * n];
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, n, p, q, c, s);
                rotate_pair(&mut vcols, n, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> =
        (0..n).map(|j| dot(&cols[j * n..(j + 1) * n], &cols[j * n..(j + 1) * n]).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let col = &cols[j * n..(j + 1) * n];
        if s[k] > 1e-300 {
            ucols.push(col.iter().map(|v| v / s[k]).collect());
        } else {
            ucols.push(vec![0.0; n]);
            missing.push(k);
        }
    }
    complete_basis(&mut ucols, &missing);
    let mut vout: Vec<Vec<f64>> = order.iter().map(|&j| vcols[j * n..(j + 1) * n].to_vec()).collect();

    for (ucol, vcol) in ucols.iter_mut().zip(vout.iter_mut()) {
        if needs_flip(ucol) {
            ucol.iter_mut().for_each(|x| *x = -*x);
            vcol.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = Matrix::from_fn(n, n, |i, j| ucols[j][i]);
    let v = Matrix::from_fn(n, n, |i, j| vout[j][i]);
    Ok(SvdFactors { u, s, v })
}

fn rotate_pair(buf: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * n);
    let cp = &mut head[p * n..(p + 1) * n];
    let cq = &mut tail[..n];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// True when the entry of largest magnitude (first one on exact ties) is
/// negative.
pub(crate) fn needs_flip(col: &[f64]) -> bool {
    let mut best = 0usize;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    col.get(best).is_some_and(|&v| v < 0.0)
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all others.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize]) {
    let n = cols.len();
    for &k in missing {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for (j, other) in cols.iter().enumerate() {
                    // unfilled columns are still zero and drop out
                    if j == k {
                        continue;
                    }
                    let proj = dot(&cand, other);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= proj * o;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > best_norm + 1e-12 {
                best_norm = norm;
                best = Some(cand.iter().map(|x| x / norm).collect());
            }
        }
        cols[k] = best.expect("a unit vector survives projection");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_orthogonal(m: &Matrix, tol: f64) {
        let g = m.t_matmul(m).unwrap();
        let err = g.sub(&Matrix::identity(m.rows())).unwrap().frobenius_norm();
        assert!(err <= tol, "orthogonality error {err}");
    }

    #[test]
    fn diagonal_descending() {
        let f = svd(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(f.s, vec![3.0, 1.0]);
        assert_eq!(f.u, Matrix::identity(2));
        assert_eq!(f.v, Matrix::identity(2));
    }

    #[test]
    fn identity_four() {
        let f = svd(&Matrix::identity(4)).unwrap();
        assert_eq!(f.s, vec![1.0; 4]);
        assert_eq!(f.u, Matrix::identity(4));
        assert_eq!(f.v, Matrix::identity(4));
    }

    #[test]
    fn banana_jacobian_at_origin() {
        let r3 = 3f64.sqrt();
        let j = Matrix::from_rows(&[vec![-0.25, -r3], vec![r3 / 4.0, -1.0]]).unwrap();
        let f = svd(&j).unwrap();
        assert!((f.s[0] - 2.0).abs() < 1e-14);
        assert!((f.s[1] - 0.5).abs() < 1e-14);
        assert!(f.reconstruct().max_abs_diff(&j) < 1e-14);
    }

    #[test]
    fn ascending_diagonal_is_reordered() {
        let f = svd(&Matrix::from_diag(&[1.0, -5.0, 2.0])).unwrap();
        assert_eq!(f.s, vec![5.0, 2.0, 1.0]);
        assert!(f.reconstruct().max_abs_diff(&Matrix::from_diag(&[1.0, -5.0, 2.0])) < 1e-15);
        for j in 0..3 {
            assert!(!needs_flip(&f.u.column(j)));
        }
    }

    #[test]
    fn rank_deficient_still_orthogonal() {
        let a = Matrix::new(3, 3, vec![1.0; 9]).unwrap();
        let f = svd(&a).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-14);
        assert!(f.s[1] < 1e-15 && f.s[2] < 1e-15);
        assert_orthogonal(&f.u, 1e-12);
        assert_orthogonal(&f.v, 1e-12);
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-14);

        let z = svd(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(z.s, vec![0.0, 0.0]);
        assert_orthogonal(&z.u, 1e-14);
    }

    #[test]
    fn sign_tie_prefers_lowest_row() {
        assert!(!needs_flip(&[0.5, -0.5]));
        assert!(needs_flip(&[-0.5, 0.5]));
        assert!(needs_flip(&[0.1, -0.9]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(svd(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
        let mut m = Matrix::identity(2);
        m.as_mut_slice()[1] = f64::INFINITY;
        assert!(matches!(svd(&m), Err(Error::Domain(_))));
    }
}
