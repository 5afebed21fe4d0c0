//! LU factorization with partial pivoting: determinants, solves, inverses.

use super::matrix::Matrix;
use super::svd::svd;
use crate::error::{Error, Result};

/// Pivots at or below this magnitude are treated as exact zeros.
const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub(crate) struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    parity: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::dim(format!("LU needs a square matrix, got {:?}", a.shape())));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs())).unwrap_or(k);
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                parity = -parity;
            }
            let pivot = lu[(k, k)];
            if pivot.abs() <= PIVOT_FLOOR {
                continue;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm, parity })
    }

    pub fn is_singular(&self) -> bool {
        self.lu.diag().iter().any(|p| p.abs() <= PIVOT_FLOOR)
    }

    pub fn slogdet(&self) -> (f64, f64) {
        if self.is_singular() {
            return (0.0, f64::NEG_INFINITY);
        }
        let mut sign = self.parity;
        let mut log = 0.0;
        for p in self.lu.diag() {
            sign *= p.signum();
            log += p.abs().ln();
        }
        (sign, log)
    }

    fn pivot_ratio(&self) -> f64 {
        let d = self.lu.diag();
        let max = d.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        let min = d.iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
        max / min
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(Error::dim(format!("rhs of length {} for n = {n}", b.len())));
        }
        if self.is_singular() {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = (0..i).map(|j| row[j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.lu.rows();
        if self.is_singular() {
            return Err(Error::Singular { condition: self.pivot_ratio() });
        }
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        Ok(inv)
    }
}

/// Sign and log-absolute value of the determinant. Numerically singular
/// input gives `(0.0, -inf)`.
pub fn slogdet(a: &Matrix) -> Result<(f64, f64)> {
    Ok(Lu::factor(a)?.slogdet())
}

fn check_conditioning(a: &Matrix) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::domain("non-finite entries"));
    }
    let f = svd(a)?;
    let (smax, smin) = (f.largest(), f.smallest());
    if !(smin > 1e-12 * smax) {
        return Err(Error::Singular { condition: if smin > 0.0 { smax / smin } else { f64::INFINITY } });
    }
    Ok(())
}

/// Inverse of a well-conditioned square matrix (smallest singular value above
/// `1e-12` times the largest).
pub fn invert(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim(format!("cannot invert {:?}", a.shape())));
    }
    check_conditioning(a)?;
    Lu::factor(a)?.inverse()
}

/// Solves `a x = b` under the same conditioning requirement as [`invert`].
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::dim(format!("cannot solve with {:?}", a.shape())));
    }
    check_conditioning(a)?;
    Lu::factor(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slogdet_basics() {
        assert_eq!(slogdet(&Matrix::identity(3)).unwrap(), (1.0, 0.0));
        let (s, l) = slogdet(&Matrix::from_diag(&[2.0, 3.0])).unwrap();
        assert_eq!(s, 1.0);
        assert!((l - 6f64.ln()).abs() < 1e-15);
        let (s, l) = slogdet(&Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!((s, l), (-1.0, 0.0));
        let (s, l) = slogdet(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(l, f64::NEG_INFINITY);
        assert!(slogdet(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn inverse_examples() {
        let inv = invert(&Matrix::from_diag(&[2.0, 4.0])).unwrap();
        assert_eq!(inv, Matrix::from_diag(&[0.5, 0.25]));
        assert_eq!(invert(&Matrix::identity(5)).unwrap(), Matrix::identity(5));
        let inv = invert(&Matrix::from_diag(&[0.25, 4.0])).unwrap();
        assert_eq!(inv, Matrix::from_diag(&[4.0, 0.25]));
    }

    #[test]
    fn singular_carries_condition() {
        let a = Matrix::from_diag(&[1.0, 1e-13]);
        match invert(&a) {
            Err(Error::Singular { condition }) => assert!((condition - 1e13).abs() < 1e3),
            other => panic!("expected singular, got {other:?}"),
        }
        assert!(matches!(solve(&Matrix::zeros(2, 2), &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn solve_matches_inverse() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, -1.0], vec![0.0, 2.0, 5.0]]).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = solve(&a, &b).unwrap();
        let ax = a.matvec(&x).unwrap();
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-14);
        }
        let prod = a.matmul(&invert(&a).unwrap()).unwrap();
        assert!(prod.sub(&Matrix::identity(3)).unwrap().frobenius_norm() < 1e-14);
    }
}
