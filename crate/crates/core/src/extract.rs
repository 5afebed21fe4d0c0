//! Un-whitened components from the Jacobian SVD.
//!
//! With `J_f(x) = U S Vᵀ` (sign-normalized), the components at `x` are
//! `ŷ = S⁻¹ Uᵀ f(x)`, the local variances `λ_i = s_i⁻²` and the local
//! directions the columns of `V`. All three are reported in descending
//! variance order, i.e. reversed singular-value order.

use std::io::Write;
use std::path::Path;

use crate::datasets::format_float;
use crate::error::{Error, Result};
use crate::flow::Bijection;
use crate::numlin::{dot, svd, Matrix};

/// Singular values below this make the projection undefined.
pub const MIN_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentProjection {
    pub y_hat: Vec<f64>,
    /// Descending.
    pub variances: Vec<f64>,
    /// Columns are the local directions in input space.
    pub directions: Matrix,
}

pub fn project<B: Bijection + ?Sized>(flow: &B, x: &[f64]) -> Result<ComponentProjection> {
    let (y, j) = flow.forward_with_jacobian(x)?;
    let f = svd(&j)?;
    let smallest = f.smallest();
    if !(smallest >= MIN_SINGULAR_VALUE) {
        return Err(Error::SingularJacobian { index: 0, smallest });
    }
    let d = y.len();
    let mut y_hat = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    for i in (0..d).rev() {
        let s = f.s[i];
        y_hat.push(dot(&f.u.column(i), &y) / s);
        variances.push(1.0 / (s * s));
    }
    let directions = Matrix::from_fn(d, d, |r, c| f.v[(r, d - 1 - c)]);
    Ok(ComponentProjection { y_hat, variances, directions })
}

/// `Σ̂(x) = (JᵀJ)⁻¹ = V S⁻² Vᵀ` and its eigenvalues, descending.
pub fn local_covariance<B: Bijection + ?Sized>(flow: &B, x: &[f64]) -> Result<(Matrix, Vec<f64>)> {
    let j = flow.jacobian(x)?;
    let f = svd(&j)?;
    let smallest = f.smallest();
    if !(smallest >= MIN_SINGULAR_VALUE) {
        return Err(Error::SingularJacobian { index: 0, smallest });
    }
    let d = f.s.len();
    let inv_sq: Vec<f64> = f.s.iter().map(|s| 1.0 / (s * s)).collect();
    let sigma = Matrix::from_fn(d, d, |r, c| (0..d).map(|k| f.v[(r, k)] * inv_sq[k] * f.v[(c, k)]).sum());
    Ok((sigma, inv_sq.into_iter().rev().collect()))
}

/// First `k` un-whitened components of every row, `N × k`.
pub fn project_batch<B: Bijection + ?Sized>(flow: &B, data: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 || k > flow.dim() {
        return Err(Error::invalid(format!("k must lie in 1..={}, got {k}", flow.dim())));
    }
    let mut out = Vec::with_capacity(data.rows() * k);
    for (i, x) in data.row_iter().enumerate() {
        let p = project(flow, x).map_err(|e| e.at_sample(i))?;
        out.extend_from_slice(&p.y_hat[..k]);
    }
    Ok(Matrix::from_vec_unchecked(data.rows(), k, out))
}

/// Mean local variance per component over `data`.
pub fn mean_variances<B: Bijection + ?Sized>(flow: &B, data: &Matrix) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; flow.dim()];
    for (i, x) in data.row_iter().enumerate() {
        let p = project(flow, x).map_err(|e| e.at_sample(i))?;
        for (a, v) in acc.iter_mut().zip(&p.variances) {
            *a += v;
        }
    }
    let n = data.rows().max(1) as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// CSV with header `comp1,...,compK[,label]`.
pub fn write_projection_csv<W: Write>(mut w: W, proj: &Matrix, labels: Option<&[u8]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != proj.rows() {
            return Err(Error::dim(format!("{} labels for {} rows", l.len(), proj.rows())));
        }
    }
    let mut header: Vec<String> = (1..=proj.cols()).map(|i| format!("comp{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in proj.row_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_projection_csv_path(path: impl AsRef<Path>, proj: &Matrix, labels: Option<&[u8]>) -> Result<()> {
    write_projection_csv(std::io::BufWriter::new(std::fs::File::create(path)?), proj, labels)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation: Pearson on average ranks (ties share a rank).
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    correlation(&ranks(a), &ranks(b))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            r[i] = avg;
        }
        start = end;
    }
    r
}
