//! Datasets: synthetic generators with stored ground-truth latents, MNIST
//! IDX ingestion, centering, and CSV I/O.

mod mnist;
mod synthetic;
mod table;

pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use synthetic::{gen_banana, gen_curve1d, gen_embedded_gaussian, gen_scurve, gen_sine};
pub use table::{csv_read, csv_read_path, csv_write, csv_write_path, format_float, Table};

use crate::error::{Error, Result};
use crate::numlin::Matrix;
use crate::rng::GaussianRng;

/// Dataset names understood by the command line.
pub const DATASET_NAMES: [&str; 6] = ["banana", "sine", "scurve", "gauss-embed", "curve1d", "mnist"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// N×D observations.
    pub data: Matrix,
    /// Total offset subtracted by centering so far (zeros if never centered).
    pub mean: Vec<f64>,
    /// Ground-truth generative latents, row-aligned with `data`.
    pub latents: Option<Matrix>,
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, data: Matrix) -> Self {
        let d = data.cols();
        Dataset { name: name.into(), data, mean: vec![0.0; d], latents: None, labels: None }
    }

    pub fn with_latents(mut self, latents: Matrix) -> Result<Self> {
        if latents.rows() != self.data.rows() {
            return Err(Error::dim(format!(
                "{} latent rows for {} samples",
                latents.rows(),
                self.data.rows()
            )));
        }
        self.latents = Some(latents);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// Subtracts the per-dimension mean; the removed offset accumulates in
    /// `mean`, so centering twice is the same as centering once.
    pub fn center(&self) -> Result<Dataset> {
        if self.is_empty() {
            return Err(Error::invalid("cannot center an empty dataset"));
        }
        let mu = column_means(&self.data);
        let mut out = self.clone();
        for r in 0..out.data.rows() {
            for (v, m) in out.data.row_mut(r).iter_mut().zip(&mu) {
                *v -= m;
            }
        }
        for (total, m) in out.mean.iter_mut().zip(&mu) {
            *total += m;
        }
        Ok(out)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let pick = |m: &Matrix| Matrix::from_fn(indices.len(), m.cols(), |i, j| m[(indices[i], j)]);
        Dataset {
            name: self.name.clone(),
            data: pick(&self.data),
            mean: self.mean.clone(),
            latents: self.latents.as_ref().map(pick),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Seeded shuffle, then the last `validation_fraction` of rows (rounded
    /// down, at least one when the fraction is positive) become the
    /// validation set.
    pub fn shuffle_split(&self, validation_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::invalid(format!("validation fraction {validation_fraction} outside [0, 1)")));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        GaussianRng::new(seed).shuffle(&mut idx);
        let mut n_val = (validation_fraction * n as f64).floor() as usize;
        if validation_fraction > 0.0 {
            n_val = n_val.max(1);
        }
        if n_val >= n {
            return Err(Error::invalid("validation split leaves no training data"));
        }
        let (train, val) = idx.split_at(n - n_val);
        Ok((self.select(train), self.select(val)))
    }
}

pub fn column_means(m: &Matrix) -> Vec<f64> {
    let mut mu = vec![0.0; m.cols()];
    for r in m.row_iter() {
        for (acc, v) in mu.iter_mut().zip(r) {
            *acc += v;
        }
    }
    let n = m.rows().max(1) as f64;
    mu.iter_mut().for_each(|v| *v /= n);
    mu
}

/// `(1/N) Σ x xᵀ` (no centering).
pub fn second_moment(m: &Matrix) -> Matrix {
    m.t_matmul(m).expect("same rows").scale(1.0 / m.rows().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_centers_to_zero() {
        let ds =
            Dataset::new("t", Matrix::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 6.0]]).unwrap());
        let c = ds.center().unwrap();
        assert!(c.data.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(c.mean, vec![3.0, 3.0]);
        assert!(column_means(&c.data).iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn center_is_idempotent() {
        let ds = gen_banana(1000, 3);
        let once = ds.center().unwrap();
        let twice = once.center().unwrap();
        assert!(twice.data.max_abs_diff(&once.data) < 1e-12);
        for (a, b) in twice.mean.iter().zip(&once.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(column_means(&once.data).iter().all(|m| m.abs() < 1e-8));
    }

    #[test]
    fn empty_cannot_center() {
        assert!(Dataset::new("e", Matrix::zeros(0, 2)).center().is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = gen_sine(100, 1);
        let (tr, va) = ds.shuffle_split(0.1, 9).unwrap();
        assert_eq!((tr.len(), va.len()), (90, 10));
        let (tr2, _) = ds.shuffle_split(0.1, 9).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(tr.latents.as_ref().unwrap().rows(), 90);
        assert!(ds.shuffle_split(1.0, 0).is_err());
    }
}
