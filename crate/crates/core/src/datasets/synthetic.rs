use std::f64::consts::PI;

use super::Dataset;
use crate::error::{Error, Result};
use crate::flow::random_orthogonal;
use crate::numlin::Matrix;
use crate::rng::GaussianRng;

/// Draws `n` rows of `k` standard normals, row by row.
fn latents(n: usize, k: usize, seed: u64) -> Matrix {
    GaussianRng::new(seed).normal_matrix(n, k)
}

fn from_latents(name: &str, eps: Matrix, dim: usize, map: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
    let mut data = Vec::with_capacity(eps.rows() * dim);
    for e in eps.row_iter() {
        data.extend(map(e));
    }
    let data = Matrix::from_vec_unchecked(eps.rows(), dim, data);
    Dataset::new(name, data).with_latents(eps).expect("one latent row per sample")
}

/// `x = (2ε₁, 0.8ε₁² + 0.5ε₂)`.
pub fn gen_banana(n: usize, seed: u64) -> Dataset {
    from_latents("banana", latents(n, 2, seed), 2, |e| vec![2.0 * e[0], 0.8 * e[0] * e[0] + 0.5 * e[1]])
}

/// `x = (2ε₁, ε₂/2, sin 2ε₁)`.
pub fn gen_sine(n: usize, seed: u64) -> Dataset {
    from_latents("sine", latents(n, 2, seed), 3, |e| vec![2.0 * e[0], 0.5 * e[1], (2.0 * e[0]).sin()])
}

/// S-curve with Gaussian latents: `t = (3π/2) tanh(ε₁/2)`, `h = ε₂/2`,
/// `x = (sin t, h, sign(t)(cos t - 1))`.
pub fn gen_scurve(n: usize, seed: u64) -> Dataset {
    from_latents("scurve", latents(n, 2, seed), 3, |e| {
        let t = scurve_angle(e[0]);
        vec![t.sin(), 0.5 * e[1], t.signum() * (t.cos() - 1.0)]
    })
}

pub(crate) fn scurve_angle(eps: f64) -> f64 {
    1.5 * PI * (0.5 * eps).tanh()
}

/// `x = (2ε, sin 2ε)`, a one-dimensional curve in the plane.
pub fn gen_curve1d(n: usize, seed: u64) -> Dataset {
    from_latents("curve1d", latents(n, 1, seed), 2, |e| vec![2.0 * e[0], (2.0 * e[0]).sin()])
}

/// `z ~ N(0, diag(spectrum))` in `d_intrinsic` dimensions, mapped into
/// `d_ambient` dimensions by a seeded random orthonormal frame. The frame is
/// drawn first from the same stream, then the latents row by row.
pub fn gen_embedded_gaussian(
    n: usize,
    seed: u64,
    d_intrinsic: usize,
    d_ambient: usize,
    spectrum: &[f64],
) -> Result<Dataset> {
    if d_intrinsic == 0 || d_intrinsic > d_ambient {
        return Err(Error::dim(format!(
            "need 1 ≤ d_intrinsic ≤ d_ambient, got {d_intrinsic} and {d_ambient}"
        )));
    }
    if spectrum.len() != d_intrinsic || spectrum.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::dim(format!(
            "spectrum must hold {d_intrinsic} positive variances, got {spectrum:?}"
        )));
    }
    let mut rng = GaussianRng::new(seed);
    let rot = random_orthogonal(d_ambient, &mut rng)?;
    let frame = Matrix::from_fn(d_ambient, d_intrinsic, |i, j| rot[(i, j)]);
    let scales: Vec<f64> = spectrum.iter().map(|s| s.sqrt()).collect();
    let z = Matrix::from_fn(n, d_intrinsic, |_, j| scales[j] * rng.normal());
    let data = z.matmul(&frame.transpose())?;
    Dataset::new("gauss-embed", data).with_latents(z)
}
