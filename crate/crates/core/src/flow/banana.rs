//! Closed-form bijection that maps the banana distribution
//! `x = (2ε₁, 0.8ε₁² + 0.5ε₂)` onto a standard normal.
//!
//! ```text
//! f₁(x) = -x₁/4 - √3 x₂ + (√3/5) x₁²
//! f₂(x) = (√3/4) x₁ - x₂ + x₁²/5
//! ```
//!
//! Substituting the generative formula gives `f(x) = R ε` with `R` the
//! rotation `[[-1/2, -√3/2], [√3/2, -1/2]]`, so the inverse is
//! `ε = Rᵀ y` followed by the generator, and `det J ≡ 1`.

use super::Bijection;
use crate::error::{Error, Result};
use crate::numlin::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BananaMap;

const SQRT3: f64 = 1.732_050_807_568_877_2;

impl BananaMap {
    /// Latent coordinates `(ε₁, ε₂)` of a data point.
    pub fn latents(&self, x: &[f64]) -> [f64; 2] {
        [0.5 * x[0], 2.0 * (x[1] - 0.2 * x[0] * x[0])]
    }

    /// Data point generated by latents `(ε₁, ε₂)`.
    pub fn generate(&self, e: [f64; 2]) -> [f64; 2] {
        [2.0 * e[0], 0.8 * e[0] * e[0] + 0.5 * e[1]]
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != 2 {
            return Err(Error::dim(format!("banana map is 2-D, got {}", v.len())));
        }
        Ok(())
    }
}

impl Bijection for BananaMap {
    fn dim(&self) -> usize {
        2
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let (x1, x2) = (x[0], x[1]);
        Ok(vec![-0.25 * x1 - SQRT3 * x2 + SQRT3 / 5.0 * x1 * x1, SQRT3 / 4.0 * x1 - x2 + 0.2 * x1 * x1])
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y)?;
        let e1 = -0.5 * y[0] + 0.5 * SQRT3 * y[1];
        let e2 = -0.5 * SQRT3 * y[0] - 0.5 * y[1];
        Ok(self.generate([e1, e2]).to_vec())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check(x)?;
        let x1 = x[0];
        Ok(Matrix::from_vec_unchecked(
            2,
            2,
            vec![-0.25 + 2.0 * SQRT3 / 5.0 * x1, -SQRT3, SQRT3 / 4.0 + 0.4 * x1, -1.0],
        ))
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::slogdet;
    use crate::rng::GaussianRng;

    #[test]
    fn jacobian_at_origin() {
        let j = BananaMap.jacobian(&[0.0, 0.0]).unwrap();
        let expect = [-0.25, -3f64.sqrt(), 3f64.sqrt() / 4.0, -1.0];
        for (a, b) in j.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn det_is_one_everywhere() {
        let mut rng = GaussianRng::new(3);
        for _ in 0..100 {
            let x = [3.0 * rng.normal(), 3.0 * rng.normal()];
            let (s, l) = slogdet(&BananaMap.jacobian(&x).unwrap()).unwrap();
            assert_eq!(s, 1.0);
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn maps_latents_to_rotation() {
        // f(x(ε)) = R ε
        let e = [0.7, -1.3];
        let y = BananaMap.forward(&BananaMap.generate(e)).unwrap();
        let r = [-0.5 * e[0] - 0.5 * SQRT3 * e[1], 0.5 * SQRT3 * e[0] - 0.5 * e[1]];
        assert!((y[0] - r[0]).abs() < 1e-14 && (y[1] - r[1]).abs() < 1e-14);
        let back = BananaMap.inverse(&y).unwrap();
        let x = BananaMap.generate(e);
        assert!((back[0] - x[0]).abs() < 1e-14 && (back[1] - x[1]).abs() < 1e-14);
        let l = BananaMap.latents(&x);
        assert!((l[0] - e[0]).abs() < 1e-15 && (l[1] - e[1]).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = [1.3, -0.4];
        let j = BananaMap.jacobian(&x).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let yp = BananaMap.forward(&xp).unwrap();
            let ym = BananaMap.forward(&xm).unwrap();
            for i in 0..2 {
                assert!((j[(i, k)] - (yp[i] - ym[i]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }
}
