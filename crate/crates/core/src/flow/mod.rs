//! Invertible maps `R^D -> R^D`: the dense flow network, the analytic
//! banana bijection, and the common [`Bijection`] interface that the
//! objective, extraction, and training code work against.

mod activation;
mod banana;
mod network;

pub use activation::Activation;
pub use banana::BananaMap;
pub use network::{random_orthogonal, FlowNetwork, JacobianChain, Layer};

pub(crate) use network::{scale_rows, scaled_weight};

use crate::error::Result;
use crate::numlin::Matrix;

pub trait Bijection: Send + Sync {
    fn dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, x: &[f64]) -> Result<Matrix>;

    /// `ln|det J_f(x)|`.
    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64>;

    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        Ok((self.forward(x)?, self.jacobian(x)?))
    }

    fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        Ok((self.forward(x)?, self.log_abs_det_jacobian(x)?))
    }
}

impl<B: Bijection + ?Sized> Bijection for &B {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).forward(x)
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        (**self).inverse(y)
    }
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        (**self).jacobian(x)
    }
    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        (**self).log_abs_det_jacobian(x)
    }
    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        (**self).forward_with_jacobian(x)
    }
    fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        (**self).forward_with_logdet(x)
    }
}
