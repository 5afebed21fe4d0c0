//! The linear flow `y = W x`.
//!
//! With `S = (1/N) Σ x xᵀ` the objective is
//! `tr(S WᵀW) - 2 ln|det W| + α ‖W‖_F²`, whose stationary points satisfy
//! `WᵀW = (S + αI)⁻¹`. The right singular vectors of `W` are the principal
//! axes and `s_i⁻²` the variances along them.

use crate::datasets::{column_means, second_moment};
use crate::error::{DivergenceReport, DivergenceStatistic, Error, Result};
use crate::flow::{random_orthogonal, FlowNetwork};
use crate::numlin::{invert, slogdet, svd, sym_eig, Matrix, SvdFactors};
use crate::optimize::TrainConfig;
use crate::rng::GaussianRng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    w: Matrix,
    factors: SvdFactors,
}

impl LinearModel {
    pub fn new(w: Matrix) -> Result<Self> {
        let factors = svd(&w)?;
        Ok(LinearModel { w, factors })
    }

    pub fn weight(&self) -> &Matrix {
        &self.w
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.factors.s
    }

    /// Columns of `V`, ordered by descending singular value (ascending
    /// variance).
    pub fn components(&self) -> &Matrix {
        &self.factors.v
    }

    /// `s_i²`.
    pub fn precisions(&self) -> Vec<f64> {
        self.factors.s.iter().map(|s| s * s).collect()
    }

    /// `s_i⁻²`.
    pub fn variances(&self) -> Vec<f64> {
        self.factors.s.iter().map(|s| 1.0 / (s * s)).collect()
    }

    /// One identity-activation layer with zero bias.
    pub fn to_network(&self) -> FlowNetwork {
        FlowNetwork::linear(self.w.clone()).expect("square weight")
    }
}

/// Eigendecomposition of the second-moment matrix of centered data,
/// eigenvalues descending.
pub fn pca_oracle(data: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if data.rows() == 0 {
        return Err(Error::invalid("empty data"));
    }
    sym_eig(&second_moment(data))
}

/// `(S + αI)⁻¹`, the optimal `WᵀW`.
pub fn shrinkage_target(s_emp: &Matrix, alpha: f64) -> Result<Matrix> {
    let d = s_emp.rows();
    invert(&s_emp.add(&Matrix::identity(d).scale(alpha))?)
}

/// `tr(S WᵀW) - 2 ln|det W| + α ‖W‖_F²`.
pub fn linear_objective(w: &Matrix, s_emp: &Matrix, alpha: f64) -> Result<f64> {
    let wtw = w.t_matmul(w)?;
    let quad = s_emp.matmul(&wtw)?.trace();
    let (_, ld) = slogdet(w)?;
    let fro = w.frobenius_norm();
    Ok(quad - 2.0 * ld + alpha * fro * fro)
}

/// `2 W S - 2 W⁻ᵀ + 2α W`.
pub fn linear_gradient(w: &Matrix, s_emp: &Matrix, alpha: f64) -> Result<Matrix> {
    let ws = w.matmul(s_emp)?.scale(2.0);
    let inv_t = invert(w)?.transpose().scale(2.0);
    ws.sub(&inv_t)?.add(&w.scale(2.0 * alpha))
}

/// Full-batch Adam on the exact objective, one step per epoch, starting
/// from a seeded orthogonal `W`. The data must be centered.
///
/// A singular value of `W` outside `[1/bound, bound]` (bound from
/// `config.divergence_bound`) aborts with a divergence report.
pub fn train_linear(data: &Matrix, alpha: f64, config: &TrainConfig) -> Result<LinearModel> {
    let config = TrainConfig { alpha, ..config.clone() };
    config.validate()?;
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::invalid("linear training needs at least 2 samples"));
    }
    if let Some(m) = column_means(data).iter().find(|m| m.abs() > 1e-8) {
        return Err(Error::invalid(format!("data is not centered (column mean {m:.3e})")));
    }
    let s_emp = second_moment(data);
    let mut w = random_orthogonal(d, &mut GaussianRng::new(config.seed))?;
    let mut adam = config.adam(d * d);
    let mut params = w.as_slice().to_vec();
    let mut max_seen: f64 = 0.0;
    let bound = config.divergence_bound;
    for epoch in 0..config.epochs {
        let report = |statistic, max_singular_value| {
            Error::Divergence(Box::new(DivergenceReport { epoch, batch: 0, statistic, max_singular_value }))
        };
        let g = match linear_gradient(&w, &s_emp, alpha) {
            Ok(g) => g,
            Err(e) if e.is_numeric() => {
                let stat = DivergenceStatistic::Numeric { message: e.to_string() };
                return Err(report(stat, max_seen));
            }
            Err(e) => return Err(e),
        };
        if !g.is_finite() {
            return Err(report(DivergenceStatistic::NonFiniteLoss { value: f64::NAN }, max_seen));
        }
        adam.step(&mut params, g.as_slice());
        w = Matrix::from_fn(d, d, |i, j| params[i * d + j]);
        let f = svd(&w)?;
        max_seen = max_seen.max(f.largest());
        if f.largest() > bound {
            let stat = DivergenceStatistic::SingularValueAbove { value: f.largest(), bound };
            return Err(report(stat, max_seen));
        }
        if f.smallest() < 1.0 / bound {
            let stat = DivergenceStatistic::SingularValueBelow { value: f.smallest(), bound: 1.0 / bound };
            return Err(report(stat, max_seen));
        }
    }
    LinearModel::new(w)
}
