//! Mini-batch Adam training with divergence monitoring, evaluation,
//! sampling, metrics, and checkpoints.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Model};
pub use metrics::{EpochRecord, RunMetrics, METRICS_HEADER};

use std::f64::consts::PI;
use std::time::Instant;

use crate::datasets::Dataset;
use crate::error::{DivergenceReport, DivergenceStatistic, Error, Result};
use crate::flow::{Bijection, FlowNetwork};
use crate::numlin::{dot, svd, Matrix};
use crate::objective::{self, LossBreakdown};
use crate::rng::GaussianRng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Training aborts when a monitored Jacobian singular value leaves
    /// `[1/bound, bound]`. `f64::INFINITY` disables the check.
    pub divergence_bound: f64,
    /// Size of the fixed monitoring subset (first rows of the training set).
    pub monitor_samples: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.0,
            batch_size: 200,
            learning_rate: 1e-3,
            epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            divergence_bound: 1e6,
            monitor_samples: 64,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be finite and ≥ 0, got {}", self.alpha)));
        }
        if !(self.divergence_bound > 1.0) {
            return Err(Error::invalid("divergence bound must exceed 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub(crate) fn adam(&self, n_params: usize) -> Adam {
        Adam::new(n_params, self.learning_rate, self.beta1, self.beta2, self.epsilon)
    }
}

/// A flow whose parameters the training loop can update.
pub trait Trainable: Bijection + Clone {
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn loss(&self, batch: &Matrix, alpha: f64) -> Result<LossBreakdown>;

    /// Loss terms and the gradient of `total`, ordered like `params`.
    fn loss_and_gradient(&self, batch: &Matrix, alpha: f64) -> Result<(LossBreakdown, Vec<f64>)>;
}

impl Trainable for FlowNetwork {
    fn params(&self) -> Vec<f64> {
        FlowNetwork::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        FlowNetwork::set_params(self, params)
    }

    fn loss(&self, batch: &Matrix, alpha: f64) -> Result<LossBreakdown> {
        objective::loss(self, batch, alpha)
    }

    fn loss_and_gradient(&self, batch: &Matrix, alpha: f64) -> Result<(LossBreakdown, Vec<f64>)> {
        let (l, g) = objective::gradient(self, batch, alpha)?;
        Ok((l, g.flatten()))
    }
}

/// Splits `dataset` by `config.validation_fraction` (seeded by
/// `config.seed`) and trains on the first part.
pub fn train<M: Trainable>(model: M, dataset: &Dataset, config: &TrainConfig) -> Result<(M, RunMetrics)> {
    config.validate()?;
    if config.validation_fraction > 0.0 {
        let (tr, va) = dataset.shuffle_split(config.validation_fraction, config.seed)?;
        train_split(model, &tr.data, Some(&va.data), config, |_, _| Ok(()))
    } else {
        train_split(model, &dataset.data, None, config, |_, _| Ok(()))
    }
}

/// Training on explicit train/validation matrices; `on_epoch` runs after
/// every completed epoch with its record and the current model.
pub fn train_split<M: Trainable>(
    mut model: M,
    train: &Matrix,
    val: Option<&Matrix>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &M) -> Result<()>,
) -> Result<(M, RunMetrics)> {
    config.validate()?;
    let n = train.rows();
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if train.cols() != model.dim() {
        return Err(Error::dim(format!(
            "data has {} columns, model is {}-dimensional",
            train.cols(),
            model.dim()
        )));
    }
    let mut metrics = RunMetrics::default();
    let mut params = model.params();
    let mut adam = config.adam(params.len());
    let mut rng = GaussianRng::new(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..n).collect();
    let monitor = Matrix::from_fn(config.monitor_samples.min(n), train.cols(), |i, j| train[(i, j)]);
    let mut max_seen: f64 = 0.0;
    let diverged = |epoch, batch, statistic, max_seen| {
        Error::Divergence(Box::new(DivergenceReport {
            epoch,
            batch,
            statistic,
            max_singular_value: max_seen,
        }))
    };

    for epoch in 0..config.epochs {
        let start = Instant::now();
        rng.shuffle(&mut order);
        let (mut q, mut nl, mut t) = (0.0, 0.0, 0.0);
        let mut n_batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = Matrix::from_fn(idx.len(), train.cols(), |i, j| train[(idx[i], j)]);
            let (l, g) = match model.loss_and_gradient(&batch, config.alpha) {
                Ok(v) => v,
                Err(e) if e.is_numeric() => {
                    let stat = DivergenceStatistic::Numeric { message: e.to_string() };
                    return Err(diverged(epoch, b, stat, max_seen));
                }
                Err(e) => return Err(e),
            };
            if !l.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                let stat = DivergenceStatistic::NonFiniteLoss { value: l.total };
                return Err(diverged(epoch, b, stat, max_seen));
            }
            q += l.quadratic;
            nl += l.neg_logdet;
            t += l.tikhonov;
            n_batches += 1;
            adam.step(&mut params, &g);
            if let Err(e) = model.set_params(&params) {
                let stat = DivergenceStatistic::Numeric { message: e.to_string() };
                return Err(diverged(epoch, b, stat, max_seen));
            }
        }
        let last_batch = n_batches.saturating_sub(1);

        let (smax, smin) = match monitor_spectrum(&model, &monitor) {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                let stat = DivergenceStatistic::Numeric { message: e.to_string() };
                return Err(diverged(epoch, last_batch, stat, max_seen));
            }
            Err(e) => return Err(e),
        };
        if smax.is_finite() {
            max_seen = max_seen.max(smax);
        }
        let bound = config.divergence_bound;
        if smax > bound {
            let stat = DivergenceStatistic::SingularValueAbove { value: smax, bound };
            return Err(diverged(epoch, last_batch, stat, max_seen));
        }
        if smin < 1.0 / bound {
            let stat = DivergenceStatistic::SingularValueBelow { value: smin, bound: 1.0 / bound };
            return Err(diverged(epoch, last_batch, stat, max_seen));
        }

        let train_ll = evaluate(&model, train)?.mean_log_likelihood;
        let val_ll = match val {
            Some(v) => evaluate(&model, v)?.mean_log_likelihood,
            None => f64::NAN,
        };
        let nb = n_batches as f64;
        let rec = EpochRecord {
            epoch,
            train_ll,
            val_ll,
            quadratic: q / nb,
            neg_logdet: nl / nb,
            tikhonov: t / nb,
            smax,
            smin,
            seconds: start.elapsed().as_secs_f64(),
        };
        metrics.push(rec);
        on_epoch(&rec, &model)?;
    }
    Ok((model, metrics))
}

/// Largest and smallest Jacobian singular values over `points`
/// (NaN when there are none).
pub fn monitor_spectrum<B: Bijection + ?Sized>(flow: &B, points: &Matrix) -> Result<(f64, f64)> {
    let (mut hi, mut lo) = (f64::NAN, f64::NAN);
    for (i, x) in points.row_iter().enumerate() {
        let s = svd(&flow.jacobian(x).map_err(|e| e.at_sample(i))?)?;
        hi = if hi.is_nan() { s.largest() } else { hi.max(s.largest()) };
        lo = if lo.is_nan() { s.smallest() } else { lo.min(s.smallest()) };
    }
    Ok((hi, lo))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean over samples; `-inf` when any sample is singular.
    pub mean_log_likelihood: f64,
    pub per_sample: Vec<f64>,
    /// Indices of samples whose Jacobian is singular.
    pub singular: Vec<usize>,
}

/// `log N(f(x); 0, I) + ln|det J_f(x)|` per sample.
pub fn evaluate<B: Bijection + ?Sized>(flow: &B, data: &Matrix) -> Result<Evaluation> {
    if data.cols() != flow.dim() {
        return Err(Error::dim(format!(
            "data has {} columns, model is {}-dimensional",
            data.cols(),
            flow.dim()
        )));
    }
    let c = -0.5 * flow.dim() as f64 * (2.0 * PI).ln();
    let mut per_sample = Vec::with_capacity(data.rows());
    let mut singular = Vec::new();
    for (i, x) in data.row_iter().enumerate() {
        let (y, ld) = flow.forward_with_logdet(x).map_err(|e| e.at_sample(i))?;
        if !ld.is_finite() {
            singular.push(i);
            per_sample.push(f64::NEG_INFINITY);
        } else {
            per_sample.push(c - 0.5 * dot(&y, &y) + ld);
        }
    }
    let mean_log_likelihood = if per_sample.is_empty() {
        f64::NAN
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok(Evaluation { mean_log_likelihood, per_sample, singular })
}

/// `x_i = f⁻¹(z_i)` with `z_i ~ N(0, I)` drawn row by row.
pub fn sample<B: Bijection + ?Sized>(flow: &B, n: usize, seed: u64) -> Result<Matrix> {
    let d = flow.dim();
    let z = GaussianRng::new(seed).normal_matrix(n, d);
    let mut out = Vec::with_capacity(n * d);
    for (i, zi) in z.row_iter().enumerate() {
        out.extend(flow.inverse(zi).map_err(|e| e.at_sample(i))?);
    }
    Matrix::new(n, d, out)
}
