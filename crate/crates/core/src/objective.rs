//! Regularized flow objective and its exact parameter gradient.
//!
//! Per sample the minimized quantity is
//!
//! ```text
//! ‖f(x)‖² - logdet(JᵀJ) + α ‖J‖_F²,    J = J_f(x),
//! ```
//!
//! averaged over the batch. The gradient of the Frobenius term is obtained by
//! a reverse pass over the explicit Jacobian product
//! `J = A_{n-1} ⋯ A_0` with `A_k = diag(φ'(a_k)) W_k`: with prefix products
//! `P_k = A_k ⋯ A_0` and the adjoints `R_{n-1} = 2αJ`, `R_{k-1} = A_kᵀ R_k`,
//! the penalty contributes `R_k P_{k-1}ᵀ` to `∂/∂A_k`, which splits into a
//! weight term and a term on the pre-activations that joins the ordinary
//! backpropagation of the other two terms.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{scale_rows, scaled_weight, Activation, Bijection, FlowNetwork};
use crate::numlin::{axpy, dot, gemm, Lu, Matrix};

/// Batch means of the objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Mean `‖f(x)‖²`.
    pub quadratic: f64,
    /// Mean `-logdet(JᵀJ) = -2 ln|det J|`.
    pub neg_logdet: f64,
    /// Mean `α ‖J‖_F²`.
    pub tikhonov: f64,
    pub total: f64,
    /// Mean log-likelihood in nats under a standard normal target,
    /// including the `-(D/2) ln 2π` constant.
    pub log_likelihood: f64,
}

impl LossBreakdown {
    pub(crate) fn from_sums(dim: usize, n: usize, q: f64, nl: f64, t: f64) -> Self {
        let inv = 1.0 / n as f64;
        let (quadratic, neg_logdet, tikhonov) = (q * inv, nl * inv, t * inv);
        LossBreakdown {
            quadratic,
            neg_logdet,
            tikhonov,
            total: quadratic + neg_logdet + tikhonov,
            log_likelihood: -0.5 * quadratic - 0.5 * neg_logdet - 0.5 * dim as f64 * (2.0 * PI).ln(),
        }
    }
}

/// Gradient of the batch objective, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    fn zeros_like(net: &FlowNetwork) -> Self {
        let d = net.dim();
        GradientSet {
            weights: net.layers().iter().map(|_| Matrix::zeros(d, d)).collect(),
            biases: net.layers().iter().map(|_| vec![0.0; d]).collect(),
        }
    }

    /// Same ordering as [`FlowNetwork::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

fn check_batch(dim: usize, batch: &Matrix, alpha: f64) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.cols() != dim {
        return Err(Error::dim(format!("batch has {} columns for a {dim}-dimensional flow", batch.cols())));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be finite and ≥ 0, got {alpha}")));
    }
    Ok(())
}

/// Objective terms for any bijection, using its explicit Jacobian.
pub fn loss_of<B: Bijection + ?Sized>(flow: &B, batch: &Matrix, alpha: f64) -> Result<LossBreakdown> {
    check_batch(flow.dim(), batch, alpha)?;
    let (mut q, mut nl, mut t) = (0.0, 0.0, 0.0);
    for (i, x) in batch.row_iter().enumerate() {
        let (y, ld) = flow.forward_with_logdet(x).map_err(|e| e.at_sample(i))?;
        if !ld.is_finite() {
            return Err(Error::SingularJacobian { index: i, smallest: 0.0 });
        }
        q += dot(&y, &y);
        nl -= 2.0 * ld;
        if alpha > 0.0 {
            let j = flow.jacobian(x).map_err(|e| e.at_sample(i))?;
            t += alpha * dot(j.as_slice(), j.as_slice());
        }
    }
    Ok(LossBreakdown::from_sums(flow.dim(), batch.rows(), q, nl, t))
}

/// Objective terms for a dense flow network.
pub fn loss(net: &FlowNetwork, batch: &Matrix, alpha: f64) -> Result<LossBreakdown> {
    check_batch(net.dim(), batch, alpha)?;
    if net.has_singular_weight() {
        return Err(Error::SingularJacobian { index: 0, smallest: 0.0 });
    }
    let (mut q, mut nl, mut t) = (0.0, 0.0, 0.0);
    for (i, x) in batch.row_iter().enumerate() {
        let chain = net.forward_chain(x).map_err(|e| e.at_sample(i))?;
        let ld = chain.logdet();
        if !ld.is_finite() {
            return Err(Error::SingularJacobian { index: i, smallest: 0.0 });
        }
        q += dot(chain.output(), chain.output());
        nl -= 2.0 * ld;
        if alpha > 0.0 {
            let j = chain.jacobian();
            t += alpha * dot(j.as_slice(), j.as_slice());
        }
    }
    Ok(LossBreakdown::from_sums(net.dim(), batch.rows(), q, nl, t))
}

/// Objective terms and their exact gradient for a dense flow network.
pub fn gradient(net: &FlowNetwork, batch: &Matrix, alpha: f64) -> Result<(LossBreakdown, GradientSet)> {
    check_batch(net.dim(), batch, alpha)?;
    let d = net.dim();
    let layers = net.layers();
    let n_layers = layers.len();

    // -2 Σ_k ln|det W_k| contributes -2 W_k⁻ᵀ, identical for every sample.
    let mut inv_t = Vec::with_capacity(n_layers);
    for layer in layers {
        let lu = Lu::factor(&layer.weight)?;
        if lu.is_singular() {
            return Err(Error::SingularJacobian { index: 0, smallest: 0.0 });
        }
        inv_t.push(lu.inverse()?.transpose());
    }

    let mut grad = GradientSet::zeros_like(net);
    let mut ws = Workspace::new(d, n_layers);
    let (mut q, mut nl, mut t) = (0.0, 0.0, 0.0);

    for (i, x) in batch.row_iter().enumerate() {
        let chain = net.forward_chain(x).map_err(|e| e.at_sample(i))?;
        let ld = chain.logdet();
        if !ld.is_finite() {
            return Err(Error::SingularJacobian { index: i, smallest: 0.0 });
        }
        let y = chain.output();
        q += dot(y, y);
        nl -= 2.0 * ld;

        // extra[k][i]: gradient reaching the pre-activation a_{k,i} directly,
        // not through the layer output.
        for k in 0..n_layers {
            let act = layers[k].activation;
            let extra = &mut ws.extra[k];
            if act == Activation::Identity {
                extra.iter_mut().for_each(|e| *e = 0.0);
            } else {
                for (e, &a) in extra.iter_mut().zip(&chain.pre[k]) {
                    *e = -2.0 * act.log_derivative_slope(a);
                }
            }
        }

        if alpha > 0.0 {
            // prefix products P_k = A_k ⋯ A_0
            ws.prefix[0] = scaled_weight(&layers[0].weight, &chain.deriv[0]);
            for k in 1..n_layers {
                let (done, rest) = ws.prefix.split_at_mut(k);
                let out = &mut rest[0];
                gemm(1.0, layers[k].weight.view(), done[k - 1].view(), 0.0, out);
                scale_rows(out, &chain.deriv[k]);
            }
            let jac = &ws.prefix[n_layers - 1];
            t += alpha * dot(jac.as_slice(), jac.as_slice());

            // adjoint of J for α‖J‖²
            ws.adj = jac.scale(2.0 * alpha);
            for k in (0..n_layers).rev() {
                let layer = &layers[k];
                // H_k = R_k P_{k-1}ᵀ
                if k == 0 {
                    ws.h.as_mut_slice().copy_from_slice(ws.adj.as_slice());
                } else {
                    gemm(1.0, ws.adj.view(), ws.prefix[k - 1].view().t(), 0.0, &mut ws.h);
                }
                let dvec = &chain.deriv[k];
                let gw = grad.weights[k].as_mut_slice();
                for r in 0..d {
                    let hrow = ws.h.row(r);
                    let wrow = layer.weight.row(r);
                    axpy(dvec[r], hrow, &mut gw[r * d..(r + 1) * d]);
                    if layer.activation != Activation::Identity {
                        let s = dot(hrow, wrow);
                        ws.extra[k][r] += layer.activation.second_derivative(chain.pre[k][r]) * s;
                    }
                }
                if k > 0 {
                    // R_{k-1} = W_kᵀ diag(d_k) R_k
                    scale_rows(&mut ws.adj, dvec);
                    gemm(1.0, layer.weight.view().t(), ws.adj.view(), 0.0, &mut ws.h);
                    std::mem::swap(&mut ws.adj, &mut ws.h);
                }
            }
        }

        // ordinary backpropagation of ‖y‖² plus the direct pre-activation terms
        ws.g.copy_from_slice(y);
        ws.g.iter_mut().for_each(|v| *v *= 2.0);
        for k in (0..n_layers).rev() {
            let layer = &layers[k];
            for r in 0..d {
                ws.ga[r] = ws.g[r] * chain.deriv[k][r] + ws.extra[k][r];
            }
            let gw = grad.weights[k].as_mut_slice();
            let h_in = &chain.inputs[k];
            for r in 0..d {
                if ws.ga[r] != 0.0 {
                    axpy(ws.ga[r], h_in, &mut gw[r * d..(r + 1) * d]);
                }
            }
            axpy(1.0, &ws.ga, &mut grad.biases[k]);
            if k > 0 {
                ws.g = layer.weight.t_matvec(&ws.ga)?;
            }
        }
    }

    let n = batch.rows() as f64;
    for (k, inv) in inv_t.iter().enumerate() {
        let gw = grad.weights[k].as_mut_slice();
        for (g, v) in gw.iter_mut().zip(inv.as_slice()) {
            *g = *g / n - 2.0 * v;
        }
        grad.biases[k].iter_mut().for_each(|b| *b /= n);
    }
    Ok((LossBreakdown::from_sums(d, batch.rows(), q, nl, t), grad))
}

struct Workspace {
    prefix: Vec<Matrix>,
    adj: Matrix,
    h: Matrix,
    extra: Vec<Vec<f64>>,
    g: Vec<f64>,
    ga: Vec<f64>,
}

impl Workspace {
    fn new(d: usize, n_layers: usize) -> Self {
        Workspace {
            prefix: (0..n_layers).map(|_| Matrix::zeros(d, d)).collect(),
            adj: Matrix::zeros(d, d),
            h: Matrix::zeros(d, d),
            extra: vec![vec![0.0; d]; n_layers],
            g: vec![0.0; d],
            ga: vec![0.0; d],
        }
    }
}

/// Central differences of the total loss in every parameter.
pub fn numeric_gradient(net: &FlowNetwork, batch: &Matrix, alpha: f64, h: f64) -> Result<Vec<f64>> {
    let p0 = net.params();
    let mut probe = net.clone();
    (0..p0.len())
        .map(|i| {
            let mut p = p0.clone();
            p[i] += h;
            probe.set_params(&p)?;
            let up = loss(&probe, batch, alpha)?.total;
            p[i] -= 2.0 * h;
            probe.set_params(&p)?;
            let down = loss(&probe, batch, alpha)?.total;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// max |a - b| / max(|b|, 1).
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Largest discrepancy between [`gradient`] and central differences with
/// step `h`, in the sense of [`max_rel_err`].
pub fn gradient_check(net: &FlowNetwork, batch: &Matrix, alpha: f64, h: f64) -> Result<f64> {
    let (_, g) = gradient(net, batch, alpha)?;
    let fd = numeric_gradient(net, batch, alpha, h)?;
    Ok(max_rel_err(&g.flatten(), &fd))
}
