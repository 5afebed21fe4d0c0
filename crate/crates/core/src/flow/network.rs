use std::sync::OnceLock;

use super::activation::Activation;
use super::Bijection;
use crate::error::{Error, Result};
use crate::numlin::{gemm, slogdet, svd, Lu, Matrix};
use crate::rng::GaussianRng;

/// One affine map followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Self {
        Layer { weight, bias, activation }
    }
}

/// Stack of `D -> D` layers; the last one has identity activation.
///
/// Parameters only change through [`FlowNetwork::set_params`], which keeps
/// the cached per-layer determinants and factorizations consistent.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    dim: usize,
    layers: Vec<Layer>,
    // (sign, ln|det W|) per layer
    weight_logdets: Vec<(f64, f64)>,
    lu: OnceLock<Vec<Lu>>,
}

impl PartialEq for FlowNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl FlowNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let dim = layers
            .first()
            .map(|l| l.weight.rows())
            .ok_or_else(|| Error::invalid("a network needs at least one layer"))?;
        if dim == 0 {
            return Err(Error::dim("zero-dimensional network"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weight.shape() != (dim, dim) || layer.bias.len() != dim {
                return Err(Error::dim(format!(
                    "layer {i}: weight {:?}, bias {} for dim {dim}",
                    layer.weight.shape(),
                    layer.bias.len()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::domain(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::invalid("the final layer must have identity activation"));
        }
        let weight_logdets = layers.iter().map(|l| slogdet(&l.weight)).collect::<Result<_>>()?;
        Ok(FlowNetwork { dim, layers, weight_logdets, lu: OnceLock::new() })
    }

    pub fn identity(dim: usize) -> Self {
        FlowNetwork::linear(Matrix::identity(dim)).expect("identity is a valid layer")
    }

    /// Single linear layer `y = W x`.
    pub fn linear(weight: Matrix) -> Result<Self> {
        let d = weight.rows();
        FlowNetwork::new(vec![Layer::new(weight, vec![0.0; d], Activation::Identity)])
    }

    /// `hidden` layers with `activation`, then a final linear layer. Weights
    /// are random orthogonal matrices, biases zero.
    pub fn random(dim: usize, hidden: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = GaussianRng::new(seed);
        let mut layers = Vec::with_capacity(hidden + 1);
        for i in 0..=hidden {
            let act = if i == hidden { Activation::Identity } else { activation };
            layers.push(Layer::new(random_orthogonal(dim, &mut rng)?, vec![0.0; dim], act));
        }
        FlowNetwork::new(layers)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of hidden (nonlinear) layers, excluding the final linear one.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn weight_logdets(&self) -> &[(f64, f64)] {
        &self.weight_logdets
    }

    pub fn has_singular_weight(&self) -> bool {
        self.weight_logdets.iter().any(|&(s, _)| s == 0.0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.len() * (self.dim * self.dim + self.dim)
    }

    /// Flat parameter vector: per layer, the weight row-major then the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            p.extend_from_slice(layer.weight.as_slice());
            p.extend_from_slice(&layer.bias);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.num_params()
            )));
        }
        let d2 = self.dim * self.dim;
        for (layer, chunk) in self.layers.iter_mut().zip(params.chunks_exact(d2 + self.dim)) {
            layer.weight.as_mut_slice().copy_from_slice(&chunk[..d2]);
            layer.bias.copy_from_slice(&chunk[d2..]);
        }
        self.weight_logdets = self.layers.iter().map(|l| slogdet(&l.weight)).collect::<Result<_>>()?;
        self.lu = OnceLock::new();
        Ok(())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dim(format!(
                "vector of length {} for a {}-dimensional network",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite input"));
        }
        Ok(())
    }

    /// Evaluates the network and keeps every intermediate needed for the
    /// Jacobian, its log-determinant, and backpropagation.
    pub fn forward_chain(&self, x: &[f64]) -> Result<JacobianChain<'_>> {
        self.check_len(x)?;
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut deriv = Vec::with_capacity(n_layers);
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut a = layer.weight.matvec(&h)?;
            for (ai, bi) in a.iter_mut().zip(&layer.bias) {
                *ai += bi;
            }
            let next: Vec<f64> = a.iter().map(|&v| layer.activation.value(v)).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { layer: l });
            }
            deriv.push(a.iter().map(|&v| layer.activation.derivative(v)).collect());
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(a);
        }
        Ok(JacobianChain { net: self, inputs, pre, deriv, output: h })
    }

    fn lu_factors(&self) -> &[Lu] {
        self.lu.get_or_init(|| {
            self.layers.iter().map(|l| Lu::factor(&l.weight).expect("square by construction")).collect()
        })
    }
}

impl Bijection for FlowNetwork {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_chain(x)?.output)
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        let lus = self.lu_factors();
        let mut h = y.to_vec();
        for (layer, lu) in self.layers.iter().zip(lus).rev() {
            let mut a = h.iter().map(|&v| layer.activation.inverse(v)).collect::<Result<Vec<_>>>()?;
            for (ai, bi) in a.iter_mut().zip(&layer.bias) {
                *ai -= bi;
            }
            h = lu.solve(&a)?;
        }
        Ok(h)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.forward_chain(x)?.jacobian())
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_chain(x)?.logdet())
    }

    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let chain = self.forward_chain(x)?;
        let j = chain.jacobian();
        Ok((chain.output, j))
    }

    fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let chain = self.forward_chain(x)?;
        let ld = chain.logdet();
        Ok((chain.output, ld))
    }
}

/// Cached forward pass at one input: the Jacobian factors
/// `diag(φ'(a_l)) W_l` for every layer plus the activations around them.
#[derive(Debug, Clone)]
pub struct JacobianChain<'a> {
    net: &'a FlowNetwork,
    /// Input to each layer (`inputs[0]` is x).
    pub(crate) inputs: Vec<Vec<f64>>,
    /// Pre-activations `a_l = W_l h + b_l`.
    pub(crate) pre: Vec<Vec<f64>>,
    /// `φ'(a_l)`.
    pub(crate) deriv: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

impl<'a> JacobianChain<'a> {
    pub fn network(&self) -> &'a FlowNetwork {
        self.net
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }

    pub fn activation_derivatives(&self) -> &[Vec<f64>] {
        &self.deriv
    }

    /// Explicit product `diag(φ'(a_L)) W_L ⋯ diag(φ'(a_1)) W_1`.
    pub fn jacobian(&self) -> Matrix {
        let d = self.net.dim;
        let mut acc = scaled_weight(&self.net.layers[0].weight, &self.deriv[0]);
        let mut tmp = Matrix::zeros(d, d);
        for (layer, dv) in self.net.layers.iter().zip(&self.deriv).skip(1) {
            gemm(1.0, layer.weight.view(), acc.view(), 0.0, &mut tmp);
            scale_rows(&mut tmp, dv);
            std::mem::swap(&mut acc, &mut tmp);
        }
        acc
    }

    /// `ln|det J|` through the per-layer decomposition
    /// `Σ_l ln|det W_l| + Σ_{l,i} ln φ'(a_{l,i})`. Negative infinity when a
    /// weight is singular (see [`Self::is_singular`]).
    pub fn logdet(&self) -> f64 {
        if self.is_singular() {
            return f64::NEG_INFINITY;
        }
        let mut total: f64 = self.net.weight_logdets.iter().map(|&(_, l)| l).sum();
        for (layer, a) in self.net.layers.iter().zip(&self.pre) {
            if layer.activation != Activation::Identity {
                total += a.iter().map(|&v| layer.activation.log_derivative(v)).sum::<f64>();
            }
        }
        total
    }

    pub fn is_singular(&self) -> bool {
        self.net.has_singular_weight()
    }
}

pub(crate) fn scaled_weight(w: &Matrix, rows: &[f64]) -> Matrix {
    let mut m = w.clone();
    scale_rows(&mut m, rows);
    m
}

pub(crate) fn scale_rows(m: &mut Matrix, s: &[f64]) {
    for (i, &si) in s.iter().enumerate() {
        if si != 1.0 {
            m.row_mut(i).iter_mut().for_each(|v| *v *= si);
        }
    }
}

/// `U Vᵀ` from the SVD of a Gaussian matrix.
pub fn random_orthogonal(dim: usize, rng: &mut GaussianRng) -> Result<Matrix> {
    let g = rng.normal_matrix(dim, dim);
    let f = svd(&g)?;
    f.u.matmul(&f.v.transpose())
}
