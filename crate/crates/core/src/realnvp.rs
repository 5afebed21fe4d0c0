//! Affine coupling layers and stacks of them.
//!
//! A coupling layer keeps the first `d` coordinates and maps the rest by
//!
//! ```text
//! y₁ = x₁,    y₂ = x₂ ⊙ exp(s(x₁)) + t(x₁)
//! ```
//!
//! followed by a fixed coordinate permutation (`out[i] = y[perm[i]]`). The
//! scale and shift networks are small ReLU perceptrons whose last layer
//! starts at zero, so a fresh layer is the identity before its permutation.

use crate::error::{Error, Result};
use crate::flow::Bijection;
use crate::numlin::{gemm, Matrix};
use crate::objective::{loss_of, LossBreakdown};
use crate::optimize::Trainable;
use crate::rng::GaussianRng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// `out × in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub relu: bool,
}

/// Feed-forward map with ReLU hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<MlpLayer>,
}

struct MlpCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl Mlp {
    pub fn new(layers: Vec<MlpLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("perceptron needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows() {
                return Err(Error::dim(format!("perceptron layer {i}: bias does not match weight rows")));
            }
            if i > 0 && l.weight.cols() != layers[i - 1].weight.rows() {
                return Err(Error::dim(format!("perceptron layer {i}: input width mismatch")));
            }
        }
        Ok(Mlp { layers })
    }

    /// He-initialized hidden layers, zero output layer.
    pub fn init(input: usize, hidden: usize, depth: usize, output: usize, rng: &mut GaussianRng) -> Self {
        let mut layers = Vec::with_capacity(depth + 1);
        let mut fan_in = input;
        for _ in 0..depth {
            let scale = (2.0 / fan_in as f64).sqrt();
            let w = Matrix::from_fn(hidden, fan_in, |_, _| scale * rng.normal());
            layers.push(MlpLayer { weight: w, bias: vec![0.0; hidden], relu: true });
            fan_in = hidden;
        }
        layers.push(MlpLayer { weight: Matrix::zeros(output, fan_in), bias: vec![0.0; output], relu: false });
        Mlp { layers }
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * (l.weight.cols() + 1)).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, p: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight.as_mut_slice().copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        at
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            let mut a = l.weight.matvec(&h).expect("widths checked on construction");
            for (ai, bi) in a.iter_mut().zip(&l.bias) {
                *ai += bi;
                if l.relu && *ai < 0.0 {
                    *ai = 0.0;
                }
            }
            h = a;
        }
        h
    }

    /// `out × in` Jacobian at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let mut h = x.to_vec();
        let mut acc: Option<Matrix> = None;
        for l in &self.layers {
            let mut a = l.weight.matvec(&h).expect("widths checked on construction");
            for (ai, bi) in a.iter_mut().zip(&l.bias) {
                *ai += bi;
            }
            let mut j = match &acc {
                None => l.weight.clone(),
                Some(prev) => l.weight.matmul(prev).expect("widths checked on construction"),
            };
            if l.relu {
                for (r, &ar) in a.iter().enumerate() {
                    if ar <= 0.0 {
                        j.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acc = Some(j);
            h = a;
        }
        acc.expect("at least one layer")
    }

    fn forward_batch(&self, x: Matrix) -> (Matrix, MlpCache) {
        let mut cache = MlpCache { inputs: Vec::new(), pre: Vec::new() };
        let mut h = x;
        for l in &self.layers {
            let mut a = Matrix::zeros(h.rows(), l.weight.rows());
            gemm(1.0, h.view(), l.weight.view().t(), 0.0, &mut a);
            for r in 0..a.rows() {
                for (v, b) in a.row_mut(r).iter_mut().zip(&l.bias) {
                    *v += b;
                }
            }
            let next = if l.relu {
                let mut n = a.clone();
                n.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                n
            } else {
                a.clone()
            };
            cache.inputs.push(std::mem::replace(&mut h, next));
            cache.pre.push(a);
        }
        (h, cache)
    }

    /// Accumulates parameter gradients into `grad` (this network's slice)
    /// and returns the gradient with respect to the batch input.
    fn backward_batch(&self, cache: &MlpCache, gout: Matrix, grad: &mut [f64]) -> Matrix {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.weight.rows() * (l.weight.cols() + 1);
        }
        let mut g = gout;
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            if l.relu {
                for (gv, &a) in g.as_mut_slice().iter_mut().zip(cache.pre[k].as_slice()) {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let (rows, cols) = l.weight.shape();
            let mut dw = Matrix::zeros(rows, cols);
            gemm(1.0, g.view().t(), cache.inputs[k].view(), 0.0, &mut dw);
            let o = offsets[k];
            for (dst, v) in grad[o..o + rows * cols].iter_mut().zip(dw.as_slice()) {
                *dst += v;
            }
            let gb = &mut grad[o + rows * cols..o + rows * cols + rows];
            for r in g.row_iter() {
                for (dst, v) in gb.iter_mut().zip(r) {
                    *dst += v;
                }
            }
            let mut gin = Matrix::zeros(g.rows(), cols);
            gemm(1.0, g.view(), l.weight.view(), 0.0, &mut gin);
            g = gin;
        }
        g
    }
}

/// One affine coupling followed by its permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    dim: usize,
    d: usize,
    s_net: Mlp,
    t_net: Mlp,
    permutation: Vec<usize>,
}

struct CouplingCache {
    x: Matrix,
    s_cache: MlpCache,
    t_cache: MlpCache,
    e: Matrix,
}

/// `out[i] = y[(i + shift) mod D]`.
pub fn cyclic_permutation(dim: usize, shift: usize) -> Vec<usize> {
    (0..dim).map(|i| (i + shift) % dim).collect()
}

impl CouplingLayer {
    pub fn new(dim: usize, d: usize, s_net: Mlp, t_net: Mlp, permutation: Vec<usize>) -> Result<Self> {
        if d == 0 || d >= dim {
            return Err(Error::dim(format!("partition size must satisfy 1 ≤ d < {dim}, got {d}")));
        }
        for net in [&s_net, &t_net] {
            if net.input_dim() != d || net.output_dim() != dim - d {
                return Err(Error::dim(format!("scale/shift networks must map {d} -> {} dims", dim - d)));
            }
        }
        let mut seen = vec![false; dim];
        if permutation.len() != dim
            || permutation.iter().any(|&p| p >= dim || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::invalid(format!("{permutation:?} is not a permutation of 0..{dim}")));
        }
        Ok(CouplingLayer { dim, d, s_net, t_net, permutation })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partition(&self) -> usize {
        self.d
    }

    pub fn s_net(&self) -> &Mlp {
        &self.s_net
    }

    pub fn t_net(&self) -> &Mlp {
        &self.t_net
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    fn num_params(&self) -> usize {
        self.s_net.num_params() + self.t_net.num_params()
    }

    /// The coupling map without its permutation, and `Σ s(x₁)`.
    pub fn couple(&self, x: &[f64], layer: usize) -> Result<(Vec<f64>, f64)> {
        let d = self.d;
        let s = self.s_net.eval(&x[..d]);
        let t = self.t_net.eval(&x[..d]);
        let mut y = x.to_vec();
        for i in 0..self.dim - d {
            y[d + i] = x[d + i] * s[i].exp() + t[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { layer });
        }
        Ok((y, s.iter().sum()))
    }

    /// Applies the coupling and the permutation; returns the output and
    /// this layer's log-determinant contribution.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.forward_at(x, 0)
    }

    fn forward_at(&self, x: &[f64], layer: usize) -> Result<(Vec<f64>, f64)> {
        let (y, ld) = self.couple(x, layer)?;
        Ok((self.permutation.iter().map(|&p| y[p]).collect(), ld))
    }

    pub fn inverse(&self, out: &[f64]) -> Result<Vec<f64>> {
        self.inverse_at(out, 0)
    }

    fn inverse_at(&self, out: &[f64], layer: usize) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim];
        for (i, &p) in self.permutation.iter().enumerate() {
            y[p] = out[i];
        }
        let d = self.d;
        let s = self.s_net.eval(&y[..d]);
        let t = self.t_net.eval(&y[..d]);
        for i in 0..self.dim - d {
            y[d + i] = (y[d + i] - t[i]) * (-s[i]).exp();
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { layer });
        }
        Ok(y)
    }

    /// Jacobian of the coupling before the permutation: block lower
    /// triangular with an identity top-left block.
    pub fn coupling_jacobian(&self, x: &[f64]) -> Matrix {
        let (d, dim) = (self.d, self.dim);
        let x1 = &x[..d];
        let s = self.s_net.eval(x1);
        let js = self.s_net.jacobian(x1);
        let jt = self.t_net.jacobian(x1);
        let mut j = Matrix::zeros(dim, dim);
        for i in 0..d {
            j[(i, i)] = 1.0;
        }
        for i in 0..dim - d {
            let e = s[i].exp();
            let xe = x[d + i] * e;
            for k in 0..d {
                j[(d + i, k)] = xe * js[(i, k)] + jt[(i, k)];
            }
            j[(d + i, d + i)] = e;
        }
        j
    }

    /// Jacobian including the permutation.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let j = self.coupling_jacobian(x);
        Matrix::from_fn(self.dim, self.dim, |i, k| j[(self.permutation[i], k)])
    }

    fn forward_batch(&self, x: Matrix, layer: usize) -> Result<(Matrix, CouplingCache)> {
        let (b, dim, d) = (x.rows(), self.dim, self.d);
        let x1 = Matrix::from_fn(b, d, |r, c| x[(r, c)]);
        let (s, s_cache) = self.s_net.forward_batch(x1.clone());
        let (t, t_cache) = self.t_net.forward_batch(x1);
        let mut e = s;
        e.as_mut_slice().iter_mut().for_each(|v| *v = v.exp());
        let mut out = Matrix::zeros(b, dim);
        for r in 0..b {
            for (i, &p) in self.permutation.iter().enumerate() {
                out[(r, i)] = if p < d { x[(r, p)] } else { x[(r, p)] * e[(r, p - d)] + t[(r, p - d)] };
            }
        }
        if !out.is_finite() {
            return Err(Error::Overflow { layer });
        }
        Ok((out, CouplingCache { x, s_cache, t_cache, e }))
    }
}

/// Stack of coupling layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RealNvp {
    dim: usize,
    layers: Vec<CouplingLayer>,
}

impl RealNvp {
    /// `depth` couplings with partition `d`, each network with two ReLU
    /// hidden layers of `hidden` units, and a cyclic shift by one after
    /// every layer.
    pub fn stack(dim: usize, depth: usize, d: usize, hidden: usize, seed: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("coupling stack needs depth ≥ 1"));
        }
        if hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if d == 0 || d >= dim {
            return Err(Error::dim(format!("partition size must satisfy 1 ≤ d < {dim}, got {d}")));
        }
        let mut rng = GaussianRng::new(seed);
        let mut layers = Vec::with_capacity(depth);
        for _ in 0..depth {
            let s = Mlp::init(d, hidden, 2, dim - d, &mut rng);
            let t = Mlp::init(d, hidden, 2, dim - d, &mut rng);
            layers.push(CouplingLayer::new(dim, d, s, t, cyclic_permutation(dim, 1))?);
        }
        Ok(RealNvp { dim, layers })
    }

    pub fn from_layers(layers: Vec<CouplingLayer>) -> Result<Self> {
        let dim = layers
            .first()
            .map(CouplingLayer::dim)
            .ok_or_else(|| Error::invalid("coupling stack needs depth ≥ 1"))?;
        if layers.iter().any(|l| l.dim != dim) {
            return Err(Error::dim("coupling layers disagree on dimension"));
        }
        Ok(RealNvp { dim, layers })
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(CouplingLayer::num_params).sum()
    }

    /// Composition of all permutations: with identity couplings,
    /// `out[i] = x[map[i]]`.
    pub fn coordinate_map(&self) -> Vec<usize> {
        let mut map: Vec<usize> = (0..self.dim).collect();
        for l in &self.layers {
            map = l.permutation.iter().map(|&p| map[p]).collect();
        }
        map
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dim(format!(
                "vector of length {} for a {}-dimensional stack",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite input"));
        }
        Ok(())
    }

    fn batch_loss_and_gradient(&self, batch: &Matrix) -> Result<(LossBreakdown, Vec<f64>)> {
        let (b, dim) = batch.shape();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = batch.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let (next, cache) = l.forward_batch(h, k)?;
            caches.push(cache);
            h = next;
        }
        let q: f64 = h.as_slice().iter().map(|v| v * v).sum();
        let logdet: f64 = caches.iter().map(|c| c.e.as_slice().iter().map(|e| e.ln()).sum::<f64>()).sum();
        let loss = LossBreakdown::from_sums(dim, b, q, -2.0 * logdet, 0.0);

        let inv_n = 1.0 / b as f64;
        let mut grad = vec![0.0; self.num_params()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.num_params();
        }
        let mut g = h.scale(2.0 * inv_n);
        for (k, l) in self.layers.iter().enumerate().rev() {
            let c = &caches[k];
            let d = l.d;
            let mut gy = Matrix::zeros(b, dim);
            for r in 0..b {
                for (i, &p) in l.permutation.iter().enumerate() {
                    gy[(r, p)] = g[(r, i)];
                }
            }
            let m = dim - d;
            let mut gs = Matrix::zeros(b, m);
            let mut gt = Matrix::zeros(b, m);
            let mut gx = Matrix::zeros(b, dim);
            for r in 0..b {
                for i in 0..m {
                    let gyi = gy[(r, d + i)];
                    let e = c.e[(r, i)];
                    gx[(r, d + i)] = gyi * e;
                    gs[(r, i)] = gyi * c.x[(r, d + i)] * e - 2.0 * inv_n;
                    gt[(r, i)] = gyi;
                }
            }
            let (s_grad, t_grad) =
                grad[offsets[k]..offsets[k] + l.num_params()].split_at_mut(l.s_net.num_params());
            let g1s = l.s_net.backward_batch(&c.s_cache, gs, s_grad);
            let g1t = l.t_net.backward_batch(&c.t_cache, gt, t_grad);
            for r in 0..b {
                for j in 0..d {
                    gx[(r, j)] = gy[(r, j)] + g1s[(r, j)] + g1t[(r, j)];
                }
            }
            g = gx;
        }
        Ok((loss, grad))
    }
}

impl Bijection for RealNvp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_logdet(x)?.0)
    }

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y)?;
        let mut h = y.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            h = l.inverse_at(&h, k)?;
        }
        Ok(h)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check(x)?;
        let mut h = x.to_vec();
        let mut acc = Matrix::identity(self.dim);
        for (k, l) in self.layers.iter().enumerate() {
            acc = l.jacobian(&h).matmul(&acc)?;
            h = l.forward_at(&h, k)?.0;
        }
        Ok(acc)
    }

    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_with_logdet(x)?.1)
    }

    fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(x)?;
        let mut h = x.to_vec();
        let mut total = 0.0;
        for (k, l) in self.layers.iter().enumerate() {
            let (next, ld) = l.forward_at(&h, k)?;
            h = next;
            total += ld;
        }
        Ok((h, total))
    }
}

impl Trainable for RealNvp {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            l.s_net.write_params(&mut p);
            l.t_net.write_params(&mut p);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} parameters for a stack with {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            at += l.s_net.read_params(&params[at..]);
            at += l.t_net.read_params(&params[at..]);
        }
        Ok(())
    }

    fn loss(&self, batch: &Matrix, alpha: f64) -> Result<LossBreakdown> {
        loss_of(self, batch, alpha)
    }

    /// Only the unregularized objective (`alpha = 0`) has an analytic
    /// gradient here.
    fn loss_and_gradient(&self, batch: &Matrix, alpha: f64) -> Result<(LossBreakdown, Vec<f64>)> {
        if alpha != 0.0 {
            return Err(Error::invalid("coupling stacks train with alpha = 0 only"));
        }
        if batch.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if batch.cols() != self.dim {
            return Err(Error::dim(format!(
                "batch has {} columns for a {}-dimensional stack",
                batch.cols(),
                self.dim
            )));
        }
        self.batch_loss_and_gradient(batch)
    }
}
