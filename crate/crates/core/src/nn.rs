//! Layers built on the autodiff [`Graph`].

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Group, Init, ParamId, ParamStore};
use crate::tensor::Matrix;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · W + b` with `W` of shape `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        in_dim: usize,
        out_dim: usize,
        init: Init,
    ) -> Self {
        let weight = store.register(format!("{name}.weight"), group, in_dim, out_dim, init, rng);
        let bias = store.register(format!("{name}.bias"), group, 1, out_dim, Init::Zeros, rng);
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Row-wise layer normalization with a learned affine transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, group: Group, dim: usize) -> Self {
        let gamma = store.register(format!("{name}.gamma"), group, 1, dim, Init::Ones, rng);
        let beta = store.register(format!("{name}.beta"), group, 1, dim, Init::Zeros, rng);
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let n = g.layer_norm_rows(x, LAYER_NORM_EPS);
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let scaled = g.mul_row(n, gamma);
        g.add_row(scaled, beta)
    }
}

/// Per-feature running statistics of a batch normalization layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self { mean: alloc::vec![0.0; dim], var: alloc::vec![1.0; dim] }
    }

    /// Exponential update with the batch mean and unbiased batch variance.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.unbiased_var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

/// Statistics of one training batch, applied to [`RunningStats`] afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, sampled latents.
    Train,
    /// Running statistics, latents at their means.
    Eval,
}

/// Batch normalization over the rows of an `n × d` input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, group: Group, dim: usize) -> Self {
        let gamma = store.register(format!("{name}.gamma"), group, 1, dim, Init::Ones, rng);
        let beta = store.register(format!("{name}.beta"), group, 1, dim, Init::Zeros, rng);
        Self { gamma, beta, dim, eps: Self::DEFAULT_EPS, momentum: Self::DEFAULT_MOMENTUM }
    }

    /// Normalized input before the affine transform.
    pub fn normalize(
        &self,
        g: &mut Graph,
        x: Var,
        mode: Mode,
        running: &RunningStats,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (rows, cols) = g.value(x).shape();
        if cols != self.dim {
            return Err(Error::DimensionMismatch { what: "batch norm input", expected: self.dim, actual: cols });
        }
        match mode {
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::BatchTooSmall { size: rows });
                }
                let stats = batch_stats(g.value(x));
                Ok((g.batch_norm_cols(x, self.eps), Some(stats)))
            }
            Mode::Eval => {
                let neg_mean = g.constant(Matrix::row_vector(running.mean.iter().map(|m| -m).collect()));
                let inv_std = g
                    .constant(Matrix::row_vector(running.var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect()));
                let centered = g.add_row(x, neg_mean);
                Ok((g.mul_row(centered, inv_std), None))
            }
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mode: Mode,
        running: &RunningStats,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (n, stats) = self.normalize(g, x, mode, running)?;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let scaled = g.mul_row(n, gamma);
        Ok((g.add_row(scaled, beta), stats))
    }
}

fn batch_stats(x: &Matrix) -> BatchStats {
    let (rows, cols) = x.shape();
    let n = rows as f64;
    let mut mean = alloc::vec![0.0; cols];
    for r in 0..rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n;
        }
    }
    let mut unbiased_var = alloc::vec![0.0; cols];
    for r in 0..rows {
        for ((s, v), m) in unbiased_var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m) / (n - 1.0);
        }
    }
    BatchStats { mean, unbiased_var }
}

/// Multi-head scaled dot-product self-attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidConfig(format!("hidden width {dim} is not divisible by {heads} heads")));
        }
        let mk = |store: &mut ParamStore, rng: &mut R, part: &str| {
            Linear::new(store, rng, &format!("{name}.{part}"), group, dim, dim, Init::Xavier)
        };
        Ok(Self {
            query: mk(store, rng, "query"),
            key: mk(store, rng, "key"),
            value: mk(store, rng, "value"),
            output: mk(store, rng, "output"),
            heads,
        })
    }

    /// `causal` masks attention to later positions.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, causal: bool) -> Var {
        let (len, dim) = g.value(x).shape();
        let head_dim = dim / self.heads;
        let q = self.query.forward(g, store, x);
        let k = self.key.forward(g, store, x);
        let v = self.value.forward(g, store, x);
        let mask = causal.then(|| {
            let mut m = Matrix::zeros(len, len);
            for i in 0..len {
                for j in i + 1..len {
                    m.set(i, j, -1e9);
                }
            }
            g.constant(m)
        });
        let scale = 1.0 / libm::sqrt(head_dim as f64);
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim);
            let kh = g.slice_cols(k, h * head_dim, head_dim);
            let vh = g.slice_cols(v, h * head_dim, head_dim);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let mut scores = g.scale(scores, scale);
            if let Some(mask) = mask {
                scores = g.add(scores, mask);
            }
            let weights = g.softmax_rows(scores);
            outputs.push(g.matmul(weights, vh));
        }
        let joined = if outputs.len() == 1 { outputs[0] } else { g.concat_cols(&outputs) };
        self.output.forward(g, store, joined)
    }
}

/// Pre-norm transformer block: attention and a GELU feed-forward layer,
/// each wrapped in a residual connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub attn_norm: LayerNorm,
    pub attention: SelfAttention,
    pub ff_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        group: Group,
        dim: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Result<Self> {
        Ok(Self {
            attn_norm: LayerNorm::new(store, rng, &format!("{name}.attn_norm"), group, dim),
            attention: SelfAttention::new(store, rng, &format!("{name}.attn"), group, dim, heads)?,
            ff_norm: LayerNorm::new(store, rng, &format!("{name}.ff_norm"), group, dim),
            ff_in: Linear::new(store, rng, &format!("{name}.ff_in"), group, dim, ff_dim, Init::Xavier),
            ff_out: Linear::new(store, rng, &format!("{name}.ff_out"), group, ff_dim, dim, Init::Xavier),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, causal: bool) -> Var {
        let h = self.attn_norm.forward(g, store, x);
        let a = self.attention.forward(g, store, h, causal);
        let x = g.add(x, a);
        let h = self.ff_norm.forward(g, store, x);
        let h = self.ff_in.forward(g, store, h);
        let h = g.gelu(h);
        let h = self.ff_out.forward(g, store, h);
        g.add(x, h)
    }
}
