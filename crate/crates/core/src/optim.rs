//! AdamW with global gradient-norm clipping.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::Grads;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 norm the gradient is clipped to; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, clip_norm: Some(1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    /// Parameters the optimizer may touch, in ascending id order.
    trainable: Vec<ParamId>,
    moments: BTreeMap<usize, Moments>,
}

/// What one optimizer step did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl AdamW {
    /// Optimizes every non-frozen parameter of `store` except `excluded`.
    pub fn new(config: AdamWConfig, store: &ParamStore, excluded: &[ParamId]) -> Self {
        let trainable = store.iter().filter(|(id, p)| !p.frozen && !excluded.contains(id)).map(|(id, _)| id).collect();
        Self { config, step: 0, trainable, moments: BTreeMap::new() }
    }

    pub fn trainable(&self) -> &[ParamId] {
        &self.trainable
    }

    /// Global L2 norm over the trainable parameters' gradients.
    pub fn grad_norm(&self, grads: &Grads) -> f64 {
        let sq: f64 = self.trainable.iter().filter_map(|&id| grads.param(id)).map(Matrix::squared_norm).sum();
        libm::sqrt(sq)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> StepInfo {
        let c = self.config;
        let grad_norm = self.grad_norm(grads);
        let scale = match c.clip_norm {
            Some(max) if grad_norm > max => max / grad_norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for &id in &self.trainable {
            let Some(grad) = grads.param(id) else { continue };
            let value = store.value_mut(id);
            let mom = self.moments.entry(id.0).or_insert_with(|| Moments {
                m: Matrix::zeros(value.rows(), value.cols()),
                v: Matrix::zeros(value.rows(), value.cols()),
            });
            let (m, v) = (mom.m.data_mut(), mom.v.data_mut());
            for (i, (p, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g * scale;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= c.lr * (m_hat / (libm::sqrt(v_hat) + c.eps) + c.weight_decay * *p);
            }
        }
        StepInfo { grad_norm, clipped: scale < 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::params::Group;

    fn quadratic(store: &ParamStore, id: ParamId) -> Grads {
        // loss = sum(w²) / 2, gradient = w
        let mut g = Graph::new();
        let w = g.param(store, id);
        let sq = g.square(w);
        let s = g.sum(sq);
        let loss = g.scale(s, 0.5);
        g.backward(loss)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Group::Encoder, false, Matrix::from_vec(1, 2, alloc::vec![0.5, -0.25]));
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, clip_norm: None, ..AdamWConfig::default() };
        let mut opt = AdamW::new(cfg, &store, &[]);
        let grads = quadratic(&store, id);
        opt.step(&mut store, &grads);
        // Bias-corrected first step is lr · g/|g| (up to eps).
        let w = store.value(id).data();
        assert!((w[0] - 0.4).abs() < 1e-6);
        assert!((w[1] + 0.15).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_applies_without_gradient_signal() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Group::Encoder, false, Matrix::from_vec(1, 1, alloc::vec![2.0]));
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.5, clip_norm: None, ..AdamWConfig::default() };
        let mut opt = AdamW::new(cfg, &store, &[]);
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let zero = g.scale(w, 0.0);
        let loss = g.sum(zero);
        let grads = g.backward(loss);
        opt.step(&mut store, &grads);
        assert!((store.value(id).item() - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Group::Encoder, false, Matrix::from_vec(1, 2, alloc::vec![30.0, 40.0]));
        let mut opt = AdamW::new(AdamWConfig::default(), &store, &[]);
        let grads = quadratic(&store, id);
        let info = opt.step(&mut store, &grads);
        assert!((info.grad_norm - 50.0).abs() < 1e-12);
        assert!(info.clipped);
    }

    #[test]
    fn frozen_and_excluded_parameters_never_move() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Group::Encoder, true, Matrix::filled(1, 2, 1.0));
        let b = store.insert("b", Group::Decoder, false, Matrix::filled(1, 2, 1.0));
        let c = store.insert("c", Group::StanceHead, false, Matrix::filled(1, 2, 1.0));
        let mut opt = AdamW::new(AdamWConfig::default(), &store, &[b]);
        assert_eq!(opt.trainable(), &[c]);
        let mut g = Graph::new();
        let vars = [a, b, c].map(|id| g.param(&store, id));
        let s = g.add(vars[0], vars[1]);
        let s = g.add(s, vars[2]);
        let sq = g.square(s);
        let loss = g.sum(sq);
        let grads = g.backward(loss);
        opt.step(&mut store, &grads);
        assert_eq!(store.value(a), &Matrix::filled(1, 2, 1.0));
        assert_eq!(store.value(b), &Matrix::filled(1, 2, 1.0));
        assert_ne!(store.value(c), &Matrix::filled(1, 2, 1.0));
    }
}
