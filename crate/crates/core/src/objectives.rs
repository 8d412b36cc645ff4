//! Loss heads and the weighted multi-task objective.
//!
//! Each objective exists twice: as a plain function on values (used by
//! reports and tests) and as a graph builder (used in training). Both add
//! terms in the same order so their results agree bitwise.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{log_sum_exp, sigmoid, softmax_in_place, Graph, Var};
use crate::lexicon::VadTriple;
use crate::tensor::Matrix;

/// Probability floor applied before taking logs in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_sent: f64,
    pub alpha_elbo: f64,
    pub alpha_vad: f64,
    /// KL coefficient inside the ELBO term.
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha_sent: 1.0, alpha_elbo: 0.1, alpha_vad: 1.0, delta: 0.05 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_sent", self.alpha_sent),
            ("alpha_elbo", self.alpha_elbo),
            ("alpha_vad", self.alpha_vad),
            ("delta", self.delta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_sd: f64,
    pub l_sent: f64,
    pub l_vad: f64,
    pub l_recon: f64,
    /// KL per factor in V, A, D, T order.
    pub l_kl: [f64; 4],
}

/// All loss components of one batch, as logged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_sd: f64,
    pub l_sent: f64,
    pub l_vad: f64,
    pub l_recon: f64,
    pub l_kl: [f64; 4],
    pub l_elbo: f64,
    pub l_total: f64,
}

/// `sigmoid(z · w + b)`.
pub fn predict_vad(z: &[f64], weights: &[f64], bias: f64) -> Result<f64> {
    if z.len() != weights.len() {
        return Err(Error::DimensionMismatch { what: "VAD head", expected: weights.len(), actual: z.len() });
    }
    Ok(sigmoid(z.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias))
}

/// `(1/N) Σ_i Σ_{V,A,D} (p − t)²`.
pub fn vad_loss(predictions: &[[f64; 3]], targets: &[VadTriple]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch { gold: targets.len(), pred: predictions.len() });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let n = predictions.len() as f64;
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| p.iter().zip(t.to_array()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / n)
}

/// Softmax over logits.
pub fn classify(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// The gold probability was below [`PROB_FLOOR`] and was clamped.
    pub floored: bool,
}

/// `−log p[gold]` with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<CrossEntropy> {
    let p = *probs.get(gold).ok_or(Error::DimensionMismatch {
        what: "gold class index",
        expected: probs.len(),
        actual: gold,
    })?;
    let floored = p < PROB_FLOOR;
    Ok(CrossEntropy { loss: -libm::log(p.max(PROB_FLOOR)), floored })
}

/// Mean cross-entropy over a batch.
pub fn batch_cross_entropy(probs: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if probs.len() != gold.len() {
        return Err(Error::LengthMismatch { gold: gold.len(), pred: probs.len() });
    }
    let mut total = 0.0;
    for (p, &g) in probs.iter().zip(gold) {
        total += cross_entropy(p, g)?.loss;
    }
    Ok(total / probs.len().max(1) as f64)
}

/// Negative ELBO: `recon + δ · Σ_R KL_R`.
pub fn elbo_loss(recon_nll: f64, kl_per_factor: [f64; 4], delta: f64) -> f64 {
    let kl_sum = kl_per_factor[0] + kl_per_factor[1] + kl_per_factor[2] + kl_per_factor[3];
    recon_nll + delta * kl_sum
}

/// `l_sd + α_sent·l_sent + α_elbo·l_elbo + α_vad·l_vad`, with every part retained.
pub fn total_loss(terms: LossTerms, weights: &LossWeights) -> Result<LossParts> {
    let named = [
        ("l_sd", terms.l_sd),
        ("l_sent", terms.l_sent),
        ("l_vad", terms.l_vad),
        ("l_recon", terms.l_recon),
        ("l_kl_v", terms.l_kl[0]),
        ("l_kl_a", terms.l_kl[1]),
        ("l_kl_d", terms.l_kl[2]),
        ("l_kl_t", terms.l_kl[3]),
    ];
    if let Some((term, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { term });
    }
    let l_elbo = elbo_loss(terms.l_recon, terms.l_kl, weights.delta);
    let l_total =
        terms.l_sd + weights.alpha_sent * terms.l_sent + weights.alpha_elbo * l_elbo + weights.alpha_vad * terms.l_vad;
    if !l_total.is_finite() {
        return Err(Error::NonFinite { term: "l_total" });
    }
    Ok(LossParts {
        l_sd: terms.l_sd,
        l_sent: terms.l_sent,
        l_vad: terms.l_vad,
        l_recon: terms.l_recon,
        l_kl: terms.l_kl,
        l_elbo,
        l_total,
    })
}

/// Mean cross-entropy of `n × K` logits against gold indices, in the graph.
pub fn cross_entropy_graph(g: &mut Graph, logits: Var, gold: &[usize]) -> Var {
    let log_probs = g.log_softmax_rows(logits);
    let picked = g.pick_per_row(log_probs, gold.to_vec());
    let mean = g.mean(picked);
    g.scale(mean, -1.0)
}

/// VAD loss in the graph. `predictions` holds one `n × 1` column per
/// dimension; `targets` is `n × 3`.
pub fn vad_loss_graph(g: &mut Graph, predictions: [Var; 3], targets: &Matrix) -> Var {
    let n = targets.rows() as f64;
    let p = g.concat_cols(&predictions);
    let t = g.constant(targets.clone());
    let diff = g.sub(p, t);
    let sq = g.square(diff);
    let s = g.sum(sq);
    g.scale(s, 1.0 / n)
}

/// ELBO in the graph, summing terms in the order of [`elbo_loss`].
pub fn elbo_graph(g: &mut Graph, recon: Var, kl: [Var; 4], delta: f64) -> Var {
    let a = g.add(kl[0], kl[1]);
    let b = g.add(a, kl[2]);
    let c = g.add(b, kl[3]);
    let weighted = g.scale(c, delta);
    g.add(recon, weighted)
}

/// Graph handles of the loss terms that are switched on.
#[derive(Clone, Copy, Debug)]
pub struct TermVars {
    pub l_sd: Var,
    pub l_sent: Option<Var>,
    pub l_vad: Option<Var>,
    pub l_elbo: Option<Var>,
}

/// The weighted total in the graph. Terms that are `None` are left out
/// entirely, so no gradient reaches the modules behind them.
pub fn total_graph(g: &mut Graph, terms: TermVars, weights: &LossWeights) -> Var {
    let mut total = terms.l_sd;
    for (term, alpha) in
        [(terms.l_sent, weights.alpha_sent), (terms.l_elbo, weights.alpha_elbo), (terms.l_vad, weights.alpha_vad)]
    {
        if let Some(t) = term {
            let w = g.scale(t, alpha);
            total = g.add(total, w);
        }
    }
    total
}

/// Row-wise softmax of a logits matrix, outside the graph.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// `log Σ exp` of a row, exposed for callers computing log-probabilities.
pub fn log_partition(row: &[f64]) -> f64 {
    log_sum_exp(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn predict_vad_examples() {
        assert_eq!(predict_vad(&[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap(), 0.5);
        assert!(predict_vad(&[1.0], &[20.0], 0.0).unwrap() > 0.9999);
        // 1*0.5 + 1*(-0.5) + 0.2 = 0.2
        let p = predict_vad(&[1.0, 1.0], &[0.5, -0.5], 0.2).unwrap();
        assert_abs_diff_eq!(p, 1.0 / (1.0 + libm::exp(-0.2)), epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.5498, epsilon = 1e-4);
    }

    #[test]
    fn vad_loss_examples() {
        let t = VadTriple::new(0.959, 0.510, 0.855).unwrap();
        assert_eq!(vad_loss(&[t.to_array()], &[t]).unwrap(), 0.0);
        let l = vad_loss(&[[0.5; 3]], &[t]).unwrap();
        let expected = 0.459f64.powi(2) + 0.010f64.powi(2) + 0.355f64.powi(2);
        assert_abs_diff_eq!(l, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.3368, epsilon = 1e-4);
        let doubled = vad_loss(&[[0.5; 3], [0.5; 3]], &[t, t]).unwrap();
        assert_abs_diff_eq!(doubled, l, epsilon = 1e-15);
    }

    #[test]
    fn classify_examples() {
        let p = classify(&[3.0, 3.0, 3.0, 3.0]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = classify(&[0.0, -1e9]);
        assert_eq!(p, [1.0, 0.0]);
        let p = classify(&[1.0, 2.0]);
        let e = libm::exp(1.0);
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.2689, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap().loss, 0.0);
        let uniform = [1.0 / 7.0; 7];
        assert_abs_diff_eq!(cross_entropy(&uniform, 3).unwrap().loss, libm::log(7.0), epsilon = 1e-12);
        assert_abs_diff_eq!(cross_entropy(&[0.5, 0.5], 0).unwrap().loss, libm::log(2.0), epsilon = 1e-15);
        let floored = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!(floored.floored);
        assert_abs_diff_eq!(floored.loss, -libm::log(PROB_FLOOR), epsilon = 1e-9);
        assert_abs_diff_eq!(
            batch_cross_entropy(&[alloc::vec![0.5, 0.5], alloc::vec![1.0, 0.0]], &[0, 0]).unwrap(),
            libm::log(2.0) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn elbo_examples() {
        assert_eq!(elbo_loss(2.0, [0.5; 4], 0.0), 2.0);
        assert_eq!(elbo_loss(2.0, [0.5; 4], 1.0), 4.0);
        assert_abs_diff_eq!(elbo_loss(2.0, [0.5; 4], 0.1), 2.2, epsilon = 1e-15);
    }

    #[test]
    fn total_loss_examples() {
        let terms = LossTerms { l_sd: 1.0, l_sent: 2.0, l_vad: 4.0, l_recon: 3.0, l_kl: [0.0; 4] };
        let zero = LossWeights { alpha_sent: 0.0, alpha_elbo: 0.0, alpha_vad: 0.0, delta: 0.3 };
        assert_eq!(total_loss(terms, &zero).unwrap().l_total.to_bits(), 1.0f64.to_bits());
        let ones = LossWeights { alpha_sent: 1.0, alpha_elbo: 1.0, alpha_vad: 1.0, delta: 1.0 };
        assert_eq!(total_loss(terms, &ones).unwrap().l_total, 10.0);
        let bad = LossTerms { l_vad: f64::NAN, ..terms };
        assert_eq!(total_loss(bad, &ones).unwrap_err(), Error::NonFinite { term: "l_vad" });
    }

    #[test]
    fn graph_total_matches_scalar_total_bitwise() {
        let terms = LossTerms { l_sd: 0.7, l_sent: 1.3, l_vad: 0.21, l_recon: 2.9, l_kl: [0.1, 0.02, 0.3, 1.7] };
        let w = LossWeights::default();
        let expected = total_loss(terms, &w).unwrap();
        let mut g = Graph::new();
        let c = |g: &mut Graph, v: f64| g.input(Matrix::scalar(v));
        let l_sd = c(&mut g, terms.l_sd);
        let l_sent = c(&mut g, terms.l_sent);
        let l_vad = c(&mut g, terms.l_vad);
        let recon = c(&mut g, terms.l_recon);
        let kl = terms.l_kl.map(|k| g.input(Matrix::scalar(k)));
        let elbo = elbo_graph(&mut g, recon, kl, w.delta);
        let total =
            total_graph(&mut g, TermVars { l_sd, l_sent: Some(l_sent), l_vad: Some(l_vad), l_elbo: Some(elbo) }, &w);
        assert_eq!(g.scalar(elbo).to_bits(), expected.l_elbo.to_bits());
        assert_eq!(g.scalar(total).to_bits(), expected.l_total.to_bits());
    }

    #[test]
    fn raising_vad_weight_does_not_lower_total() {
        let terms = LossTerms { l_sd: 0.7, l_sent: 1.3, l_vad: 0.21, l_recon: 2.9, l_kl: [0.1; 4] };
        let mut w = LossWeights::default();
        let mut last = total_loss(terms, &w).unwrap().l_total;
        for _ in 0..10 {
            w.alpha_vad += 0.37;
            let next = total_loss(terms, &w).unwrap().l_total;
            assert!(next >= last);
            last = next;
        }
    }
}
