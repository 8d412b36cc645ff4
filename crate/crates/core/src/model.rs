//! The assembled stance model: target-aware encoder, four-factor latent,
//! VAD heads, reconstruction decoder and the stance/sentiment classifiers.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SpecialTokens, TargetAwareInput};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::latent::{gaussian_kl_graph, Factor, FactorWidths, FinalLatent, LatentLayer, LatentVars, Noise};
use crate::lexicon::VadTriple;
use crate::network::{
    BackboneKind, Decoder, DecoderConfig, DeskEncoder, Encoder, EncoderConfig, PretrainedEncoder, SequenceDecoder,
    TextEncoder,
};
use crate::nn::{BatchNorm, BatchStats, Linear, Mode, RunningStats};
use crate::objectives::{
    cross_entropy_graph, elbo_graph, softmax_rows, total_graph, total_loss, vad_loss_graph, LossParts, LossTerms,
    LossWeights, TermVars,
};
use crate::params::{Group, Init, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub factor_widths: FactorWidths,
    /// Width of the final latent; defaults to the width of `Z`.
    #[serde(default)]
    pub final_dim: Option<usize>,
    /// Initialize the factor estimators at zero.
    #[serde(default)]
    pub zero_estimators: bool,
}

/// Label-set sizes and vocabulary the model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub stance_classes: usize,
    pub sentiment_classes: usize,
}

/// One example ready for the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub id: u64,
    pub target: String,
    pub input: TargetAwareInput,
    pub stance: usize,
    pub sentiment: Option<usize>,
    pub vad: Option<VadTriple>,
}

/// Which optional modules take part in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub decoder: bool,
    pub vad: bool,
    pub sentiment: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { decoder: true, vad: true, sentiment: true }
    }
}

/// Batch statistics to fold into the running statistics after a training step.
#[derive(Clone, Debug, Default)]
pub struct NormUpdates {
    pub pre_decoder: Option<BatchStats>,
    pub final_latent: Option<BatchStats>,
}

pub struct ForwardOutput {
    pub loss: Var,
    pub parts: LossParts,
    pub stance_logits: Var,
    pub sentiment_logits: Option<Var>,
    /// Per-dimension `n × 1` VAD predictions.
    pub vad_predictions: Option<[Var; 3]>,
    pub latent: LatentVars,
    pub final_latent: Var,
    pub norm_updates: NormUpdates,
    /// Number of examples that had a sentiment label / a VAD target.
    pub sentiment_count: usize,
    pub vad_count: usize,
}

/// Model prediction for one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    pub stance: usize,
    pub stance_probs: Vec<f64>,
    pub sentiment_probs: Vec<f64>,
    pub vad: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceVae {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub latent: LatentLayer,
    /// VAD predictors, one per supervised factor.
    pub vad_heads: [Linear; 3],
    pub pre_decoder_norm: BatchNorm,
    pub decoder: Decoder,
    pub final_latent: FinalLatent,
    pub stance_head: Linear,
    pub sentiment_head: Linear,
    pub pre_decoder_stats: RunningStats,
    pub final_stats: RunningStats,
    pub specials: SpecialTokens,
}

/// External embedding tables for the pretrained adapters.
#[derive(Clone, Debug, Default)]
pub struct PretrainedTables {
    pub encoder: Option<Matrix>,
    pub decoder: Option<Matrix>,
}

impl StanceVae {
    pub fn new(config: &ModelConfig, shape: ModelShape, seed: u64) -> Result<Self> {
        Self::with_pretrained(config, shape, seed, PretrainedTables::default())
    }

    pub fn with_pretrained(
        config: &ModelConfig,
        shape: ModelShape,
        seed: u64,
        tables: PretrainedTables,
    ) -> Result<Self> {
        if config.encoder.max_len < 4 {
            return Err(Error::InvalidConfig("encoder max_len must be at least 4".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = match &config.encoder.kind {
            BackboneKind::Desk => {
                Encoder::Desk(DeskEncoder::new(&mut store, &mut rng, &config.encoder, shape.vocab_size)?)
            }
            BackboneKind::Pretrained { model_id } => {
                let table = tables
                    .encoder
                    .ok_or_else(|| Error::InvalidConfig("pretrained encoder needs an embedding table".into()))?;
                if table.rows() != shape.vocab_size {
                    return Err(Error::DimensionMismatch {
                        what: "pretrained encoder vocabulary",
                        expected: shape.vocab_size,
                        actual: table.rows(),
                    });
                }
                Encoder::Pretrained(PretrainedEncoder::new(&mut store, &mut rng, &config.encoder, model_id, table)?)
            }
        };
        let d_h = encoder.hidden_dim();
        let widths = config.factor_widths;
        let est_init = if config.zero_estimators { Init::Zeros } else { Init::Xavier };
        let latent = LatentLayer::new(&mut store, &mut rng, d_h, widths, est_init);
        let vad_heads = Factor::VAD.map(|f| {
            Linear::new(
                &mut store,
                &mut rng,
                &alloc::format!("vad_head.{}", f.short()),
                Group::VadHead,
                widths.get(f),
                1,
                Init::Xavier,
            )
        });
        let z_dim = widths.total();
        let pre_decoder_norm = BatchNorm::new(&mut store, &mut rng, "pre_decoder.norm", Group::PreDecoderNorm, z_dim);
        let decoder = Decoder::new(
            &mut store,
            &mut rng,
            &config.decoder,
            z_dim,
            shape.vocab_size,
            config.encoder.max_len,
            tables.decoder,
        )?;
        let final_dim = config.final_dim.unwrap_or(z_dim);
        let final_latent = FinalLatent::new(&mut store, &mut rng, z_dim, final_dim);
        let stance_head = Linear::new(
            &mut store,
            &mut rng,
            "stance_head",
            Group::StanceHead,
            final_dim,
            shape.stance_classes,
            Init::Xavier,
        );
        let sentiment_head = Linear::new(
            &mut store,
            &mut rng,
            "sentiment_head",
            Group::SentimentHead,
            final_dim,
            shape.sentiment_classes.max(1),
            Init::Xavier,
        );
        Ok(Self {
            config: config.clone(),
            shape,
            store,
            encoder,
            latent,
            vad_heads,
            pre_decoder_norm,
            decoder,
            final_latent,
            stance_head,
            sentiment_head,
            pre_decoder_stats: RunningStats::new(z_dim),
            final_stats: RunningStats::new(final_dim),
            specials: SpecialTokens::default(),
        })
    }

    /// Parameters that belong to modules disabled by `toggles`.
    pub fn disabled_params(&self, toggles: Toggles) -> Vec<ParamId> {
        let mut groups = Vec::new();
        if !toggles.decoder {
            groups.extend([Group::Decoder, Group::PreDecoderNorm]);
        }
        if !toggles.vad {
            groups.push(Group::VadHead);
        }
        if !toggles.sentiment {
            groups.push(Group::SentimentHead);
        }
        self.store.iter().filter(|(_, p)| groups.contains(&p.group)).map(|(id, _)| id).collect()
    }

    /// Stacks the `<cls>` representations of a batch into an `n × D_h` matrix.
    pub fn encode_batch(&self, g: &mut Graph, inputs: &[&TargetAwareInput]) -> Result<Var> {
        let mut rows = Vec::with_capacity(inputs.len());
        for input in inputs {
            rows.push(self.encoder.encode(g, &self.store, input)?.cls);
        }
        Ok(if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows) })
    }

    /// Full forward pass with every switched-on loss term.
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &[EncodedExample],
        mode: Mode,
        noise: Noise<'_>,
        weights: &LossWeights,
        toggles: Toggles,
    ) -> Result<ForwardOutput> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let store = &self.store;
        let inputs: Vec<&TargetAwareInput> = batch.iter().map(|e| &e.input).collect();
        let cls = self.encode_batch(g, &inputs)?;
        let latent = self.latent.forward(g, store, cls, noise)?;

        let stance_gold: Vec<usize> = batch.iter().map(|e| e.stance).collect();
        if let Some(&bad) = stance_gold.iter().find(|&&s| s >= self.shape.stance_classes) {
            return Err(Error::DimensionMismatch {
                what: "stance label index",
                expected: self.shape.stance_classes,
                actual: bad,
            });
        }
        let (z_hat, final_stats) = self.final_latent.forward(g, store, latent.z, mode, &self.final_stats)?;
        let stance_logits = self.stance_head.forward(g, store, z_hat);
        let l_sd = cross_entropy_graph(g, stance_logits, &stance_gold);

        let mut sentiment_logits = None;
        let mut l_sent = None;
        let labeled: Vec<(usize, usize)> =
            batch.iter().enumerate().filter_map(|(i, e)| e.sentiment.map(|s| (i, s))).collect();
        if toggles.sentiment {
            let logits = self.sentiment_head.forward(g, store, z_hat);
            sentiment_logits = Some(logits);
            if !labeled.is_empty() {
                if let Some(&(_, bad)) = labeled.iter().find(|(_, s)| *s >= self.shape.sentiment_classes) {
                    return Err(Error::DimensionMismatch {
                        what: "sentiment label index",
                        expected: self.shape.sentiment_classes,
                        actual: bad,
                    });
                }
                let rows = if labeled.len() == batch.len() {
                    logits
                } else {
                    g.gather_rows(logits, labeled.iter().map(|(i, _)| *i).collect())
                };
                let gold: Vec<usize> = labeled.iter().map(|(_, s)| *s).collect();
                l_sent = Some(cross_entropy_graph(g, rows, &gold));
            }
        }

        let mut vad_predictions = None;
        let mut l_vad = None;
        let supervised: Vec<(usize, VadTriple)> =
            batch.iter().enumerate().filter_map(|(i, e)| e.vad.map(|v| (i, v))).collect();
        if toggles.vad {
            let preds = Factor::VAD.map(|f| {
                let h = self.vad_heads[f.index()].forward(g, store, latent.factor(f).z);
                g.sigmoid(h)
            });
            vad_predictions = Some(preds);
            if !supervised.is_empty() {
                let idx: Vec<usize> = supervised.iter().map(|(i, _)| *i).collect();
                let preds = if idx.len() == batch.len() { preds } else { preds.map(|p| g.gather_rows(p, idx.clone())) };
                let mut targets = Matrix::zeros(supervised.len(), 3);
                for (r, (_, t)) in supervised.iter().enumerate() {
                    targets.row_mut(r).copy_from_slice(&t.to_array());
                }
                l_vad = Some(vad_loss_graph(g, preds, &targets));
            }
        }

        let mut l_elbo = None;
        let mut recon_var = None;
        let mut kl_vars = None;
        let mut pre_decoder_stats = None;
        if toggles.decoder {
            let (z_norm, stats) = self.pre_decoder_norm.forward(g, store, latent.z, mode, &self.pre_decoder_stats)?;
            pre_decoder_stats = stats;
            let mut nlls = Vec::with_capacity(batch.len());
            for (i, ex) in batch.iter().enumerate() {
                let row = g.gather_rows(z_norm, alloc::vec![i]);
                let target = ex.input.target_ids(&self.specials);
                let out = self.decoder.reconstruct(g, store, row, ex.input.without_eos(), Some(target))?;
                nlls.push(out.nll);
            }
            let stacked = if nlls.len() == 1 { nlls[0] } else { g.concat_rows(&nlls) };
            let recon = g.mean(stacked);
            let kl = Factor::ALL.map(|f| {
                let fv = latent.factor(f);
                gaussian_kl_graph(g, fv.mu, fv.log_var)
            });
            l_elbo = Some(elbo_graph(g, recon, kl, weights.delta));
            recon_var = Some(recon);
            kl_vars = Some(kl);
        }

        let terms = TermVars { l_sd, l_sent, l_vad, l_elbo };
        let loss = total_graph(g, terms, weights);
        let value = |g: &Graph, v: Option<Var>| v.map_or(0.0, |v| g.scalar(v));
        let loss_terms = LossTerms {
            l_sd: g.scalar(l_sd),
            l_sent: value(g, l_sent),
            l_vad: value(g, l_vad),
            l_recon: value(g, recon_var),
            l_kl: kl_vars.map_or([0.0; 4], |k| k.map(|v| g.scalar(v))),
        };
        let mut parts = total_loss(loss_terms, weights)?;
        parts.l_total = g.scalar(loss);
        if l_elbo.is_none() {
            parts.l_elbo = 0.0;
        }
        Ok(ForwardOutput {
            loss,
            parts,
            stance_logits,
            sentiment_logits,
            vad_predictions,
            latent,
            final_latent: z_hat,
            norm_updates: NormUpdates { pre_decoder: pre_decoder_stats, final_latent: final_stats },
            sentiment_count: labeled.len(),
            vad_count: supervised.len(),
        })
    }

    /// Folds training batch statistics into the running statistics.
    pub fn apply_norm_updates(&mut self, updates: &NormUpdates) {
        if let Some(s) = &updates.pre_decoder {
            self.pre_decoder_stats.update(s, self.pre_decoder_norm.momentum);
        }
        if let Some(s) = &updates.final_latent {
            self.final_stats.update(s, self.final_latent.norm.momentum);
        }
    }

    /// Evaluation-mode predictions: latents at their means, running
    /// normalization statistics, no decoder.
    pub fn predict(&self, examples: &[EncodedExample]) -> Result<Vec<Prediction>> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(CHUNK) {
            let mut g = Graph::new();
            let inputs: Vec<&TargetAwareInput> = chunk.iter().map(|e| &e.input).collect();
            let cls = self.encode_batch(&mut g, &inputs)?;
            let latent = self.latent.forward(&mut g, &self.store, cls, Noise::Off)?;
            let (z_hat, _) = self.final_latent.forward(&mut g, &self.store, latent.z, Mode::Eval, &self.final_stats)?;
            let stance = self.stance_head.forward(&mut g, &self.store, z_hat);
            let sentiment = self.sentiment_head.forward(&mut g, &self.store, z_hat);
            let vad = Factor::VAD.map(|f| {
                let h = self.vad_heads[f.index()].forward(&mut g, &self.store, latent.factor(f).z);
                g.sigmoid(h)
            });
            let stance_probs = softmax_rows(g.value(stance));
            let sentiment_probs = softmax_rows(g.value(sentiment));
            for (r, ex) in chunk.iter().enumerate() {
                let probs = stance_probs.row(r).to_vec();
                let best = argmax(&probs);
                out.push(Prediction {
                    id: ex.id,
                    stance: best,
                    stance_probs: probs,
                    sentiment_probs: sentiment_probs.row(r).to_vec(),
                    vad: [g.value(vad[0]).get(r, 0), g.value(vad[1]).get(r, 0), g.value(vad[2]).get(r, 0)],
                });
            }
        }
        Ok(out)
    }
}

/// Index of the largest value; the first wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
