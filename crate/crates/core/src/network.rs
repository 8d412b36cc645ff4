//! Text encoders and reconstruction decoders.
//!
//! Two implementations sit behind each trait: a small trainable transformer
//! (`Desk*`) and an adapter (`Pretrained*`) that wraps an externally supplied
//! frozen token-embedding table with trainable layers on top. Both satisfy the
//! same shape and likelihood contracts.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TargetAwareInput;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{LayerNorm, Linear, TransformerBlock};
use crate::params::{Group, Init, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Encoder output: `L × D_h` hidden states and the `1 × D_h` row at `<cls>`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub hidden: Var,
    pub cls: Var,
}

/// Decoder output for one reference sequence.
#[derive(Clone, Copy, Debug)]
pub struct ReconstructionOutput {
    /// `n × K` logits, one row per reference position.
    pub logits: Var,
    /// Mean per-token negative log-likelihood, `1 × 1`.
    pub nll: Var,
}

pub trait TextEncoder {
    fn hidden_dim(&self) -> usize;
    fn max_len(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn encode(&self, g: &mut Graph, store: &ParamStore, input: &TargetAwareInput) -> Result<EncoderOutput>;
}

pub trait SequenceDecoder {
    /// Width of the latent vector the decoder is conditioned on.
    fn cond_dim(&self) -> usize;
    fn vocab_size(&self) -> usize;
    /// Scores `reference` under the decoder conditioned on `latent` (`1 × cond_dim`).
    /// `target` is an extra conditioning sequence, used only when the decoder
    /// was configured to see it.
    fn reconstruct(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        latent: Var,
        reference: &[u32],
        target: Option<&[u32]>,
    ) -> Result<ReconstructionOutput>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneKind {
    Desk,
    /// Frozen external token embeddings; `model_id` names where they came from.
    Pretrained {
        model_id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: BackboneKind,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { kind: BackboneKind::Desk, hidden: 64, layers: 2, heads: 4, ff_dim: 128, max_len: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub kind: BackboneKind,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Prepend a second conditioning row built from the target tokens.
    #[serde(default)]
    pub condition_on_target: bool,
    /// Start the output projection at zero so every logit is 0.
    #[serde(default)]
    pub zero_output_init: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            kind: BackboneKind::Desk,
            hidden: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            condition_on_target: false,
            zero_output_init: false,
        }
    }
}

fn check_tokens(ids: &[u32], vocab_size: usize) -> Result<()> {
    match ids.iter().find(|&&t| t as usize >= vocab_size) {
        Some(&token) => Err(Error::TokenOutOfRange { token, vocab_size }),
        None => Ok(()),
    }
}

fn positions(g: &mut Graph, store: &ParamStore, table: ParamId, n: usize) -> Var {
    let pos = g.param(store, table);
    g.gather_rows(pos, (0..n).collect())
}

fn embed(g: &mut Graph, store: &ParamStore, table: ParamId, ids: &[u32]) -> Var {
    let t = g.param(store, table);
    g.gather_rows(t, ids.iter().map(|&i| i as usize).collect())
}

/// Trainable transformer encoder with learned positional embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskEncoder {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
    pub hidden: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl DeskEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        config: &EncoderConfig,
        vocab_size: usize,
    ) -> Result<Self> {
        let d = config.hidden;
        let token_embedding =
            store.register("encoder.token_embedding", Group::Encoder, vocab_size, d, Init::Normal(0.1), rng);
        let position_embedding =
            store.register("encoder.position_embedding", Group::Encoder, config.max_len, d, Init::Normal(0.1), rng);
        let blocks = (0..config.layers)
            .map(|i| {
                TransformerBlock::new(
                    store,
                    rng,
                    &format!("encoder.block{i}"),
                    Group::Encoder,
                    d,
                    config.heads,
                    config.ff_dim,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(store, rng, "encoder.final_norm", Group::Encoder, d);
        Ok(Self {
            token_embedding,
            position_embedding,
            blocks,
            final_norm,
            hidden: d,
            max_len: config.max_len,
            vocab_size,
        })
    }
}

impl TextEncoder for DeskEncoder {
    fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn encode(&self, g: &mut Graph, store: &ParamStore, input: &TargetAwareInput) -> Result<EncoderOutput> {
        let n = input.ids.len();
        if n > self.max_len {
            return Err(Error::SequenceTooLong { len: n, max_len: self.max_len });
        }
        check_tokens(&input.ids, self.vocab_size)?;
        let tok = embed(g, store, self.token_embedding, &input.ids);
        let pos = positions(g, store, self.position_embedding, n);
        let mut h = g.add(tok, pos);
        for block in &self.blocks {
            h = block.forward(g, store, h, false);
        }
        let hidden = self.final_norm.forward(g, store, h);
        let cls = g.gather_rows(hidden, alloc::vec![input.cls_position]);
        Ok(EncoderOutput { hidden, cls })
    }
}

/// Frozen external embeddings projected to the hidden width, followed by
/// trainable transformer blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainedEncoder {
    pub model_id: String,
    pub frozen_embedding: ParamId,
    pub position_embedding: ParamId,
    pub projection: Linear,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
    pub hidden: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl PretrainedEncoder {
    /// `embeddings` is the external `vocab × width` table; it is stored frozen.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        config: &EncoderConfig,
        model_id: &str,
        embeddings: Matrix,
    ) -> Result<Self> {
        let d = config.hidden;
        let (vocab_size, width) = embeddings.shape();
        let frozen_embedding = store.insert("encoder.pretrained_embedding", Group::Encoder, true, embeddings);
        let position_embedding =
            store.register("encoder.position_embedding", Group::Encoder, config.max_len, width, Init::Normal(0.1), rng);
        let projection = Linear::new(store, rng, "encoder.projection", Group::Encoder, width, d, Init::Xavier);
        let blocks = (0..config.layers.max(1))
            .map(|i| {
                TransformerBlock::new(
                    store,
                    rng,
                    &format!("encoder.block{i}"),
                    Group::Encoder,
                    d,
                    config.heads,
                    config.ff_dim,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(store, rng, "encoder.final_norm", Group::Encoder, d);
        Ok(Self {
            model_id: model_id.into(),
            frozen_embedding,
            position_embedding,
            projection,
            blocks,
            final_norm,
            hidden: d,
            max_len: config.max_len,
            vocab_size,
        })
    }
}

impl TextEncoder for PretrainedEncoder {
    fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn encode(&self, g: &mut Graph, store: &ParamStore, input: &TargetAwareInput) -> Result<EncoderOutput> {
        let n = input.ids.len();
        if n > self.max_len {
            return Err(Error::SequenceTooLong { len: n, max_len: self.max_len });
        }
        check_tokens(&input.ids, self.vocab_size)?;
        let tok = embed(g, store, self.frozen_embedding, &input.ids);
        let pos = positions(g, store, self.position_embedding, n);
        let x = g.add(tok, pos);
        let mut h = self.projection.forward(g, store, x);
        for block in &self.blocks {
            h = block.forward(g, store, h, false);
        }
        let hidden = self.final_norm.forward(g, store, h);
        let cls = g.gather_rows(hidden, alloc::vec![input.cls_position]);
        Ok(EncoderOutput { hidden, cls })
    }
}

/// Either encoder implementation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Desk(DeskEncoder),
    Pretrained(PretrainedEncoder),
}

impl TextEncoder for Encoder {
    fn hidden_dim(&self) -> usize {
        match self {
            Encoder::Desk(e) => e.hidden_dim(),
            Encoder::Pretrained(e) => e.hidden_dim(),
        }
    }

    fn max_len(&self) -> usize {
        match self {
            Encoder::Desk(e) => e.max_len(),
            Encoder::Pretrained(e) => e.max_len(),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            Encoder::Desk(e) => e.vocab_size(),
            Encoder::Pretrained(e) => e.vocab_size(),
        }
    }

    fn encode(&self, g: &mut Graph, store: &ParamStore, input: &TargetAwareInput) -> Result<EncoderOutput> {
        match self {
            Encoder::Desk(e) => e.encode(g, store, input),
            Encoder::Pretrained(e) => e.encode(g, store, input),
        }
    }
}

/// How decoder tokens are embedded and scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TokenIo {
    /// Trainable embedding table and output layer.
    Trained { embedding: ParamId, output: Linear },
    /// Frozen external table used for input embedding (through a projection)
    /// and, tied, for output scoring.
    Frozen { model_id: String, embedding: ParamId, input_proj: Linear, output_proj: Linear, output_bias: ParamId },
}

/// Causal transformer decoder conditioned by prefix rows built from the
/// latent vector (and optionally the target tokens).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub cond_projection: Linear,
    pub tokens: TokenIo,
    pub position_embedding: ParamId,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
    pub hidden: usize,
    pub cond_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub condition_on_target: bool,
}

impl Decoder {
    /// Builds a decoder. `pretrained` supplies the frozen table for the
    /// adapter variant; it must be `Some` exactly when the config asks for it.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        config: &DecoderConfig,
        cond_dim: usize,
        vocab_size: usize,
        max_len: usize,
        pretrained: Option<Matrix>,
    ) -> Result<Self> {
        let d = config.hidden;
        let g = Group::Decoder;
        let cond_projection = Linear::new(store, rng, "decoder.cond_projection", g, cond_dim, d, Init::Xavier);
        let out_init = if config.zero_output_init { Init::Zeros } else { Init::Xavier };
        let tokens = match (&config.kind, pretrained) {
            (BackboneKind::Desk, None) => TokenIo::Trained {
                embedding: store.register("decoder.token_embedding", g, vocab_size, d, Init::Normal(0.1), rng),
                output: Linear::new(store, rng, "decoder.output", g, d, vocab_size, out_init),
            },
            (BackboneKind::Pretrained { model_id }, Some(table)) => {
                if table.rows() != vocab_size {
                    return Err(Error::DimensionMismatch {
                        what: "pretrained decoder vocabulary",
                        expected: vocab_size,
                        actual: table.rows(),
                    });
                }
                let width = table.cols();
                TokenIo::Frozen {
                    model_id: model_id.clone(),
                    embedding: store.insert("decoder.pretrained_embedding", g, true, table),
                    input_proj: Linear::new(store, rng, "decoder.input_projection", g, width, d, Init::Xavier),
                    output_proj: Linear::new(store, rng, "decoder.output_projection", g, d, width, out_init),
                    output_bias: store.register("decoder.output_bias", g, 1, vocab_size, Init::Zeros, rng),
                }
            }
            (kind, table) => {
                return Err(Error::InvalidConfig(format!(
                    "decoder kind {kind:?} {} an external embedding table",
                    if table.is_some() { "does not take" } else { "requires" }
                )))
            }
        };
        // prefix rows (latent, optional target) plus the shifted reference
        let max_positions = max_len + 2;
        let position_embedding =
            store.register("decoder.position_embedding", g, max_positions, d, Init::Normal(0.1), rng);
        let blocks = (0..config.layers)
            .map(|i| TransformerBlock::new(store, rng, &format!("decoder.block{i}"), g, d, config.heads, config.ff_dim))
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(store, rng, "decoder.final_norm", g, d);
        Ok(Self {
            cond_projection,
            tokens,
            position_embedding,
            blocks,
            final_norm,
            hidden: d,
            cond_dim,
            vocab_size,
            max_positions,
            condition_on_target: config.condition_on_target,
        })
    }

    fn embed_tokens(&self, g: &mut Graph, store: &ParamStore, ids: &[u32]) -> Var {
        match &self.tokens {
            TokenIo::Trained { embedding, .. } => embed(g, store, *embedding, ids),
            TokenIo::Frozen { embedding, input_proj, .. } => {
                let e = embed(g, store, *embedding, ids);
                input_proj.forward(g, store, e)
            }
        }
    }

    fn logits(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Var {
        match &self.tokens {
            TokenIo::Trained { output, .. } => output.forward(g, store, h),
            TokenIo::Frozen { embedding, output_proj, output_bias, .. } => {
                let p = output_proj.forward(g, store, h);
                let table = g.param(store, *embedding);
                let table_t = g.transpose(table);
                let scores = g.matmul(p, table_t);
                let b = g.param(store, *output_bias);
                g.add_row(scores, b)
            }
        }
    }
}

impl SequenceDecoder for Decoder {
    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn reconstruct(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        latent: Var,
        reference: &[u32],
        target: Option<&[u32]>,
    ) -> Result<ReconstructionOutput> {
        let (rows, width) = g.value(latent).shape();
        if width != self.cond_dim {
            return Err(Error::DimensionMismatch {
                what: "decoder conditioning",
                expected: self.cond_dim,
                actual: width,
            });
        }
        if rows != 1 {
            return Err(Error::DimensionMismatch { what: "decoder conditioning rows", expected: 1, actual: rows });
        }
        if reference.is_empty() {
            return Err(Error::Data("empty reconstruction reference".into()));
        }
        check_tokens(reference, self.vocab_size)?;
        let mut prefix = alloc::vec![self.cond_projection.forward(g, store, latent)];
        if self.condition_on_target {
            if let Some(target) = target.filter(|t| !t.is_empty()) {
                check_tokens(target, self.vocab_size)?;
                let e = self.embed_tokens(g, store, target);
                let avg = g.constant(Matrix::filled(1, target.len(), 1.0 / target.len() as f64));
                prefix.push(g.matmul(avg, e));
            }
        }
        let n = reference.len();
        let total = prefix.len() + n - 1;
        if total > self.max_positions {
            return Err(Error::SequenceTooLong { len: total, max_len: self.max_positions });
        }
        let mut rows = prefix.clone();
        if n > 1 {
            rows.push(self.embed_tokens(g, store, &reference[..n - 1]));
        }
        let x = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows) };
        let pos = positions(g, store, self.position_embedding, total);
        let mut h = g.add(x, pos);
        for block in &self.blocks {
            h = block.forward(g, store, h, true);
        }
        let h = self.final_norm.forward(g, store, h);
        let first = prefix.len() - 1;
        let h = if first == 0 { h } else { g.gather_rows(h, (first..first + n).collect()) };
        let logits = self.logits(g, store, h);
        let log_probs = g.log_softmax_rows(logits);
        let picked = g.pick_per_row(log_probs, reference.iter().map(|&t| t as usize).collect());
        let mean = g.mean(picked);
        let nll = g.scale(mean, -1.0);
        Ok(ReconstructionOutput { logits, nll })
    }
}
