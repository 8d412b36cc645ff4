//! Deterministic training: batching, AdamW steps, validation, early stopping,
//! checkpoints and ablation switches.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    build_target_aware_input, decode_label, DatasetSchema, Example, Tokenizer, Vocab, WhitespaceTokenizer,
};
use crate::error::{Error, Result};
use crate::evaluation::{f_scores, AblationFlags, FScores, Protocol, TrainDriver, TrainRequest};
use crate::graph::Graph;
use crate::latent::Noise;
use crate::lexicon::SentimentVadMap;
use crate::model::{EncodedExample, ModelConfig, ModelShape, PretrainedTables, StanceVae, Toggles};
use crate::nn::Mode;
use crate::objectives::{LossParts, LossWeights};
use crate::optim::{AdamW, AdamWConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset schema id, e.g. `P-STANCE`.
    pub schema: String,
    pub protocol: Protocol,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub weights: LossWeights,
    pub ablation: AblationFlags,
    pub model: ModelConfig,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    /// Vocabulary frequency cutoff and size cap.
    pub min_freq: usize,
    pub max_vocab: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::p_stance()
    }
}

impl RunConfig {
    pub fn p_stance() -> Self {
        Self {
            schema: "P-STANCE".into(),
            protocol: Protocol::Merged,
            lr: 8e-6,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            max_steps: None,
            seed: 42,
            weights: LossWeights::default(),
            ablation: AblationFlags::default(),
            model: ModelConfig::default(),
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            min_freq: 1,
            max_vocab: None,
        }
    }

    pub fn semeval_2016() -> Self {
        Self { schema: "SemEval-2016".into(), lr: 1e-5, batch_size: 16, ..Self::p_stance() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!("batch size must be at least 2, got {}", self.batch_size)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be positive".into()));
        }
        self.weights.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex(&Sha256::digest(&json))
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..AdamWConfig::default()
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Effective loss weights and module toggles under the ablation flags.
pub fn apply_ablation(weights: &LossWeights, flags: AblationFlags) -> (LossWeights, Toggles) {
    let mut w = *weights;
    if flags.no_decoder {
        w.alpha_elbo = 0.0;
    }
    if flags.no_vad {
        w.alpha_vad = 0.0;
    }
    if flags.no_sentiment {
        w.alpha_sent = 0.0;
    }
    let toggles = Toggles { decoder: !flags.no_decoder, vad: !flags.no_vad, sentiment: !flags.no_sentiment };
    (w, toggles)
}

/// Vocabulary over training texts plus the schema's target names.
pub fn build_vocab(config: &RunConfig, schema: &DatasetSchema, train: &[&Example]) -> Vocab {
    let tok = WhitespaceTokenizer;
    let mut tokens: Vec<String> = Vec::new();
    for ex in train {
        tokens.extend(tok.tokenize(&ex.text));
        tokens.extend(tok.tokenize(&ex.target));
    }
    // Target names are metadata, so every one of them is kept.
    for target in &schema.targets {
        for t in tok.tokenize(target) {
            tokens.extend(core::iter::repeat_n(t, config.min_freq.max(1)));
        }
    }
    Vocab::build(tokens.iter().map(String::as_str), config.min_freq, config.max_vocab)
}

/// Tokenizes and labels examples. VAD targets come from the example's
/// sentiment through `vad_map`; unlabeled examples get neither.
pub fn encode_examples(
    examples: &[&Example],
    schema: &DatasetSchema,
    vocab: &Vocab,
    vad_map: Option<&SentimentVadMap>,
    max_len: usize,
) -> Result<Vec<EncodedExample>> {
    let tok = WhitespaceTokenizer;
    let specials = vocab.specials();
    examples
        .iter()
        .map(|ex| {
            let text = vocab.encode(&tok.tokenize(&ex.text));
            let target = vocab.encode(&tok.tokenize(&ex.target));
            let input = build_target_aware_input(&text, &target, max_len, &specials)?;
            let stance = schema.encode_stance(&ex.stance)?;
            let sentiment = ex.sentiment.as_deref().map(|s| schema.encode_sentiment(s)).transpose()?;
            let vad = match (ex.sentiment.as_deref(), vad_map) {
                (Some(s), Some(map)) => {
                    let label = schema.normalize_sentiment(s).unwrap_or_else(|| s.to_string());
                    Some(map.vad_of_sentiment(&label)?)
                }
                _ => None,
            };
            Ok(EncodedExample { id: ex.id, target: ex.target.clone(), input, stance, sentiment, vad })
        })
        .collect()
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Step {
        epoch: usize,
        step: usize,
        batch_size: usize,
        #[serde(flatten)]
        loss: LossParts,
        grad_norm: f64,
    },
    Epoch {
        epoch: usize,
        step: usize,
        train_loss: f64,
        val: FScores,
        improved: bool,
    },
    Stop {
        epoch: usize,
        step: usize,
        reason: StopReason,
        best_epoch: usize,
        best_f_avg: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MaxSteps,
    EarlyStopping,
    /// A loss or gradient became non-finite; `term` names the culprit.
    Diverged {
        term: String,
    },
}

/// Example ids of one optimizer step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub epoch: usize,
    pub step: usize,
    pub ids: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub fingerprint: String,
    pub schema: DatasetSchema,
    pub vocab: Vocab,
    pub model: StanceVae,
    pub optimizer: AdamW,
    pub epoch: usize,
    pub step: usize,
    pub best_f_avg: f64,
}

impl Checkpoint {
    /// Stance labels for `examples` in evaluation mode.
    pub fn predict_labels(&self, examples: &[&Example]) -> Result<Vec<String>> {
        let encoded = encode_examples(examples, &self.schema, &self.vocab, None, self.config.model.encoder.max_len)
            .or_else(|_| self.encode_unlabeled(examples))?;
        let preds = self.model.predict(&encoded)?;
        preds
            .iter()
            .map(|p| {
                decode_label(p.stance, &self.schema.stance_labels)
                    .map(String::from)
                    .ok_or_else(|| Error::Data(format!("stance index {} out of range", p.stance)))
            })
            .collect()
    }

    /// Encoding that ignores labels, for inputs whose gold labels are
    /// unknown or outside the schema.
    fn encode_unlabeled(&self, examples: &[&Example]) -> Result<Vec<EncodedExample>> {
        let tok = WhitespaceTokenizer;
        let specials = self.vocab.specials();
        examples
            .iter()
            .map(|ex| {
                let text = self.vocab.encode(&tok.tokenize(&ex.text));
                let target = self.vocab.encode(&tok.tokenize(&ex.target));
                let input = build_target_aware_input(&text, &target, self.config.model.encoder.max_len, &specials)?;
                Ok(EncodedExample {
                    id: ex.id,
                    target: ex.target.clone(),
                    input,
                    stance: 0,
                    sentiment: None,
                    vad: None,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State at the epoch with the best validation `F_avg`.
    pub best: Checkpoint,
    /// Last state whose parameters are all finite.
    pub last: Checkpoint,
    pub log: Vec<MetricRecord>,
    pub manifests: Vec<BatchManifest>,
    pub stop: StopReason,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const NOISE_STREAM: u64 = 1;
const BATCH_STREAM_BASE: u64 = 16;

/// Batches of one epoch as index lists. The order depends only on
/// `(seed, epoch)`; a trailing single example joins the previous batch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, BATCH_STREAM_BASE + epoch as u64));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap_or_default();
        if let Some(prev) = batches.last_mut() {
            prev.extend(last);
        }
    }
    batches
}

/// Validation scores of `model` on encoded examples.
pub fn validate(model: &StanceVae, examples: &[EncodedExample], schema: &DatasetSchema) -> Result<FScores> {
    let preds = model.predict(examples)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.stance).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.stance).collect();
    f_scores(&gold, &pred, schema.stance_labels.len(), schema.stance_roles()?)
}

/// Everything `train` needs besides the config.
pub struct TrainInputs<'a> {
    pub schema: &'a DatasetSchema,
    pub vocab: Vocab,
    pub train: Vec<EncodedExample>,
    pub validation: Vec<EncodedExample>,
    pub model: StanceVae,
}

/// Runs the training loop to completion. Divergence is reported through
/// [`StopReason::Diverged`] with the last finite state kept.
pub fn train(config: &RunConfig, inputs: TrainInputs<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    let TrainInputs { schema, vocab, train, validation, mut model } = inputs;
    if train.len() < 2 {
        return Err(Error::BatchTooSmall { size: train.len() });
    }
    if validation.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let (weights, toggles) = apply_ablation(&config.weights, config.ablation);
    let mut optimizer = AdamW::new(config.optimizer(), &model.store, &model.disabled_params(toggles));
    let mut noise_rng = stream_rng(config.seed, NOISE_STREAM);
    let fingerprint = config.fingerprint();

    let snapshot = |model: &StanceVae, optimizer: &AdamW, epoch, step, best_f_avg| Checkpoint {
        config: config.clone(),
        fingerprint: fingerprint.clone(),
        schema: schema.clone(),
        vocab: vocab.clone(),
        model: model.clone(),
        optimizer: optimizer.clone(),
        epoch,
        step,
        best_f_avg,
    };

    let mut log = Vec::new();
    let mut manifests = Vec::new();
    let mut step = 0usize;
    let mut best_f_avg = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best = snapshot(&model, &optimizer, 0, 0, best_f_avg);
    let mut last = best.clone();
    let mut stale = 0usize;
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        let mut batches_run = 0usize;
        for indices in epoch_batches(train.len(), config.batch_size, config.seed, epoch) {
            if config.max_steps.is_some_and(|m| step >= m) {
                stop = StopReason::MaxSteps;
                break;
            }
            let batch: Vec<EncodedExample> = indices.iter().map(|&i| train[i].clone()).collect();
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch, Mode::Train, Noise::Sample(&mut noise_rng), &weights, toggles);
            let out = match out {
                Ok(out) => out,
                Err(Error::NonFinite { term }) => {
                    stop = StopReason::Diverged { term: term.to_string() };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let grads = g.backward(out.loss);
            let grad_norm = optimizer.grad_norm(&grads);
            if !out.parts.l_total.is_finite() || !grad_norm.is_finite() {
                let term = if out.parts.l_total.is_finite() { "gradient" } else { "l_total" };
                stop = StopReason::Diverged { term: term.into() };
                break 'epochs;
            }
            optimizer.step(&mut model.store, &grads);
            model.apply_norm_updates(&out.norm_updates);
            step += 1;
            manifests.push(BatchManifest { epoch, step, ids: batch.iter().map(|e| e.id).collect() });
            log.push(MetricRecord::Step { epoch, step, batch_size: batch.len(), loss: out.parts, grad_norm });
            loss_sum += out.parts.l_total;
            batches_run += 1;
        }
        if batches_run == 0 {
            break;
        }
        if !model.store.iter().all(|(_, p)| p.value.is_finite()) {
            stop = StopReason::Diverged { term: "parameters".into() };
            break;
        }
        let val = validate(&model, &validation, schema)?;
        let improved = val.avg > best_f_avg;
        if improved {
            best_f_avg = val.avg;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        last = snapshot(&model, &optimizer, epoch, step, best_f_avg);
        if improved {
            best = last.clone();
        }
        log.push(MetricRecord::Epoch { epoch, step, train_loss: loss_sum / batches_run as f64, val, improved });
        if stop == StopReason::MaxSteps {
            break;
        }
        if stale >= config.patience {
            stop = StopReason::EarlyStopping;
            break;
        }
    }
    log.push(MetricRecord::Stop {
        epoch: last.epoch,
        step,
        reason: stop.clone(),
        best_epoch,
        best_f_avg: if best_f_avg.is_finite() { best_f_avg } else { 0.0 },
    });
    Ok(TrainOutcome { best, last, log, manifests, stop })
}

/// Source of the frozen tables for the pretrained adapters, aligned to a
/// vocabulary.
pub trait PretrainedSource {
    fn tables(&self, vocab: &Vocab, config: &ModelConfig) -> Result<PretrainedTables>;
}

/// Builds, trains and returns the best checkpoint for one request.
pub struct VaeDriver {
    pub config: RunConfig,
    pub schema: DatasetSchema,
    pub vad_map: Option<SentimentVadMap>,
    pub pretrained: Option<Box<dyn PretrainedSource>>,
    /// Outcomes of every run, named after the request.
    pub runs: Vec<(String, TrainOutcome)>,
}

impl VaeDriver {
    pub fn new(config: RunConfig, schema: DatasetSchema, vad_map: Option<SentimentVadMap>) -> Self {
        Self { config, schema, vad_map, pretrained: None, runs: Vec::new() }
    }

    /// Prepares vocabulary, encodings and a fresh model for `request`.
    pub fn prepare<'s>(&'s self, request: &TrainRequest<'_>) -> Result<TrainInputs<'s>> {
        let vocab = build_vocab(&self.config, &self.schema, &request.train);
        let max_len = self.config.model.encoder.max_len;
        let vad = if self.config.ablation.no_vad { None } else { self.vad_map.as_ref() };
        if vad.is_none() && !self.config.ablation.no_vad && self.config.weights.alpha_vad > 0.0 {
            return Err(Error::InvalidConfig("VAD supervision needs a sentiment-to-VAD map".into()));
        }
        let train = encode_examples(&request.train, &self.schema, &vocab, vad, max_len)?;
        let validation = encode_examples(&request.validation, &self.schema, &vocab, vad, max_len)?;
        let shape = ModelShape {
            vocab_size: vocab.len(),
            stance_classes: self.schema.stance_labels.len(),
            sentiment_classes: self.schema.sentiment_labels.len(),
        };
        let tables = match &self.pretrained {
            Some(src) => src.tables(&vocab, &self.config.model)?,
            None => PretrainedTables::default(),
        };
        let model = StanceVae::with_pretrained(&self.config.model, shape, request.seed, tables)?;
        Ok(TrainInputs { schema: &self.schema, vocab, train, validation, model })
    }
}

impl TrainDriver for VaeDriver {
    type Model = Checkpoint;

    fn train(&mut self, request: &TrainRequest<'_>) -> Result<Checkpoint> {
        let config = RunConfig { seed: request.seed, ..self.config.clone() };
        let inputs = self.prepare(request)?;
        let outcome = train(&config, inputs)?;
        let best = outcome.best.clone();
        self.runs.push((request.name.clone(), outcome));
        Ok(best)
    }

    fn predict(&mut self, model: &Checkpoint, examples: &[&Example]) -> Result<Vec<String>> {
        model.predict_labels(examples)
    }
}
