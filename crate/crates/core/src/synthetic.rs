//! Small generated corpora for smoke tests and demos.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DatasetSchema, Example, Split};
use crate::latent::FactorWidths;
use crate::lexicon::{Lexicon, VadTriple};
use crate::model::ModelConfig;
use crate::network::{DecoderConfig, EncoderConfig};
use crate::training::RunConfig;

const FAVOR_CUES: [&str; 8] = ["support", "great", "love", "proud", "hope", "win", "strong", "thanks"];
const AGAINST_CUES: [&str; 8] = ["oppose", "terrible", "hate", "shame", "fear", "lose", "weak", "corrupt"];
const FILLER: [&str; 12] =
    ["the", "vote", "today", "rally", "news", "policy", "people", "plan", "debate", "state", "campaign", "week"];

/// Sentiment a toy example of the given stance is annotated with. Favor
/// maps to the positive half of the label list, against to the negative
/// half, so sentiment determines stance.
fn sentiment_for(schema: &DatasetSchema, favor: bool, rng: &mut ChaCha8Rng) -> String {
    let labels = &schema.sentiment_labels;
    let pick: Vec<&String> = labels
        .iter()
        .filter(|l| {
            let l = l.to_lowercase();
            if favor {
                l.contains("positive")
            } else {
                l.contains("negative")
            }
        })
        .collect();
    match pick.choose(rng) {
        Some(l) => (*l).clone(),
        None => labels[0].clone(),
    }
}

/// `per_target` examples for each of the first `targets` schema targets,
/// split 70/15/15 with stance balanced between favor and against. Each
/// text carries two stance cue words among filler.
pub fn toy_corpus(schema: &DatasetSchema, targets: usize, per_target: usize, seed: u64) -> Vec<Example> {
    let roles = schema.stance_roles().ok();
    let (favor, against) = match roles {
        Some(r) => (schema.stance_labels[r.favor].clone(), schema.stance_labels[r.against].clone()),
        None => (schema.stance_labels[0].clone(), schema.stance_labels[1.min(schema.stance_labels.len() - 1)].clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut id = 0u64;
    for target in schema.targets.iter().take(targets) {
        let n_train = per_target * 70 / 100;
        let n_val = per_target * 15 / 100;
        for i in 0..per_target {
            let is_favor = i % 2 == 0;
            let cues: &[&str] = if is_favor { &FAVOR_CUES } else { &AGAINST_CUES };
            let mut words: Vec<String> = Vec::new();
            let len = rng.random_range(6..10);
            for _ in 0..len {
                words.push(FILLER.choose(&mut rng).map(|s| s.to_string()).unwrap_or_default());
            }
            for _ in 0..2 {
                let at = rng.random_range(0..=words.len());
                words.insert(at, cues.choose(&mut rng).map(|s| s.to_string()).unwrap_or_default());
            }
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            let stance = if is_favor { favor.clone() } else { against.clone() };
            let sentiment = Some(sentiment_for(schema, is_favor, &mut rng));
            out.push(Example {
                id,
                text: format!("{} #{}", words.join(" "), id),
                target: target.clone(),
                stance,
                sentiment,
                split,
            });
            id += 1;
        }
    }
    out
}

/// Lexicon with a distinct triple for every sentiment label of the two
/// built-in schemas. The values are synthetic: valence grows with
/// positivity, arousal with intensity.
pub fn toy_lexicon() -> Lexicon {
    let rows: [(&str, [f64; 3]); 9] = [
        ("very negative", [0.05, 0.85, 0.30]),
        ("moderate negative", [0.20, 0.65, 0.35]),
        ("slightly negative", [0.35, 0.45, 0.42]),
        ("negative", [0.15, 0.70, 0.32]),
        ("neutral", [0.50, 0.25, 0.50]),
        ("slightly positive", [0.65, 0.45, 0.58]),
        ("moderate positive", [0.80, 0.60, 0.66]),
        ("positive", [0.85, 0.60, 0.70]),
        ("very positive", [0.95, 0.80, 0.75]),
    ];
    Lexicon::from_entries(
        rows.iter().map(|(t, [v, a, d])| (t.to_string(), VadTriple { valence: *v, arousal: *a, dominance: *d })),
    )
}

/// A one-layer desk-scale model: width 32, factor widths 4/4/4/8.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig { hidden: 32, layers: 1, heads: 2, ff_dim: 64, max_len: 24, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 32, layers: 1, heads: 2, ff_dim: 64, ..DecoderConfig::default() },
        factor_widths: FactorWidths { valence: 4, arousal: 4, dominance: 4, content: 8 },
        ..ModelConfig::default()
    }
}

/// Settings that fit a toy corpus in a couple of hundred steps.
pub fn toy_run_config() -> RunConfig {
    RunConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 60,
        patience: 60,
        max_steps: Some(200),
        model: toy_model_config(),
        ..RunConfig::p_stance()
    }
}
