use polistance_core::corpus::{DatasetSchema, Example};
use polistance_core::evaluation::AblationFlags;
use polistance_core::graph::Graph;
use polistance_core::latent::{Factor, Noise, NoiseRecord};
use polistance_core::lexicon::{default_bindings, SentimentVadMap};
use polistance_core::model::{EncodedExample, ModelShape, StanceVae, Toggles};
use polistance_core::nn::Mode;
use polistance_core::objectives::LossWeights;
use polistance_core::params::Group;
use polistance_core::synthetic::{toy_corpus, toy_lexicon, toy_model_config};
use polistance_core::training::{apply_ablation, build_vocab, encode_examples, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup() -> (StanceVae, Vec<EncodedExample>, NoiseRecord) {
    let schema = DatasetSchema::p_stance();
    let corpus = toy_corpus(&schema, 1, 6, 2);
    let refs: Vec<&Example> = corpus.iter().collect();
    let config = RunConfig { model: toy_model_config(), ..RunConfig::p_stance() };
    let vocab = build_vocab(&config, &schema, &refs);
    let map = SentimentVadMap::build(&schema.sentiment_labels, &default_bindings(), &toy_lexicon()).unwrap();
    let batch = encode_examples(&refs, &schema, &vocab, Some(&map), 24).unwrap();
    let shape = ModelShape { vocab_size: vocab.len(), stance_classes: 2, sentiment_classes: 7 };
    let model = StanceVae::new(&config.model, shape, 3).unwrap();
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = model
        .forward(&mut g, &batch, Mode::Train, Noise::Sample(&mut rng), &LossWeights::default(), Toggles::default())
        .unwrap()
        .latent
        .noise;
    (model, batch, noise)
}

#[test]
fn zero_weights_reduce_total_to_stance_loss_bitwise() {
    let (model, batch, noise) = setup();
    let weights = LossWeights { alpha_sent: 0.0, alpha_elbo: 0.0, alpha_vad: 0.0, ..LossWeights::default() };
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &weights, Toggles::default()).unwrap();
    assert!(out.parts.l_sent > 0.0 && out.parts.l_vad > 0.0 && out.parts.l_elbo > 0.0);
    assert_eq!(out.parts.l_total.to_bits(), out.parts.l_sd.to_bits());
    assert_eq!(g.scalar(out.loss).to_bits(), out.parts.l_sd.to_bits());
}

#[test]
fn each_flag_removes_exactly_its_term_and_gradients() {
    let (model, batch, noise) = setup();
    let base = LossWeights::default();
    let mut g = Graph::new();
    let full =
        model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &base, Toggles::default()).unwrap().parts;
    let cases = [
        (AblationFlags { no_decoder: true, ..Default::default() }, vec![Group::Decoder, Group::PreDecoderNorm]),
        (AblationFlags { no_vad: true, ..Default::default() }, vec![Group::VadHead]),
        (AblationFlags { no_sentiment: true, ..Default::default() }, vec![Group::SentimentHead]),
    ];
    for (flags, groups) in cases {
        let (weights, toggles) = apply_ablation(&base, flags);
        let mut g = Graph::new();
        let out = model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &weights, toggles).unwrap();
        let p = out.parts;
        assert_eq!(p.l_sd.to_bits(), full.l_sd.to_bits());
        let expected = {
            let mut t = p.l_sd;
            if !flags.no_sentiment {
                assert_eq!(p.l_sent.to_bits(), full.l_sent.to_bits());
                t += base.alpha_sent * p.l_sent;
            } else {
                assert_eq!(p.l_sent, 0.0);
            }
            if !flags.no_decoder {
                assert_eq!(p.l_elbo.to_bits(), full.l_elbo.to_bits());
                t += base.alpha_elbo * p.l_elbo;
            } else {
                assert_eq!((p.l_elbo, p.l_recon, p.l_kl), (0.0, 0.0, [0.0; 4]));
            }
            if !flags.no_vad {
                assert_eq!(p.l_vad.to_bits(), full.l_vad.to_bits());
                t += base.alpha_vad * p.l_vad;
            } else {
                assert_eq!(p.l_vad, 0.0);
            }
            t
        };
        assert_eq!(p.l_total.to_bits(), expected.to_bits(), "{flags:?}");
        let grads = g.backward(out.loss);
        for (id, param) in model.store.iter() {
            let grad = grads.param(id);
            if groups.contains(&param.group) {
                assert!(grad.is_none_or(|m| m.data().iter().all(|&v| v == 0.0)), "{} under {flags:?}", param.name);
            }
        }
        assert!(grads.param(model.stance_head.weight).is_some());
    }
}

#[test]
fn vad_predictions_read_only_their_own_factor() {
    let (model, batch, noise) = setup();
    let mut g = Graph::new();
    let out = model
        .forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &LossWeights::default(), Toggles::default())
        .unwrap();
    let preds = out.vad_predictions.unwrap();
    for own in Factor::VAD {
        let total = g.sum(preds[own.index()]);
        let grads = g.backward(total);
        for other in Factor::ALL {
            let dz = grads.of(out.latent.factor(other).z);
            if other == own {
                assert!(dz.is_some_and(|m| m.data().iter().any(|&v| v != 0.0)));
            } else {
                assert!(dz.is_none_or(|m| m.data().iter().all(|&v| v == 0.0)), "{own:?} reads {other:?}");
            }
        }
    }
}
