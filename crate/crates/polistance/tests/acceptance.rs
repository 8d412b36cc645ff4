//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Run with `cargo test -p polistance --test acceptance -- --nocapture`.
//! Set `POLISTANCE_DATA_DIR` to a directory holding `pstance/manifest.json`
//! and `semeval2016/manifest.json` to enable the data-fidelity check.
//! Set `POLISTANCE_BLESS=1` to rewrite the report-shape golden file.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use polistance::annotate::prompt::render_zero_shot_document;
use polistance::annotate::{parse_stance, ChatMessage, Fill, PromptTemplate, Role};
use polistance::artifacts::{load_checkpoint, metrics_jsonl, save_checkpoint};
use polistance::dataset::{compare_counts, load_dataset, reference_for, Strictness};
use polistance_core::corpus::{DatasetSchema, Example, Split, StanceRoles};
use polistance_core::evaluation::{
    ablation_table, cross_target_pairs, f_scores, round2, AblationFlags, AblationVariant, EvalReport, Provenance,
    RawPrediction, TrainRequest,
};
use polistance_core::gradcheck::{check_params, GradCheckConfig};
use polistance_core::graph::Graph;
use polistance_core::latent::{gaussian_kl, reparameterize, Factor, FactorParams, FactorWidths, Noise, NoiseRecord};
use polistance_core::lexicon::{default_bindings, SentimentVadMap, VadTriple};
use polistance_core::model::{EncodedExample, ModelConfig, ModelShape, StanceVae, Toggles};
use polistance_core::network::{DecoderConfig, EncoderConfig};
use polistance_core::nn::Mode;
use polistance_core::objectives::LossWeights;
use polistance_core::params::{Group, ParamId};
use polistance_core::synthetic::{toy_corpus, toy_lexicon, toy_model_config, toy_run_config};
use polistance_core::tensor::Matrix;
use polistance_core::training::{apply_ablation, build_vocab, encode_examples, train, RunConfig, VaeDriver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn p_stance_map(schema: &DatasetSchema) -> SentimentVadMap {
    SentimentVadMap::build(&schema.sentiment_labels, &default_bindings(), &toy_lexicon()).unwrap()
}

fn accuracy(gold: &[&Example], pred: &[String]) -> f64 {
    let hits = gold.iter().zip(pred).filter(|(e, p)| e.stance == **p).count();
    hits as f64 / gold.len() as f64
}

fn gradient_check() -> Check {
    let config = ModelConfig {
        encoder: EncoderConfig { hidden: 16, layers: 1, heads: 2, ff_dim: 32, max_len: 12, ..EncoderConfig::default() },
        decoder: DecoderConfig { hidden: 16, layers: 1, heads: 2, ff_dim: 32, ..DecoderConfig::default() },
        factor_widths: FactorWidths { valence: 4, arousal: 4, dominance: 4, content: 8 },
        ..ModelConfig::default()
    };
    let schema = DatasetSchema::p_stance();
    let corpus = toy_corpus(&schema, 1, 2, 11);
    let refs: Vec<&Example> = corpus.iter().collect();
    let run = RunConfig { model: config.clone(), ..RunConfig::p_stance() };
    let vocab = build_vocab(&run, &schema, &refs);
    let batch = encode_examples(&refs, &schema, &vocab, Some(&p_stance_map(&schema)), 12).unwrap();
    let shape = ModelShape { vocab_size: vocab.len(), stance_classes: 2, sentiment_classes: 7 };
    let mut model = StanceVae::new(&config, shape, 5).unwrap();
    let weights = LossWeights::default();
    let toggles = Toggles::default();
    let start = Instant::now();
    let noise = sample_noise(&model, &batch, 9);
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &weights, toggles).unwrap();
    ensure!(
        out.parts.l_sent > 0.0 && out.parts.l_vad > 0.0 && out.parts.l_elbo > 0.0,
        "not every loss term is active: {:?}",
        out.parts
    );
    let grads = g.backward(out.loss);
    let ids: Vec<ParamId> = model.store.iter().filter(|(_, p)| !p.frozen).map(|(id, _)| id).collect();
    let mut store = model.store.clone();
    let report = check_params(&mut store, &ids, &grads, GradCheckConfig::default(), |s| {
        model.store = s.clone();
        let mut g = Graph::new();
        model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &weights, toggles).unwrap().parts.l_total
    });
    let elapsed = start.elapsed();
    ensure!(report.passed(), "{} of {} entries fail, worst {:?}", report.failures.len(), report.checked, report.worst);
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} entries, max rel error {:.2e}, {:.1?}", report.checked, report.max_rel_error, elapsed))
}

fn sample_noise(model: &StanceVae, batch: &[EncodedExample], seed: u64) -> NoiseRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    model
        .forward(&mut g, batch, Mode::Train, Noise::Sample(&mut rng), &LossWeights::default(), Toggles::default())
        .unwrap()
        .latent
        .noise
}

fn factor(mu: Vec<f64>, log_var: Vec<f64>) -> FactorParams {
    let d = mu.len();
    FactorParams { factor: Factor::Content, mu: Matrix::from_vec(1, d, mu), log_var: Matrix::from_vec(1, d, log_var) }
}

fn kl_oracle() -> Check {
    let spots = [
        (vec![0.0], vec![0.0], 0.0),
        (vec![1.0], vec![0.0], 0.5),
        (vec![0.0], vec![4f64.ln()], 0.5 * (4.0 - 1.0 - 4f64.ln())),
    ];
    for (mu, lv, want) in spots {
        let got = gaussian_kl(&factor(mu.clone(), lv)).unwrap();
        ensure!((got - want).abs() < 1e-4, "spot mu={mu:?}: {got} vs {want}");
    }
    ensure!((0.5 * (4.0 - 1.0 - 4f64.ln()) - 0.8069f64).abs() < 1e-4, "spot value");

    const N: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for config in 0..50 {
        let d = rng.random_range(1..=4);
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = lv.iter().map(|v| (0.5 * v).exp()).collect();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..N {
            // log q(z) − log p(z) for z = μ + σε.
            let mut s = 0.0;
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                let z = mu[j] + sigma[j] * e;
                s += -0.5 * e * e - sigma[j].ln() + 0.5 * z * z;
            }
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / N as f64;
        let se = ((sum_sq / N as f64 - mean * mean) * N as f64 / (N - 1) as f64 / N as f64).sqrt();
        let closed = gaussian_kl(&factor(mu, lv)).unwrap();
        let z = (closed - mean).abs() / se.max(1e-300);
        worst = worst.max(z);
        ensure!(z <= 3.0, "configuration {config}: closed {closed}, estimate {mean} ± {se}");
    }
    Ok(format!("3 spot values; 50 configurations, worst deviation {worst:.2} SE"))
}

fn reparameterization_statistics() -> Check {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_var: f64 = 0.0;
    for config in 0..20 {
        let d = rng.random_range(1..=4);
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lv: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tile = |v: &[f64]| Matrix::from_vec(N, d, (0..N).flat_map(|_| v.iter().copied()).collect());
        let params = FactorParams { factor: Factor::Valence, mu: tile(&mu), log_var: tile(&lv) };
        let eps = Matrix::from_vec(N, d, (0..N * d).map(|_| rng.sample(StandardNormal)).collect());
        let z = reparameterize(&params, &eps).unwrap();
        for j in 0..d {
            let col: Vec<f64> = (0..N).map(|r| z.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / N as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (N - 1) as f64;
            let sigma2 = lv[j].exp();
            ensure!(
                (mean - mu[j]).abs() <= 4.0 * sigma2.sqrt() / (N as f64).sqrt(),
                "configuration {config} dim {j}: mean {mean} vs {}",
                mu[j]
            );
            let rel = (var - sigma2).abs() / sigma2;
            worst_var = worst_var.max(rel);
            ensure!(rel <= 0.05, "configuration {config} dim {j}: variance {var} vs {sigma2}");
        }
    }
    Ok(format!("20 configurations, worst relative variance error {:.2}%", 100.0 * worst_var))
}

/// Brute-force per-class F1 from an explicit confusion matrix.
fn oracle_f1(gold: &[usize], pred: &[usize], class: usize) -> f64 {
    let mut m = [[0usize; 3]; 3];
    for (&g, &p) in gold.iter().zip(pred) {
        m[g][p] += 1;
    }
    let tp = m[class][class] as f64;
    let predicted: usize = (0..3).map(|g| m[g][class]).sum();
    let actual: usize = m[class].iter().sum();
    if predicted == 0 || actual == 0 || tp == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / predicted as f64, tp / actual as f64);
    100.0 * 2.0 * p * r / (p + r)
}

fn metric_oracle() -> Check {
    let roles = StanceRoles { favor: 0, against: 1 };
    let hand = f_scores(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 0], 3, roles).unwrap();
    ensure!(
        (round2(hand.favor), round2(hand.against), round2(hand.avg)) == (50.0, 80.0, 65.0),
        "hand example gave {hand:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let got = f_scores(&gold, &pred, 3, roles).unwrap();
        let (f, a) = (oracle_f1(&gold, &pred, 0), oracle_f1(&gold, &pred, 1));
        ensure!(
            round2(got.favor) == round2(f)
                && round2(got.against) == round2(a)
                && (got.avg - (f + a) / 2.0).abs() < 1e-9,
            "case {case}: {got:?} vs oracle ({f}, {a})"
        );
    }
    Ok("hand example F_avg 65.00; 1000 random cases agree".into())
}

fn audit_setup() -> (StanceVae, Vec<EncodedExample>, NoiseRecord) {
    let schema = DatasetSchema::p_stance();
    let corpus = toy_corpus(&schema, 1, 6, 2);
    let refs: Vec<&Example> = corpus.iter().collect();
    let config = RunConfig { model: toy_model_config(), ..RunConfig::p_stance() };
    let vocab = build_vocab(&config, &schema, &refs);
    let batch = encode_examples(&refs, &schema, &vocab, Some(&p_stance_map(&schema)), 24).unwrap();
    let shape = ModelShape { vocab_size: vocab.len(), stance_classes: 2, sentiment_classes: 7 };
    let model = StanceVae::new(&config.model, shape, 3).unwrap();
    let noise = sample_noise(&model, &batch, 1);
    (model, batch, noise)
}

fn loss_composition() -> Check {
    let (model, batch, noise) = audit_setup();
    let zero = LossWeights { alpha_sent: 0.0, alpha_elbo: 0.0, alpha_vad: 0.0, ..LossWeights::default() };
    let mut g = Graph::new();
    let out = model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &zero, Toggles::default()).unwrap();
    ensure!(
        out.parts.l_total.to_bits() == out.parts.l_sd.to_bits(),
        "l_total {} != l_sd {}",
        out.parts.l_total,
        out.parts.l_sd
    );

    let base = LossWeights::default();
    let mut g = Graph::new();
    let full =
        model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &base, Toggles::default()).unwrap().parts;
    let cases = [
        (AblationVariant::NoDecoder, vec![Group::Decoder, Group::PreDecoderNorm]),
        (AblationVariant::NoVad, vec![Group::VadHead]),
        (AblationVariant::NoSentiment, vec![Group::SentimentHead]),
    ];
    for (variant, groups) in cases {
        let flags: AblationFlags = variant.flags();
        let (weights, toggles) = apply_ablation(&base, flags);
        let mut g = Graph::new();
        let out = model.forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &weights, toggles).unwrap();
        let p = out.parts;
        let mut expected = p.l_sd;
        let terms = [
            (flags.no_sentiment, p.l_sent, full.l_sent, base.alpha_sent),
            (flags.no_decoder, p.l_elbo, full.l_elbo, base.alpha_elbo),
            (flags.no_vad, p.l_vad, full.l_vad, base.alpha_vad),
        ];
        for (off, now, before, alpha) in terms {
            if off {
                ensure!(now == 0.0, "{}: removed term is {now}", variant.label());
            } else {
                ensure!(now.to_bits() == before.to_bits(), "{}: kept term changed", variant.label());
                expected += alpha * now;
            }
        }
        ensure!(p.l_total.to_bits() == expected.to_bits(), "{}: total is not the sum of kept terms", variant.label());
        let grads = g.backward(out.loss);
        for (id, param) in model.store.iter() {
            if groups.contains(&param.group) {
                let zero = grads.param(id).is_none_or(|m| m.data().iter().all(|&v| v == 0.0));
                ensure!(zero, "{}: {} has a gradient", variant.label(), param.name);
            }
        }
    }
    Ok("zero weights give l_total == l_sd bitwise; 3 flags audited".into())
}

fn overfit_smoke() -> Check {
    let schema = DatasetSchema::p_stance();
    let mut corpus = toy_corpus(&schema, 1, 32, 12);
    for e in &mut corpus {
        e.split = Split::Train;
    }
    let refs: Vec<&Example> = corpus.iter().collect();
    let request = TrainRequest { name: "overfit".into(), train: refs.clone(), validation: refs.clone(), seed: 5 };
    let mut lines = Vec::new();
    for (flags, floor) in [
        (AblationFlags::default(), 0.95),
        (AblationFlags { no_vad: true, no_sentiment: true, ..Default::default() }, 0.90),
    ] {
        let start = Instant::now();
        let d = VaeDriver::new(
            RunConfig { ablation: flags, ..toy_run_config() },
            schema.clone(),
            Some(p_stance_map(&schema)),
        );
        let out = train(&d.config, d.prepare(&request).unwrap()).map_err(|e| e.to_string())?;
        let acc = accuracy(&refs, &out.last.predict_labels(&refs).unwrap());
        let elapsed = start.elapsed();
        ensure!(out.last.step <= 200, "ran {} steps", out.last.step);
        ensure!(acc >= floor, "{flags:?}: train accuracy {acc:.3} < {floor}");
        ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
        lines.push(format!("{:.1}% in {:.1?}", 100.0 * acc, elapsed));
    }
    Ok(format!("full {}; without VAD and sentiment {}", lines[0], lines[1]))
}

fn disentanglement() -> Check {
    let schema = DatasetSchema::p_stance();
    let high = VadTriple::new(0.85, 0.75, 0.70).unwrap();
    let low = VadTriple::new(0.15, 0.25, 0.30).unwrap();
    let map = SentimentVadMap::from_triples(
        schema.sentiment_labels.iter().map(|l| (l.clone(), if l.contains("positive") { high } else { low })),
    );
    let mut corpus = toy_corpus(&schema, 1, 80, 13);
    for e in &mut corpus {
        let label = if e.stance == "FAVOR" { "very positive" } else { "very negative" };
        e.sentiment = Some(label.into());
    }
    let pick = |s: Split| corpus.iter().filter(|e| e.split == s).collect::<Vec<&Example>>();
    let request = TrainRequest { name: "vad".into(), train: pick(Split::Train), validation: pick(Split::Val), seed: 6 };
    let d = VaeDriver::new(toy_run_config(), schema.clone(), Some(map.clone()));
    let ckpt = train(&d.config, d.prepare(&request).unwrap()).map_err(|e| e.to_string())?.last;
    let held_out = pick(Split::Test);
    let encoded =
        encode_examples(&held_out, &schema, &ckpt.vocab, Some(&map), ckpt.config.model.encoder.max_len).unwrap();
    let preds = ckpt.model.predict(&encoded).unwrap();
    let mut mse = [0.0; 3];
    for (p, e) in preds.iter().zip(&encoded) {
        let t = e.vad.unwrap().to_array();
        for k in 0..3 {
            mse[k] += (p.vad[k] - t[k]).powi(2) / preds.len() as f64;
        }
    }
    ensure!(mse.iter().all(|&m| m < 0.02), "held-out MSE {mse:?}");

    let (model, batch, noise) = audit_setup();
    let mut g = Graph::new();
    let out = model
        .forward(&mut g, &batch, Mode::Train, Noise::Replay(&noise), &LossWeights::default(), Toggles::default())
        .unwrap();
    let heads = out.vad_predictions.unwrap();
    for own in Factor::VAD {
        let total = g.sum(heads[own.index()]);
        let grads = g.backward(total);
        for other in Factor::ALL.into_iter().filter(|f| *f != own) {
            let dz = grads.of(out.latent.factor(other).z);
            ensure!(dz.is_none_or(|m| m.data().iter().all(|&v| v == 0.0)), "{own:?} head reads {other:?}");
        }
    }
    Ok(format!(
        "held-out MSE V {:.4} A {:.4} D {:.4} on {} examples; isolation exact",
        mse[0],
        mse[1],
        mse[2],
        preds.len()
    ))
}

/// `Ok(None)` means the data is absent.
fn data_fidelity() -> Result<Option<String>, String> {
    let Some(root) = std::env::var_os("POLISTANCE_DATA_DIR").map(PathBuf::from) else {
        return Ok(None);
    };
    let mut done = Vec::new();
    for name in ["pstance", "semeval2016"] {
        let manifest = root.join(name).join("manifest.json");
        if !manifest.exists() {
            continue;
        }
        let ds = load_dataset(&manifest, Strictness::Strict).map_err(|e| e.to_string())?;
        let (cells, totals) = reference_for(&ds.schema).ok_or_else(|| format!("{name}: no reference counts"))?;
        let mismatches = compare_counts(&ds.summary(), cells, totals);
        ensure!(mismatches.is_empty(), "{name}: {} mismatched cells, first {:?}", mismatches.len(), mismatches[0]);
        done.push(format!("{name} {} cells", cells.len() + totals.len()));
    }
    Ok((!done.is_empty()).then(|| done.join(", ")))
}

fn fixed_report(protocol: &str, shift: usize) -> EvalReport {
    let schema = DatasetSchema::p_stance();
    let mut preds = Vec::new();
    for (t, target) in schema.targets.iter().enumerate() {
        for i in 0..8 {
            let gold = if i % 2 == 0 { "FAVOR" } else { "AGAINST" };
            let wrong = (i + t + shift).is_multiple_of(5);
            let pred = if wrong == (gold == "FAVOR") { "AGAINST" } else { "FAVOR" };
            preds.push(RawPrediction {
                id: (t * 8 + i) as u64,
                target: target.clone(),
                gold: gold.into(),
                pred: pred.into(),
            });
        }
    }
    let provenance = Provenance { config_fingerprint: "0".repeat(16), seeds: vec![42] };
    EvalReport::from_predictions(protocol, &preds, &schema.stance_labels, &schema.targets, provenance).unwrap()
}

fn protocol_structure() -> Check {
    let schema = DatasetSchema::p_stance();
    let names: Vec<String> = cross_target_pairs(&schema.targets).iter().map(|p| p.name()).collect();
    let expected = ["DT->JB", "DT->BS", "JB->DT", "JB->BS", "BS->DT", "BS->JB", "DT&JB->BS", "DT&BS->JB", "JB&BS->DT"];
    ensure!(names == expected, "pairs {names:?}");

    let reports: Vec<(AblationVariant, EvalReport)> =
        AblationVariant::ALL.iter().enumerate().map(|(k, v)| (*v, fixed_report(v.label(), k))).collect();
    let table = ablation_table(&reports).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = table.iter().map(|r| r.label.as_str()).collect();
    ensure!(labels == ["full", "w/o Decoder", "w/o VAD", "w/o Sentiment"], "rows {labels:?}");
    ensure!(table[0].delta == 0.0, "full model delta {}", table[0].delta);

    let rendered = serde_json::to_string_pretty(&table).unwrap() + "\n";
    let path = golden_dir().join("ablation_report.json");
    if std::env::var_os("POLISTANCE_BLESS").is_some() {
        fs::write(&path, &rendered).unwrap();
    }
    let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure!(rendered == golden, "ablation report differs from {}", path.display());
    Ok("9 cross-target pairs in order; 4 ablation rows; report golden matches".into())
}

fn prompt_fidelity() -> Check {
    let golden = fs::read_to_string(golden_dir().join("zero_shot_prompt.txt")).unwrap();
    let (target, text) = ("Donald Trump", "Make America great again! #MAGA");
    ensure!(render_zero_shot_document(target, text) == golden, "rendered prompt differs from the golden file");
    let messages: Vec<ChatMessage> = PromptTemplate::zero_shot_stance().render(&Fill { target, text, labels: "" });
    ensure!(
        messages.len() == 2 && messages[0].role == Role::System && messages[1].role == Role::User,
        "message roles {messages:?}"
    );
    ensure!(
        golden.contains(&messages[0].content) && golden.contains(&messages[1].content),
        "messages differ from document"
    );
    let table = [
        ("FAVOR", Some("FAVOR")),
        ("favor", Some("FAVOR")),
        (" Against.\n", Some("AGAINST")),
        ("\"none\"", Some("NONE")),
        ("“Favor”!", Some("FAVOR")),
        ("Neutral", None),
        ("FAVOR AGAINST", None),
        ("I think FAVOR", None),
        ("", None),
    ];
    for (reply, want) in table {
        ensure!(parse_stance(reply) == want, "{reply:?} parsed as {:?}", parse_stance(reply));
    }
    Ok(format!("golden prompt matches; {} parse cases", table.len()))
}

fn determinism() -> Check {
    let schema = DatasetSchema::p_stance();
    let corpus = toy_corpus(&schema, 3, 40, 42);
    let pick = |s: Split| corpus.iter().filter(|e| e.split == s).collect::<Vec<&Example>>();
    let request =
        TrainRequest { name: "merged".into(), train: pick(Split::Train), validation: pick(Split::Val), seed: 42 };
    let config = RunConfig { max_steps: Some(60), ..toy_run_config() };
    let run = || {
        let d = VaeDriver::new(config.clone(), schema.clone(), Some(p_stance_map(&schema)));
        train(&d.config, d.prepare(&request).unwrap()).unwrap()
    };
    let (a, b) = (run(), run());
    let (log_a, log_b) = (metrics_jsonl(&a.log).unwrap(), metrics_jsonl(&b.log).unwrap());
    ensure!(log_a == log_b, "metrics logs differ");

    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &a.best).map_err(|e| e.to_string())?;
    let back = load_checkpoint(dir.path()).map_err(|e| e.to_string())?;
    ensure!(back == a.best, "checkpoint changed across save/load");
    let test = pick(Split::Test);
    let report = |ckpt: &polistance_core::training::Checkpoint| {
        let labels = ckpt.predict_labels(&test).unwrap();
        let preds: Vec<RawPrediction> = test
            .iter()
            .zip(labels)
            .map(|(e, pred)| RawPrediction { id: e.id, target: e.target.clone(), gold: e.stance.clone(), pred })
            .collect();
        EvalReport::from_predictions("merged", &preds, &schema.stance_labels, &schema.targets, Provenance::default())
            .unwrap()
    };
    let (before, after) = (report(&a.best), report(&back));
    ensure!(before == after, "evaluation differs after reload");
    Ok(format!("{} log bytes identical; reloaded checkpoint scores F_avg {:.2} both times", log_a.len(), after.f_avg))
}

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn guarded(f: fn() -> Check) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(detail)) => Verdict::Pass(detail),
        Ok(Err(why)) => Verdict::Fail(why),
        Err(panic) => Verdict::Fail(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

fn data_verdict() -> Verdict {
    match catch_unwind(data_fidelity) {
        Ok(Ok(Some(detail))) => Verdict::Pass(detail),
        Ok(Ok(None)) => Verdict::Skip("dataset files absent; set POLISTANCE_DATA_DIR to enable".into()),
        Ok(Err(why)) => Verdict::Fail(why),
        Err(_) => Verdict::Fail("panicked".into()),
    }
}

#[test]
fn acceptance() {
    let checks: [Criterion; 10] = [
        ("gradient correctness", gradient_check),
        ("KL oracle", kl_oracle),
        ("reparameterization statistics", reparameterization_statistics),
        ("metric oracle", metric_oracle),
        ("loss composition", loss_composition),
        ("overfit smoke test", overfit_smoke),
        ("disentanglement supervision", disentanglement),
        ("protocol structure", protocol_structure),
        ("prompt fidelity", prompt_fidelity),
        ("determinism", determinism),
    ];
    let mut verdicts: Vec<(&str, Verdict)> = std::thread::scope(|s| {
        let handles: Vec<_> = checks.iter().map(|(name, f)| (*name, s.spawn(move || guarded(*f)))).collect();
        let data = s.spawn(data_verdict);
        let mut out: Vec<(&str, Verdict)> = handles.into_iter().map(|(n, h)| (n, h.join().unwrap())).collect();
        out.insert(7, ("data fidelity", data.join().unwrap()));
        out
    });
    let mut failed = 0;
    for (i, (name, verdict)) in verdicts.drain(..).enumerate() {
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Skip(d) => ("SKIP", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail}", i + 1);
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
