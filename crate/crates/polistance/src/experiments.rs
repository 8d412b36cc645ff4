//! Experiment configuration and the runners behind each subcommand. Every
//! runner writes into a [`RunDir`] and refuses to clobber a different run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use polistance_core::corpus::{check_split_disjointness, DatasetSchema, Example, Split};
use polistance_core::evaluation::{
    abbreviate, ablation_table, cross_target_pairs, evaluate_in_target, run_cross_target, run_in_target,
    summarize_seeds, AblationRow, AblationVariant, CrossTargetPair, DestinationScope, EvalReport, Evaluation,
    InTargetModels, Protocol, Provenance, RawPrediction, SeedSweep, SWEEP_SEEDS,
};
use polistance_core::lexicon::SentimentVadMap;
use polistance_core::synthetic::{toy_corpus, toy_lexicon, toy_run_config};
use polistance_core::training::{Checkpoint, RunConfig, TrainOutcome, VaeDriver};
use serde::{Deserialize, Serialize};

use crate::annotate::{self, AnnotationSummary, Cache, ChatClient, ClientSettings, PromptTemplate, RunOptions};
use crate::artifacts::{
    check_out_dir, load_checkpoint, sha256_hex, OutDirState, RunDir, RunIdentity, RunManifest, CHECKPOINT_DIR,
    METRICS_FILE, PREDICTIONS_FILE, REPORT_FILE,
};
use crate::dataset::{
    compare_counts, load_dataset, reference_for, summary_tsv, tsv_string, CountMismatch, Dataset, Strictness,
};
use crate::error::{Error, Result};
use crate::plot::{count_sentiments, counts_csv, grouped_bars_svg};
use crate::resources::{vad_map, Embeddings};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub client: ClientSettings,
    /// Sentiment instruction template; the bundled one when absent.
    pub template: Option<PathBuf>,
    /// Cache file; `<out>/cache.jsonl` when absent.
    pub cache: Option<PathBuf>,
    pub retry_failed: bool,
}

/// The JSON file passed with `--config`. Paths are relative to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub lenient: bool,
    #[serde(default)]
    pub run: RunConfig,
    /// `term V A D` lexicon; required unless VAD supervision is off.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub bindings: Option<PathBuf>,
    /// Word vectors for pretrained backbones.
    #[serde(default)]
    pub pretrained_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub cross_target_scope: DestinationScope,
    #[serde(default)]
    pub annotation: AnnotationConfig,
}

/// A loaded configuration with its data and resolved resources.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub dataset: Dataset,
    pub vad_map: Option<SentimentVadMap>,
    pub embeddings: Option<Embeddings>,
    /// Every file the results depend on.
    pub inputs: Vec<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Experiment {
    pub fn load(config_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::data(config_path, format!("invalid config: {e}")))?;
        let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.dataset = resolve(&base, &config.dataset);
        for p in [&mut config.lexicon, &mut config.bindings, &mut config.pretrained_embeddings]
            .into_iter()
            .chain([&mut config.annotation.template, &mut config.annotation.cache])
            .flatten()
        {
            *p = resolve(&base, p);
        }
        config.run.validate()?;
        let strictness = if config.lenient { Strictness::Lenient } else { Strictness::Strict };
        let dataset = load_dataset(&config.dataset, strictness)?;
        if !dataset.schema.name.to_string().eq_ignore_ascii_case(&config.run.schema) {
            log::warn!("run schema {} differs from dataset schema {}", config.run.schema, dataset.schema.name);
        }
        let mut inputs = vec![config_path.to_path_buf(), config.dataset.clone()];
        inputs.extend(dataset.files.iter().cloned());
        let vad_map = match &config.lexicon {
            Some(lex) => {
                inputs.push(lex.clone());
                inputs.extend(config.bindings.iter().cloned());
                Some(vad_map(&dataset.schema, lex, config.bindings.as_deref())?)
            }
            None => None,
        };
        let embeddings = match &config.pretrained_embeddings {
            Some(p) => {
                inputs.push(p.clone());
                Some(Embeddings::read(p)?)
            }
            None => None,
        };
        Ok(Self { config, config_path: config_path.to_path_buf(), dataset, vad_map, embeddings, inputs })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.dataset.schema
    }

    pub fn driver(&self, run: RunConfig) -> VaeDriver {
        let mut driver = VaeDriver::new(run, self.dataset.schema.clone(), self.vad_map.clone());
        if let Some(e) = &self.embeddings {
            driver.pretrained = Some(Box::new(e.clone()));
        }
        driver
    }
}

/// Where a command writes and whether it may overwrite.
#[derive(Clone, Debug)]
pub struct Target {
    pub out: PathBuf,
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done(RunManifest),
    /// The same run already finished in the output directory.
    Identical(RunManifest),
}

/// Opens the run directory unless an identical run is already there.
fn begin(
    target: &Target,
    command: &str,
    settings: &impl Serialize,
    inputs: &[PathBuf],
) -> Result<Result<RunDir, RunManifest>> {
    let settings = serde_json::to_string(settings).map_err(|e| Error::Usage(e.to_string()))?;
    let identity = RunIdentity::new(command, sha256_hex(settings.as_bytes()), inputs)?;
    match check_out_dir(&target.out, &identity, target.force)? {
        OutDirState::Identical(m) => Ok(Err(m)),
        OutDirState::Fresh => Ok(Ok(RunDir::create(&target.out, identity)?)),
    }
}

/// Lowercase alphanumerics joined by `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn write_runs(dir: &mut RunDir, prefix: &str, runs: &[(String, TrainOutcome)]) -> Result<()> {
    for (name, outcome) in runs {
        let base = format!("{prefix}runs/{}", slug(name));
        dir.write_metrics(&format!("{base}/{METRICS_FILE}"), &outcome.log)?;
        dir.write_json(&format!("{base}/batches.json"), &outcome.manifests)?;
        dir.write_json(&format!("{base}/stop.json"), &outcome.stop)?;
        dir.write_checkpoint(&format!("{base}/{CHECKPOINT_DIR}"), &outcome.best)?;
    }
    Ok(())
}

fn write_evaluation(dir: &mut RunDir, prefix: &str, eval: &Evaluation) -> Result<()> {
    dir.write_report(&format!("{prefix}{REPORT_FILE}"), &eval.report)?;
    dir.write_predictions(&format!("{prefix}{PREDICTIONS_FILE}"), &eval.predictions)
}

fn with_fingerprint(mut eval: Evaluation, run: &RunConfig) -> Evaluation {
    eval.report.provenance.config_fingerprint = run.fingerprint();
    eval
}

#[derive(Serialize)]
struct Settings<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    args: T,
}

/// Run configuration with an optional `--seed` and `--protocol` override.
pub fn effective_run(exp: &Experiment, seed: Option<u64>, protocol: Option<Protocol>) -> RunConfig {
    let mut run = exp.config.run.clone();
    if let Some(s) = seed {
        run.seed = s;
    }
    if let Some(p) = protocol {
        run.protocol = p;
    }
    run
}

pub fn train(exp: &Experiment, target: &Target, seed: Option<u64>, protocol: Option<Protocol>) -> Result<Outcome> {
    let run = effective_run(exp, seed, protocol);
    let mut dir = match begin(target, "train", &Settings { config: &exp.config, args: &run }, &exp.inputs)? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    let mut driver = exp.driver(run.clone());
    let eval = run_in_target(
        run.protocol,
        &exp.dataset.examples,
        &exp.schema().targets,
        &exp.schema().stance_labels,
        &mut driver,
        run.seed,
    )?;
    write_runs(&mut dir, "", &driver.runs)?;
    write_evaluation(&mut dir, "", &with_fingerprint(eval, &run))?;
    Ok(Outcome::Done(dir.finish()?))
}

/// Loads the checkpoints written by `train` under `train_dir`.
pub fn load_trained(
    train_dir: &Path,
    protocol: Protocol,
    targets: &[String],
) -> Result<(InTargetModels<Checkpoint>, Vec<PathBuf>)> {
    let ckpt = |name: &str| train_dir.join("runs").join(slug(name)).join(CHECKPOINT_DIR);
    let mut inputs = Vec::new();
    let models = match protocol {
        Protocol::Merged => {
            let dir = ckpt("merged");
            inputs.push(dir.join(crate::artifacts::PARAMS_FILE));
            InTargetModels::Merged(load_checkpoint(&dir)?)
        }
        Protocol::AdHoc => {
            let mut map = BTreeMap::new();
            for t in targets {
                let dir = ckpt(t);
                if dir.exists() {
                    inputs.push(dir.join(crate::artifacts::PARAMS_FILE));
                    map.insert(t.clone(), load_checkpoint(&dir)?);
                }
            }
            InTargetModels::AdHoc(map)
        }
    };
    Ok((models, inputs))
}

pub fn evaluate(exp: &Experiment, target: &Target, train_dir: &Path, protocol: Option<Protocol>) -> Result<Outcome> {
    let protocol = protocol.unwrap_or(exp.config.run.protocol);
    let targets = &exp.schema().targets;
    let (models, ckpt_inputs) = load_trained(train_dir, protocol, targets)?;
    let mut inputs = exp.inputs.clone();
    inputs.extend(ckpt_inputs);
    let args = (protocol, train_dir);
    let mut dir = match begin(target, "evaluate", &Settings { config: &exp.config, args }, &inputs)? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    let (fingerprint, seeds) = match &models {
        InTargetModels::Merged(c) => (c.fingerprint.clone(), vec![c.config.seed]),
        InTargetModels::AdHoc(m) => (
            m.values().next().map(|c| c.fingerprint.clone()).unwrap_or_default(),
            m.values().map(|c| c.config.seed).collect(),
        ),
    };
    let mut driver = exp.driver(exp.config.run.clone());
    let eval = evaluate_in_target(
        &models,
        &exp.dataset.examples,
        targets,
        &exp.schema().stance_labels,
        &mut driver,
        Provenance { config_fingerprint: fingerprint, seeds },
    )?;
    write_evaluation(&mut dir, "", &eval)?;
    Ok(Outcome::Done(dir.finish()?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossTargetResult {
    pub pair: String,
    pub sources: Vec<String>,
    pub destination: String,
    pub report: EvalReport,
}

/// Matches a full target name or its initials, case-insensitively.
pub fn find_target(schema: &DatasetSchema, name: &str) -> Result<String> {
    let name = name.trim();
    schema
        .targets
        .iter()
        .find(|t| t.eq_ignore_ascii_case(name) || abbreviate(t).eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| Error::Usage(format!("unknown target {name:?}; known: {}", schema.targets.join(", "))))
}

pub fn cross_target(
    exp: &Experiment,
    target: &Target,
    seed: Option<u64>,
    sources: Option<&[String]>,
    destination: Option<&str>,
) -> Result<Outcome> {
    let schema = exp.schema();
    let pairs = match (sources, destination) {
        (Some(src), Some(dst)) => {
            let src = src.iter().map(|s| find_target(schema, s)).collect::<Result<Vec<_>>>()?;
            vec![CrossTargetPair::new(src, find_target(schema, dst)?)?]
        }
        (None, None) => cross_target_pairs(&schema.targets),
        _ => return Err(Error::Usage("--source-targets and --dest-target go together".into())),
    };
    let run = effective_run(exp, seed, None);
    let scope = exp.config.cross_target_scope;
    let args = (&run, pairs.iter().map(CrossTargetPair::name).collect::<Vec<_>>());
    let mut dir = match begin(target, "cross-target", &Settings { config: &exp.config, args }, &exp.inputs)? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    let mut results = Vec::new();
    for pair in &pairs {
        let mut driver = exp.driver(run.clone());
        let eval = with_fingerprint(
            run_cross_target(pair, &exp.dataset.examples, &schema.stance_labels, &mut driver, run.seed, scope)?,
            &run,
        );
        let prefix = format!("pairs/{}/", slug(&pair.name()));
        write_runs(&mut dir, &prefix, &driver.runs)?;
        write_evaluation(&mut dir, &prefix, &eval)?;
        results.push(CrossTargetResult {
            pair: pair.name(),
            sources: pair.sources.clone(),
            destination: pair.destination.clone(),
            report: eval.report,
        });
    }
    dir.write_json("cross_target.json", &results)?;
    Ok(Outcome::Done(dir.finish()?))
}

pub fn ablate(exp: &Experiment, target: &Target, seed: Option<u64>) -> Result<(Outcome, Option<Vec<AblationRow>>)> {
    let base = effective_run(exp, seed, Some(Protocol::Merged));
    let mut dir = match begin(target, "ablate", &Settings { config: &exp.config, args: &base }, &exp.inputs)? {
        Ok(d) => d,
        Err(m) => return Ok((Outcome::Identical(m), None)),
    };
    let mut reports = Vec::new();
    for variant in AblationVariant::ALL {
        let run = RunConfig { ablation: variant.flags(), ..base.clone() };
        let mut driver = exp.driver(run.clone());
        let eval = with_fingerprint(
            run_in_target(
                Protocol::Merged,
                &exp.dataset.examples,
                &exp.schema().targets,
                &exp.schema().stance_labels,
                &mut driver,
                run.seed,
            )?,
            &run,
        );
        let prefix = format!("variants/{}/", slug(variant.label()));
        write_runs(&mut dir, &prefix, &driver.runs)?;
        write_evaluation(&mut dir, &prefix, &eval)?;
        reports.push((variant, eval.report));
    }
    let table = ablation_table(&reports)?;
    dir.write_json("ablation.json", &table)?;
    Ok((Outcome::Done(dir.finish()?), Some(table)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub per_seed: Vec<(u64, f64)>,
    pub summary: SeedSweep,
}

pub fn sweep_seeds(exp: &Experiment, target: &Target, k: usize, protocol: Option<Protocol>) -> Result<Outcome> {
    if k == 0 || k > SWEEP_SEEDS.len() {
        return Err(Error::Usage(format!("k must be between 1 and {}", SWEEP_SEEDS.len())));
    }
    let base = effective_run(exp, None, protocol);
    let seeds = &SWEEP_SEEDS[..k];
    let mut dir =
        match begin(target, "sweep-seeds", &Settings { config: &exp.config, args: (&base, seeds) }, &exp.inputs)? {
            Ok(d) => d,
            Err(m) => return Ok(Outcome::Identical(m)),
        };
    let mut runs = Vec::new();
    for &seed in seeds {
        let run = RunConfig { seed, ..base.clone() };
        let mut driver = exp.driver(run.clone());
        let eval = with_fingerprint(
            run_in_target(
                run.protocol,
                &exp.dataset.examples,
                &exp.schema().targets,
                &exp.schema().stance_labels,
                &mut driver,
                seed,
            )?,
            &run,
        );
        let prefix = format!("seeds/{seed}/");
        write_runs(&mut dir, &prefix, &driver.runs)?;
        write_evaluation(&mut dir, &prefix, &eval)?;
        runs.push((seed, eval.report));
    }
    let report =
        SweepReport { per_seed: runs.iter().map(|(s, r)| (*s, r.f_avg)).collect(), summary: summarize_seeds(&runs) };
    dir.write_json("sweep.json", &report)?;
    Ok(Outcome::Done(dir.finish()?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub report: EvalReport,
    pub annotation: AnnotationSummary,
    /// Test examples whose reply did not parse or whose request failed;
    /// they are scored as `NONE`.
    pub unanswered: usize,
}

fn cache_path(exp: &Experiment, target: &Target, default_name: &str) -> PathBuf {
    exp.config.annotation.cache.clone().unwrap_or_else(|| target.out.join(default_name))
}

pub fn zero_shot_baseline(
    exp: &Experiment,
    target: &Target,
    client: &dyn ChatClient,
) -> Result<(Outcome, Option<ZeroShotReport>)> {
    let settings = &exp.config.annotation.client;
    let mut dir =
        match begin(target, "zero-shot-baseline", &Settings { config: &exp.config, args: settings }, &exp.inputs)? {
            Ok(d) => d,
            Err(m) => return Ok((Outcome::Identical(m), None)),
        };
    let test: Vec<&Example> = exp.dataset.examples.iter().filter(|e| e.split == Split::Test).collect();
    let mut cache = Cache::open(&cache_path(exp, target, "zero_shot_cache.jsonl"))?;
    let options = RunOptions { retry_failed: exp.config.annotation.retry_failed };
    let (labels, annotation) = annotate::zero_shot_stance(client, settings, &test, &mut cache, options)?;
    let schema = exp.schema();
    let mut stance_labels = schema.stance_labels.clone();
    if !stance_labels.iter().any(|l| l.eq_ignore_ascii_case("NONE")) {
        stance_labels.push("NONE".into());
    }
    let canonical =
        |l: &str| stance_labels.iter().find(|s| s.eq_ignore_ascii_case(l)).cloned().unwrap_or_else(|| l.into());
    let unanswered = labels.iter().filter(|l| l.is_none()).count();
    let predictions: Vec<RawPrediction> = test
        .iter()
        .zip(&labels)
        .map(|(e, l)| RawPrediction {
            id: e.id,
            target: e.target.clone(),
            gold: e.stance.clone(),
            pred: canonical(l.as_deref().unwrap_or("NONE")),
        })
        .collect();
    let provenance = Provenance { config_fingerprint: sha256_hex(settings.model.as_bytes()), seeds: Vec::new() };
    let report = EvalReport::from_predictions("zero-shot", &predictions, &stance_labels, &schema.targets, provenance)?;
    dir.write_predictions(PREDICTIONS_FILE, &predictions)?;
    let result = ZeroShotReport { report, annotation, unanswered };
    dir.write_json(REPORT_FILE, &result)?;
    Ok((Outcome::Done(dir.finish()?), Some(result)))
}

/// Annotates unlabeled examples and writes the corpus back out as one TSV
/// per split with a manifest, ready for training.
pub fn annotate_corpus(
    exp: &Experiment,
    target: &Target,
    client: &dyn ChatClient,
) -> Result<(Outcome, Option<AnnotationSummary>)> {
    let cfg = &exp.config.annotation;
    let template = match &cfg.template {
        Some(p) => PromptTemplate::read(p)?,
        None => PromptTemplate::sentiment_default(),
    };
    if !template.canonical {
        log::warn!("sentiment template {} is not canonical", template.id);
    }
    let mut inputs = exp.inputs.clone();
    inputs.extend(cfg.template.iter().cloned());
    let mut dir =
        match begin(target, "annotate", &Settings { config: &exp.config, args: (&cfg.client, &template) }, &inputs)? {
            Ok(d) => d,
            Err(m) => return Ok((Outcome::Identical(m), None)),
        };
    let mut examples = exp.dataset.examples.clone();
    let mut cache = Cache::open(&cache_path(exp, target, "cache.jsonl"))?;
    let summary = annotate::annotate_sentiment(
        client,
        &cfg.client,
        &template,
        exp.schema(),
        &mut examples,
        &mut cache,
        RunOptions { retry_failed: cfg.retry_failed },
    )?;
    write_corpus(&mut dir, exp.schema(), &examples)?;
    dir.write_json("annotation_summary.json", &summary)?;
    Ok((Outcome::Done(dir.finish()?), Some(summary)))
}

fn write_corpus(dir: &mut RunDir, schema: &DatasetSchema, examples: &[Example]) -> Result<()> {
    let mut files = Vec::new();
    for split in Split::ALL {
        let rows: Vec<&Example> = examples.iter().filter(|e| e.split == split).collect();
        if rows.is_empty() {
            continue;
        }
        let name = format!("{split}.tsv");
        dir.write_bytes(&name, tsv_string(&rows).as_bytes())?;
        files.push(serde_json::json!({ "path": name, "split": split }));
    }
    let manifest = serde_json::json!({ "schema": schema, "files": files });
    dir.write_json("dataset.json", &manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub schema: String,
    pub examples: usize,
    pub skipped_rows: usize,
    /// Differences from the published counts; `None` for custom schemas.
    pub reference_mismatches: Option<Vec<CountMismatch>>,
}

pub fn prepare(exp: &Experiment, target: &Target) -> Result<Outcome> {
    let mut dir = match begin(target, "prepare", &Settings { config: &exp.config, args: () }, &exp.inputs)? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    check_split_disjointness(&exp.dataset.examples)?;
    let summary = exp.dataset.summary();
    let reference_mismatches =
        reference_for(exp.schema()).map(|(cells, totals)| compare_counts(&summary, cells, totals));
    if let Some(m) = &reference_mismatches {
        if !m.is_empty() {
            log::warn!("{} counts differ from the published statistics", m.len());
        }
    }
    dir.write_bytes("summary.tsv", summary_tsv(&summary).as_bytes())?;
    dir.write_json("skipped_rows.json", &exp.dataset.skipped)?;
    dir.write_json(
        "prepare.json",
        &PrepareReport {
            schema: exp.schema().name.to_string(),
            examples: exp.dataset.examples.len(),
            skipped_rows: exp.dataset.skipped.len(),
            reference_mismatches,
        },
    )?;
    Ok(Outcome::Done(dir.finish()?))
}

/// Writes a small synthetic P-STANCE-shaped corpus, a lexicon and a
/// ready-to-run `config.json` into `out`.
pub fn write_toy_project(target: &Target, seed: u64) -> Result<Outcome> {
    let mut dir = match begin(target, "prepare-toy", &seed, &[])? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    let schema = DatasetSchema::p_stance();
    let examples = toy_corpus(&schema, 3, 40, seed);
    let mut files = Vec::new();
    for split in Split::ALL {
        let rows: Vec<&Example> = examples.iter().filter(|e| e.split == split).collect();
        let rel = format!("data/{split}.tsv");
        dir.write_bytes(&rel, tsv_string(&rows).as_bytes())?;
        files.push(serde_json::json!({ "path": format!("{split}.tsv"), "split": split }));
    }
    dir.write_json("data/manifest.json", &serde_json::json!({ "schema": "P-STANCE", "files": files }))?;
    let mut lexicon = String::from("Word\tValence\tArousal\tDominance\n");
    for label in &schema.sentiment_labels {
        let t = toy_lexicon().lookup(label)?;
        lexicon.push_str(&format!("{label}\t{}\t{}\t{}\n", t.valence, t.arousal, t.dominance));
    }
    dir.write_bytes("lexicon.txt", lexicon.as_bytes())?;
    let config = ExperimentConfig {
        dataset: "data/manifest.json".into(),
        lenient: false,
        run: RunConfig { seed, ..toy_run_config() },
        lexicon: Some("lexicon.txt".into()),
        bindings: None,
        pretrained_embeddings: None,
        cross_target_scope: DestinationScope::default(),
        annotation: AnnotationConfig::default(),
    };
    dir.write_json("config.json", &config)?;
    Ok(Outcome::Done(dir.finish()?))
}

pub fn plot_sentiment(exp: &Experiment, target: &Target) -> Result<Outcome> {
    let counts = count_sentiments(&exp.dataset.examples, exp.schema())?;
    let mut dir = match begin(target, "plot-sentiment", &Settings { config: &exp.config, args: () }, &exp.inputs)? {
        Ok(d) => d,
        Err(m) => return Ok(Outcome::Identical(m)),
    };
    let title = format!("Stance by sentiment, {}", exp.schema().name);
    dir.write_bytes("sentiment_counts.csv", counts_csv(&counts).as_bytes())?;
    dir.write_bytes("sentiment_distribution.svg", grouped_bars_svg(&counts, &title).as_bytes())?;
    Ok(Outcome::Done(dir.finish()?))
}
