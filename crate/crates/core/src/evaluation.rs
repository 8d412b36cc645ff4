//! Favor/against macro-F scores, evaluation reports and the in-target,
//! cross-target, ablation and seed-sweep protocols.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_label, Example, Split, StanceRoles};
use crate::error::{Error, Result};

/// Per-class true positives, false positives and false negatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn from_labels(gold: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::LengthMismatch { gold: gold.len(), pred: pred.len() });
        }
        let mut c = Self {
            tp: alloc::vec![0; classes],
            fp: alloc::vec![0; classes],
            fn_: alloc::vec![0; classes],
            total: gold.len(),
        };
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= classes || p >= classes {
                return Err(Error::DimensionMismatch { what: "label index", expected: classes, actual: g.max(p) });
            }
            if g == p {
                c.tp[g] += 1;
            } else {
                c.fp[p] += 1;
                c.fn_[g] += 1;
            }
        }
        Ok(c)
    }

    /// F1 of one class in percent; 0 when precision or recall is undefined.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.tp[class] as f64;
        let predicted = tp + self.fp[class] as f64;
        let actual = tp + self.fn_[class] as f64;
        if predicted == 0.0 || actual == 0.0 {
            return 0.0;
        }
        let p = tp / predicted;
        let r = tp / actual;
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        }
    }
}

/// Percent scores. `avg` is always `(favor + against) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FScores {
    pub favor: f64,
    pub against: f64,
    pub avg: f64,
}

impl FScores {
    pub fn new(favor: f64, against: f64) -> Self {
        Self { favor, against, avg: (favor + against) / 2.0 }
    }
}

/// Macro-F over the favor and against classes only. Other classes count
/// toward the confusion matrix but are never averaged.
pub fn f_scores(gold: &[usize], pred: &[usize], classes: usize, roles: StanceRoles) -> Result<FScores> {
    let c = ConfusionCounts::from_labels(gold, pred, classes)?;
    Ok(FScores::new(c.f1(roles.favor), c.f1(roles.against)))
}

/// Rounds to the two decimals used in reports.
pub fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Gold-label counts behind one report row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub favor: usize,
    pub against: usize,
    pub other: usize,
}

impl Support {
    pub fn total(&self) -> usize {
        self.favor + self.against + self.other
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub target: String,
    pub scores: FScores,
    pub support: Support,
}

/// One scored prediction, as dumped next to a report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub id: u64,
    pub target: String,
    pub gold: String,
    pub pred: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub rows: Vec<TargetRow>,
    /// Mean of the per-row `F_avg`.
    pub f_avg: f64,
    pub provenance: Provenance,
}

impl EvalReport {
    /// Builds a report from raw predictions, one row per target in `targets`
    /// order. Targets without predictions are skipped.
    pub fn from_predictions(
        protocol: impl Into<String>,
        predictions: &[RawPrediction],
        stance_labels: &[String],
        targets: &[String],
        provenance: Provenance,
    ) -> Result<Self> {
        let roles = roles_of(stance_labels)?;
        let mut rows = Vec::new();
        for target in targets {
            let mine: Vec<&RawPrediction> = predictions.iter().filter(|p| &p.target == target).collect();
            if mine.is_empty() {
                continue;
            }
            let gold = mine.iter().map(|p| encode_label(&p.gold, stance_labels)).collect::<Result<Vec<_>>>()?;
            let pred = mine.iter().map(|p| encode_label(&p.pred, stance_labels)).collect::<Result<Vec<_>>>()?;
            let scores = f_scores(&gold, &pred, stance_labels.len(), roles)?;
            let mut support = Support::default();
            for &g in &gold {
                match g {
                    g if g == roles.favor => support.favor += 1,
                    g if g == roles.against => support.against += 1,
                    _ => support.other += 1,
                }
            }
            rows.push(TargetRow { target: target.clone(), scores, support });
        }
        if rows.is_empty() {
            return Err(Error::Data("no predictions to report".into()));
        }
        let f_avg = rows.iter().map(|r| r.scores.avg).sum::<f64>() / rows.len() as f64;
        Ok(Self { protocol: protocol.into(), rows, f_avg, provenance })
    }

    pub fn row(&self, target: &str) -> Option<&TargetRow> {
        self.rows.iter().find(|r| r.target == target)
    }
}

fn roles_of(stance_labels: &[String]) -> Result<StanceRoles> {
    let find = |name: &str| {
        stance_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidConfig(format!("stance labels lack {name}")))
    };
    Ok(StanceRoles { favor: find("favor")?, against: find("against")? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// One model per target.
    AdHoc,
    /// One model trained and validated on all targets.
    Merged,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::AdHoc => "ad_hoc",
            Protocol::Merged => "merged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ad_hoc" | "adhoc" => Some(Protocol::AdHoc),
            "merged" => Some(Protocol::Merged),
            _ => None,
        }
    }
}

/// What a training driver is asked to fit.
#[derive(Clone, Debug)]
pub struct TrainRequest<'a> {
    /// Short name of the run, e.g. a target or a cross-target pair.
    pub name: String,
    pub train: Vec<&'a Example>,
    pub validation: Vec<&'a Example>,
    pub seed: u64,
}

/// Trains models and predicts stance labels; the protocols are written
/// against this so they can be exercised without the full network.
pub trait TrainDriver {
    type Model;
    fn train(&mut self, request: &TrainRequest<'_>) -> Result<Self::Model>;
    /// Canonical stance label for each example.
    fn predict(&mut self, model: &Self::Model, examples: &[&Example]) -> Result<Vec<String>>;
}

/// Models for an in-target evaluation.
pub enum InTargetModels<M> {
    Merged(M),
    AdHoc(BTreeMap<String, M>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<RawPrediction>,
}

fn in_split<'a>(corpus: &'a [Example], target: Option<&str>, split: Split) -> Vec<&'a Example> {
    corpus.iter().filter(|e| e.split == split && target.is_none_or(|t| e.target == t)).collect()
}

fn predict_rows<D: TrainDriver>(driver: &mut D, model: &D::Model, examples: &[&Example]) -> Result<Vec<RawPrediction>> {
    let labels = driver.predict(model, examples)?;
    if labels.len() != examples.len() {
        return Err(Error::LengthMismatch { gold: examples.len(), pred: labels.len() });
    }
    Ok(examples
        .iter()
        .zip(labels)
        .map(|(e, pred)| RawPrediction { id: e.id, target: e.target.clone(), gold: e.stance.clone(), pred })
        .collect())
}

/// Scores trained in-target models on each target's test split.
pub fn evaluate_in_target<D: TrainDriver>(
    models: &InTargetModels<D::Model>,
    corpus: &[Example],
    targets: &[String],
    stance_labels: &[String],
    driver: &mut D,
    provenance: Provenance,
) -> Result<Evaluation> {
    let mut predictions = Vec::new();
    let protocol = match models {
        InTargetModels::Merged(model) => {
            for t in targets {
                predictions.extend(predict_rows(driver, model, &in_split(corpus, Some(t), Split::Test))?);
            }
            Protocol::Merged
        }
        InTargetModels::AdHoc(map) => {
            for t in targets {
                let model = map.get(t).ok_or_else(|| Error::Protocol(format!("no checkpoint for target {t:?}")))?;
                predictions.extend(predict_rows(driver, model, &in_split(corpus, Some(t), Split::Test))?);
            }
            Protocol::AdHoc
        }
    };
    let report = EvalReport::from_predictions(protocol.as_str(), &predictions, stance_labels, targets, provenance)?;
    Ok(Evaluation { report, predictions })
}

/// Trains per the protocol, then evaluates on the test splits.
pub fn run_in_target<D: TrainDriver>(
    protocol: Protocol,
    corpus: &[Example],
    targets: &[String],
    stance_labels: &[String],
    driver: &mut D,
    seed: u64,
) -> Result<Evaluation> {
    let provenance = Provenance { config_fingerprint: String::new(), seeds: alloc::vec![seed] };
    let models = match protocol {
        Protocol::Merged => {
            let request = TrainRequest {
                name: "merged".into(),
                train: in_split(corpus, None, Split::Train),
                validation: in_split(corpus, None, Split::Val),
                seed,
            };
            InTargetModels::Merged(driver.train(&request)?)
        }
        Protocol::AdHoc => {
            let mut map = BTreeMap::new();
            for t in targets {
                let request = TrainRequest {
                    name: t.clone(),
                    train: in_split(corpus, Some(t), Split::Train),
                    validation: in_split(corpus, Some(t), Split::Val),
                    seed,
                };
                map.insert(t.clone(), driver.train(&request)?);
            }
            InTargetModels::AdHoc(map)
        }
    };
    evaluate_in_target(&models, corpus, targets, stance_labels, driver, provenance)
}

/// Initials of a target name, e.g. `"Donald Trump"` → `"DT"`.
pub fn abbreviate(target: &str) -> String {
    let initials: String = target.split_whitespace().filter_map(|w| w.chars().next()).collect();
    if initials.chars().count() >= 2 {
        initials.to_uppercase()
    } else {
        target.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTargetPair {
    pub sources: Vec<String>,
    pub destination: String,
}

impl CrossTargetPair {
    pub fn new(sources: Vec<String>, destination: impl Into<String>) -> Result<Self> {
        let destination = destination.into();
        if sources.is_empty() {
            return Err(Error::Protocol("cross-target run needs at least one source target".into()));
        }
        if sources.contains(&destination) {
            return Err(Error::Protocol(format!("destination {destination:?} is also a source")));
        }
        Ok(Self { sources, destination })
    }

    /// Display name such as `DT&JB->BS`.
    pub fn name(&self) -> String {
        let src: Vec<String> = self.sources.iter().map(|s| abbreviate(s)).collect();
        format!("{}->{}", src.join("&"), abbreviate(&self.destination))
    }
}

/// Every single-source pair in target order, followed by every
/// leave-one-out pair (destinations in reverse order). Leave-one-out pairs
/// are added only when they differ from single-source ones.
pub fn cross_target_pairs(targets: &[String]) -> Vec<CrossTargetPair> {
    let mut pairs = Vec::new();
    for src in targets {
        for dst in targets.iter().filter(|d| *d != src) {
            pairs.push(CrossTargetPair { sources: alloc::vec![src.clone()], destination: dst.clone() });
        }
    }
    if targets.len() >= 3 {
        for dst in targets.iter().rev() {
            let sources = targets.iter().filter(|t| *t != dst).cloned().collect();
            pairs.push(CrossTargetPair { sources, destination: dst.clone() });
        }
    }
    pairs
}

/// Which destination rows a cross-target run is tested on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationScope {
    /// All destination splits concatenated.
    #[default]
    AllSplits,
    TestOnly,
}

/// Trains on the sources' train/val splits and tests on the destination.
pub fn run_cross_target<D: TrainDriver>(
    pair: &CrossTargetPair,
    corpus: &[Example],
    stance_labels: &[String],
    driver: &mut D,
    seed: u64,
    scope: DestinationScope,
) -> Result<Evaluation> {
    let pair = CrossTargetPair::new(pair.sources.clone(), pair.destination.clone())?;
    let from_sources = |split| -> Vec<&Example> {
        corpus.iter().filter(|e| e.split == split && pair.sources.contains(&e.target)).collect()
    };
    let request = TrainRequest {
        name: pair.name(),
        train: from_sources(Split::Train),
        validation: from_sources(Split::Val),
        seed,
    };
    let model = driver.train(&request)?;
    let test: Vec<&Example> = corpus
        .iter()
        .filter(|e| e.target == pair.destination && (scope == DestinationScope::AllSplits || e.split == Split::Test))
        .collect();
    let predictions = predict_rows(driver, &model, &test)?;
    let report = EvalReport::from_predictions(
        pair.name(),
        &predictions,
        stance_labels,
        core::slice::from_ref(&pair.destination),
        Provenance { config_fingerprint: String::new(), seeds: alloc::vec![seed] },
    )?;
    Ok(Evaluation { report, predictions })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoDecoder,
    NoVad,
    NoSentiment,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] =
        [AblationVariant::Full, AblationVariant::NoDecoder, AblationVariant::NoVad, AblationVariant::NoSentiment];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoDecoder => "w/o Decoder",
            AblationVariant::NoVad => "w/o VAD",
            AblationVariant::NoSentiment => "w/o Sentiment",
        }
    }

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoDecoder => f.no_decoder = true,
            AblationVariant::NoVad => f.no_vad = true,
            AblationVariant::NoSentiment => f.no_sentiment = true,
        }
        f
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    #[serde(default)]
    pub no_decoder: bool,
    #[serde(default)]
    pub no_vad: bool,
    #[serde(default)]
    pub no_sentiment: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub label: String,
    pub report: EvalReport,
    /// `F_avg` change against the full model, per target and overall.
    pub delta_by_target: BTreeMap<String, f64>,
    pub delta: f64,
}

/// Ablation table rows, always in [`AblationVariant::ALL`] order with the
/// full model first.
pub fn ablation_table(reports: &[(AblationVariant, EvalReport)]) -> Result<Vec<AblationRow>> {
    let full = reports
        .iter()
        .find(|(v, _)| *v == AblationVariant::Full)
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Protocol("ablation table needs the full model".into()))?;
    let mut rows = Vec::new();
    for variant in AblationVariant::ALL {
        let Some((_, report)) = reports.iter().find(|(v, _)| *v == variant) else {
            return Err(Error::Protocol(format!("ablation table lacks {}", variant.label())));
        };
        let delta_by_target = report
            .rows
            .iter()
            .filter_map(|r| full.row(&r.target).map(|f| (r.target.clone(), r.scores.avg - f.scores.avg)))
            .collect();
        rows.push(AblationRow {
            variant,
            label: variant.label().to_string(),
            report: report.clone(),
            delta_by_target,
            delta: report.f_avg - full.f_avg,
        });
    }
    Ok(rows)
}

/// The five seeds a sweep runs, in order.
pub const SWEEP_SEEDS: [u64; 5] = [13, 42, 1234, 2024, 31337];

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: 0.0, std: 0.0, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    };
    MeanStd { mean, std, n }
}

/// Per-target and overall `F_avg` statistics across seed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSweep {
    pub seeds: Vec<u64>,
    pub by_target: BTreeMap<String, MeanStd>,
    pub overall: MeanStd,
}

pub fn summarize_seeds(runs: &[(u64, EvalReport)]) -> SeedSweep {
    let mut by_target: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, report) in runs {
        for row in &report.rows {
            by_target.entry(row.target.clone()).or_default().push(row.scores.avg);
        }
    }
    let overall: Vec<f64> = runs.iter().map(|(_, r)| r.f_avg).collect();
    SeedSweep {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        by_target: by_target.into_iter().map(|(t, v)| (t, mean_std(&v))).collect(),
        overall: mean_std(&overall),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROLES: StanceRoles = StanceRoles { favor: 0, against: 1 };

    #[test]
    fn hand_computed_confusion_example() {
        // F F A A N  vs  F A A A F
        let s = f_scores(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 0], 3, ROLES).unwrap();
        assert!((s.favor - 50.0).abs() < 1e-12);
        assert!((s.against - 80.0).abs() < 1e-12);
        assert_eq!(round2(s.avg), 65.0);
    }

    #[test]
    fn perfect_and_empty_support() {
        let gold = [0, 1, 2, 1, 0, 2];
        assert_eq!(f_scores(&gold, &gold, 3, ROLES).unwrap().avg, 100.0);
        assert_eq!(f_scores(&[2, 2], &[2, 2], 3, ROLES).unwrap(), FScores::new(0.0, 0.0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert_eq!(f_scores(&[0], &[0, 1], 2, ROLES).unwrap_err(), Error::LengthMismatch { gold: 1, pred: 2 });
    }

    #[test]
    fn pair_grid_follows_source_then_leave_one_out_order() {
        let targets: Vec<String> = ["Donald Trump", "Joe Biden", "Bernie Sanders"].map(String::from).to_vec();
        let names: Vec<String> = cross_target_pairs(&targets).iter().map(CrossTargetPair::name).collect();
        assert_eq!(
            names,
            ["DT->JB", "DT->BS", "JB->DT", "JB->BS", "BS->DT", "BS->JB", "DT&JB->BS", "DT&BS->JB", "JB&BS->DT"]
        );
        assert_eq!(cross_target_pairs(&targets[..2]).len(), 2);
    }

    #[test]
    fn destination_among_sources_is_rejected() {
        assert!(matches!(CrossTargetPair::new(alloc::vec!["A".into()], "A"), Err(Error::Protocol(_))));
    }

    #[test]
    fn sample_standard_deviation() {
        let m = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - libm::sqrt(5.0 / 3.0)).abs() < 1e-12);
    }
}
