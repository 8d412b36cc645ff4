//! Run directories: checkpoints, metric logs, reports, predictions and the
//! run manifest that decides whether a rerun may reuse or overwrite them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use polistance_core::evaluation::{EvalReport, RawPrediction};
use polistance_core::training::{Checkpoint, MetricRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const PARAMS_FILE: &str = "params.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Writes through a temporary sibling and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::data(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
}

/// What identifies a run: the command, its resolved configuration and the
/// content of every input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIdentity {
    pub command: String,
    pub config_fingerprint: String,
    /// Input path → sha256 of its content.
    pub inputs: BTreeMap<String, String>,
}

impl RunIdentity {
    pub fn new(command: &str, config_fingerprint: String, inputs: &[PathBuf]) -> Result<Self> {
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(Self { command: command.into(), config_fingerprint, inputs: hashes })
    }

    pub fn key(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub key: String,
    pub identity: RunIdentity,
    /// Unix seconds.
    pub started: u64,
    pub finished: Option<u64>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Whether a run should go ahead.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutDirState {
    /// Nothing there yet, or `--force` was given.
    Fresh,
    /// A finished run with the same identity; nothing needs writing.
    Identical(RunManifest),
}

/// Checks `out` against `identity`. A finished run with the same key is
/// reported as identical unless `force`; any other existing content is an
/// error unless `force`.
pub fn check_out_dir(out: &Path, identity: &RunIdentity, force: bool) -> Result<OutDirState> {
    let manifest_path = out.join(MANIFEST_FILE);
    if force || !out.exists() {
        return Ok(OutDirState::Fresh);
    }
    if manifest_path.exists() {
        let existing: RunManifest = read_json(&manifest_path)?;
        if existing.key == identity.key() && existing.finished.is_some() {
            return Ok(OutDirState::Identical(existing));
        }
        return Err(Error::Usage(format!(
            "{} holds a different run (key {}); pass --force to overwrite",
            out.display(),
            existing.key
        )));
    }
    let non_empty = fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some();
    if non_empty {
        return Err(Error::Usage(format!("{} is not empty; pass --force to overwrite", out.display())));
    }
    Ok(OutDirState::Fresh)
}

/// Collects outputs of one run and records them in the manifest.
#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Creates the directory and an unfinished manifest.
    pub fn create(root: &Path, identity: RunIdentity) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let manifest =
            RunManifest { key: identity.key(), identity, started: unix_now(), finished: None, outputs: Vec::new() };
        let dir = Self { root: root.to_path_buf(), manifest };
        write_json(&dir.root.join(MANIFEST_FILE), &dir.manifest)?;
        Ok(dir)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn record(&mut self, rel: &str) {
        if !self.manifest.outputs.iter().any(|o| o == rel) {
            self.manifest.outputs.push(rel.to_string());
        }
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(rel), bytes)?;
        self.record(rel);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.path(rel), value)?;
        self.record(rel);
        Ok(())
    }

    pub fn write_metrics(&mut self, rel: &str, log: &[MetricRecord]) -> Result<()> {
        let bytes = metrics_jsonl(log)?;
        self.write_bytes(rel, &bytes)
    }

    pub fn write_report(&mut self, rel: &str, report: &EvalReport) -> Result<()> {
        self.write_json(rel, report)
    }

    pub fn write_predictions(&mut self, rel: &str, predictions: &[RawPrediction]) -> Result<()> {
        self.write_bytes(rel, predictions_tsv(predictions).as_bytes())
    }

    pub fn write_checkpoint(&mut self, rel: &str, checkpoint: &Checkpoint) -> Result<()> {
        save_checkpoint(&self.path(rel), checkpoint)?;
        self.record(rel);
        Ok(())
    }

    /// Stamps the manifest as finished.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.finished = Some(unix_now());
        write_json(&self.root.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// One JSON object per line.
pub fn metrics_jsonl(log: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for record in log {
        serde_json::to_writer(&mut out, record).map_err(|e| Error::data(METRICS_FILE, e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn predictions_tsv(predictions: &[RawPrediction]) -> String {
    let mut out = String::from("id\ttarget\tgold\tpred\n");
    for p in predictions {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", p.id, p.target, p.gold, p.pred));
    }
    out
}

pub fn read_predictions_tsv(path: &Path) -> Result<Vec<RawPrediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let [id, target, gold, pred] = f[..] else {
            return Err(Error::data(path, format!("line {}: expected 4 fields", i + 1)));
        };
        let id = id.parse().map_err(|_| Error::data(path, format!("line {}: bad id {id:?}", i + 1)))?;
        out.push(RawPrediction { id, target: target.into(), gold: gold.into(), pred: pred.into() });
    }
    Ok(out)
}

/// Writes `dir/params.json` and `dir/fingerprint.txt`.
pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let params = serde_json::to_vec(checkpoint).map_err(|e| Error::data(dir, e.to_string()))?;
    write_atomic(&dir.join(PARAMS_FILE), &params)?;
    write_atomic(&dir.join(FINGERPRINT_FILE), format!("{}\n", checkpoint.fingerprint).as_bytes())
}

/// Loads a checkpoint and checks that its stored fingerprint, the
/// fingerprint file and its configuration all agree.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let params = dir.join(PARAMS_FILE);
    let checkpoint: Checkpoint = read_json(&params)?;
    let fp_path = dir.join(FINGERPRINT_FILE);
    let recorded = fs::read_to_string(&fp_path).map_err(|e| Error::io(&fp_path, e))?;
    let recorded = recorded.trim();
    if recorded != checkpoint.fingerprint || checkpoint.config.fingerprint() != checkpoint.fingerprint {
        return Err(Error::data(
            dir,
            format!(
                "fingerprint mismatch: file {recorded}, checkpoint {}, config {}",
                checkpoint.fingerprint,
                checkpoint.config.fingerprint()
            ),
        ));
    }
    Ok(checkpoint)
}
