//! Delimited-text stance datasets described by a JSON manifest.
//!
//! A manifest lists files and the split each one feeds:
//!
//! ```json
//! {
//!   "schema": "P-STANCE",
//!   "files": [
//!     { "path": "trump_train.tsv", "split": "train" },
//!     { "path": "trump_test.tsv", "split": "test", "target": "Donald Trump" }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest. Files have a header row; the text,
//! target, stance and optional sentiment columns are found by name.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use polistance_core::corpus::{split_summary, DatasetSchema, Example, Split, SplitSummary};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names looked up case-insensitively in the header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Columns {
    pub text: Vec<String>,
    pub target: Vec<String>,
    pub stance: Vec<String>,
    pub sentiment: Vec<String>,
}

impl Default for Columns {
    fn default() -> Self {
        let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        Self {
            text: v(&["Tweet", "Text"]),
            target: v(&["Target"]),
            stance: v(&["Stance", "Label"]),
            sentiment: v(&["Sentiment"]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaRef {
    /// Name of a built-in schema.
    Builtin(String),
    Inline(DatasetSchema),
}

impl SchemaRef {
    pub fn resolve(&self) -> Result<DatasetSchema> {
        let schema = match self {
            SchemaRef::Builtin(name) => DatasetSchema::builtin(name).ok_or_else(|| {
                Error::Usage(format!("unknown schema {name:?}; use P-STANCE, SemEval-2016 or an inline schema"))
            })?,
            SchemaRef::Inline(s) => s.clone(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub split: Split,
    /// Target for every row, for files without a target column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: SchemaRef,
    pub files: Vec<FileEntry>,
    /// Field delimiter; a tab unless given.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub columns: Columns,
}

fn default_delimiter() -> char {
    '\t'
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("invalid manifest: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// The first bad row aborts the load.
    #[default]
    Strict,
    /// Bad rows are skipped, counted and logged.
    Lenient,
}

/// Why a row was rejected. Row 1 is the first data row after the header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub file: PathBuf,
    pub row: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOutcome {
    pub examples: Vec<Example>,
    pub skipped: Vec<RowDiagnostic>,
}

struct ColumnIndex {
    text: usize,
    target: Option<usize>,
    stance: usize,
    sentiment: Option<usize>,
}

fn find_column(header: &csv::StringRecord, names: &[String]) -> Option<usize> {
    header.iter().position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

/// Options of one file read.
#[derive(Clone, Debug)]
pub struct ReadOptions<'a> {
    pub split: Split,
    pub target: Option<&'a str>,
    pub delimiter: char,
    pub columns: &'a Columns,
    pub strictness: Strictness,
    /// Id given to the first example.
    pub first_id: u64,
}

/// Reads one delimited file. `name` labels diagnostics.
pub fn read_examples(
    reader: impl Read,
    name: &Path,
    schema: &DatasetSchema,
    opts: &ReadOptions<'_>,
) -> Result<LoadOutcome> {
    let delimiter = u8::try_from(opts.delimiter)
        .map_err(|_| Error::Usage(format!("delimiter {:?} is not a single byte", opts.delimiter)))?;
    let mut rdr =
        csv::ReaderBuilder::new().delimiter(delimiter).quoting(delimiter != b'\t').flexible(false).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::data(name, format!("cannot read header: {e}")))?.clone();
    let missing = |what: &str, names: &[String]| {
        Error::data(name, format!("missing {what} column (looked for {})", names.join(", ")))
    };
    let cols = ColumnIndex {
        text: find_column(&header, &opts.columns.text).ok_or_else(|| missing("text", &opts.columns.text))?,
        target: find_column(&header, &opts.columns.target),
        stance: find_column(&header, &opts.columns.stance).ok_or_else(|| missing("stance", &opts.columns.stance))?,
        sentiment: find_column(&header, &opts.columns.sentiment),
    };
    if cols.target.is_none() && opts.target.is_none() {
        return Err(missing("target", &opts.columns.target));
    }
    let mut outcome = LoadOutcome::default();
    let mut next_id = opts.first_id;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::data(name, format!("row {row}: {e}")))?;
        match parse_row(&record, &cols, schema, opts, next_id) {
            Ok(ex) => {
                outcome.examples.push(ex);
                next_id += 1;
            }
            Err(message) => {
                let diag = RowDiagnostic { file: name.to_path_buf(), row, message };
                match opts.strictness {
                    Strictness::Strict => {
                        return Err(Error::data(name, format!("row {}: {}", diag.row, diag.message)));
                    }
                    Strictness::Lenient => {
                        log::warn!("{}: skipping row {}: {}", name.display(), diag.row, diag.message);
                        outcome.skipped.push(diag);
                    }
                }
            }
        }
    }
    Ok(outcome)
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &ColumnIndex,
    schema: &DatasetSchema,
    opts: &ReadOptions<'_>,
    id: u64,
) -> std::result::Result<Example, String> {
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let raw_target = cols.target.map(field).filter(|t| !t.is_empty()).or(opts.target).unwrap_or("");
    let target = if schema.targets.is_empty() {
        raw_target.to_string()
    } else {
        schema
            .targets
            .iter()
            .find(|t| t.eq_ignore_ascii_case(raw_target))
            .cloned()
            .ok_or_else(|| format!("unknown target {raw_target:?} for schema {}", schema.name))?
    };
    let raw_stance = field(cols.stance);
    let stance = schema.normalize_stance(raw_stance).ok_or_else(|| {
        format!("unknown stance label {raw_stance:?}; expected one of {}", schema.stance_labels.join(", "))
    })?;
    let sentiment = match cols.sentiment.map(field).filter(|s| !s.is_empty()) {
        None => None,
        Some(raw) => Some(schema.normalize_sentiment(raw).ok_or_else(|| {
            format!("unknown sentiment label {raw:?}; expected one of {}", schema.sentiment_labels.join(", "))
        })?),
    };
    Example::new(id, field(cols.text), target, stance, sentiment, opts.split).map_err(|e| e.to_string())
}

/// A loaded corpus with the schema it was validated against.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub examples: Vec<Example>,
    pub skipped: Vec<RowDiagnostic>,
    /// Files read, in manifest order.
    pub files: Vec<PathBuf>,
}

impl Dataset {
    pub fn summary(&self) -> SplitSummary {
        split_summary(&self.examples)
    }
}

/// Loads every file of a manifest. Ids are assigned in file order.
pub fn load_dataset(manifest_path: &Path, strictness: Strictness) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let schema = manifest.schema.resolve()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut files = Vec::new();
    for entry in &manifest.files {
        let path = base.join(&entry.path);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let opts = ReadOptions {
            split: entry.split,
            target: entry.target.as_deref(),
            delimiter: manifest.delimiter,
            columns: &manifest.columns,
            strictness,
            first_id: examples.len() as u64,
        };
        let outcome = read_examples(file, &path, &schema, &opts)?;
        examples.extend(outcome.examples);
        skipped.extend(outcome.skipped);
        files.push(path);
    }
    Ok(Dataset { schema, examples, skipped, files })
}

/// Examples as a TSV with `Tweet`, `Target`, `Stance`, `Sentiment`
/// columns. Tabs and newlines inside text become spaces.
pub fn tsv_string(examples: &[&Example]) -> String {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut out = String::from("Tweet\tTarget\tStance\tSentiment\n");
    for ex in examples {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            clean(&ex.text),
            clean(&ex.target),
            ex.stance,
            ex.sentiment.as_deref().unwrap_or("")
        ));
    }
    out
}

/// A published per-(target, split, stance) count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceCell {
    pub target: &'static str,
    pub split: Split,
    pub stance: &'static str,
    pub count: usize,
}

const fn cell(target: &'static str, split: Split, stance: &'static str, count: usize) -> ReferenceCell {
    ReferenceCell { target, split, stance, count }
}

/// Published P-STANCE counts.
pub const PSTANCE_COUNTS: [ReferenceCell; 18] = {
    use Split::*;
    [
        cell("Donald Trump", Train, "FAVOR", 2937),
        cell("Donald Trump", Train, "AGAINST", 3425),
        cell("Donald Trump", Val, "FAVOR", 365),
        cell("Donald Trump", Val, "AGAINST", 430),
        cell("Donald Trump", Test, "FAVOR", 361),
        cell("Donald Trump", Test, "AGAINST", 435),
        cell("Joe Biden", Train, "FAVOR", 2552),
        cell("Joe Biden", Train, "AGAINST", 3254),
        cell("Joe Biden", Val, "FAVOR", 328),
        cell("Joe Biden", Val, "AGAINST", 417),
        cell("Joe Biden", Test, "FAVOR", 337),
        cell("Joe Biden", Test, "AGAINST", 408),
        cell("Bernie Sanders", Train, "FAVOR", 2858),
        cell("Bernie Sanders", Train, "AGAINST", 2198),
        cell("Bernie Sanders", Val, "FAVOR", 350),
        cell("Bernie Sanders", Val, "AGAINST", 284),
        cell("Bernie Sanders", Test, "FAVOR", 343),
        cell("Bernie Sanders", Test, "AGAINST", 292),
    ]
};

pub const PSTANCE_TOTALS: [(&str, usize); 3] = [("Donald Trump", 7953), ("Joe Biden", 7296), ("Bernie Sanders", 6325)];

/// Published SemEval-2016 counts after the train/validation re-split.
pub const SEMEVAL_COUNTS: [ReferenceCell; 45] = {
    use Split::*;
    const AT: &str = "Atheism";
    const CC: &str = "Climate Change is a Real Concern";
    const FM: &str = "Feminist Movement";
    const HC: &str = "Hillary Clinton";
    const LA: &str = "Legalization of Abortion";
    [
        cell(AT, Train, "FAVOR", 83),
        cell(AT, Train, "AGAINST", 280),
        cell(AT, Train, "NONE", 108),
        cell(AT, Val, "FAVOR", 9),
        cell(AT, Val, "AGAINST", 24),
        cell(AT, Val, "NONE", 9),
        cell(AT, Test, "FAVOR", 32),
        cell(AT, Test, "AGAINST", 160),
        cell(AT, Test, "NONE", 28),
        cell(CC, Train, "FAVOR", 195),
        cell(CC, Train, "AGAINST", 14),
        cell(CC, Train, "NONE", 150),
        cell(CC, Val, "FAVOR", 17),
        cell(CC, Val, "AGAINST", 1),
        cell(CC, Val, "NONE", 18),
        cell(CC, Test, "FAVOR", 123),
        cell(CC, Test, "AGAINST", 11),
        cell(CC, Test, "NONE", 35),
        cell(FM, Train, "FAVOR", 190),
        cell(FM, Train, "AGAINST", 286),
        cell(FM, Train, "NONE", 119),
        cell(FM, Val, "FAVOR", 20),
        cell(FM, Val, "AGAINST", 42),
        cell(FM, Val, "NONE", 7),
        cell(FM, Test, "FAVOR", 58),
        cell(FM, Test, "AGAINST", 183),
        cell(FM, Test, "NONE", 44),
        cell(HC, Train, "FAVOR", 110),
        cell(HC, Train, "AGAINST", 341),
        cell(HC, Train, "NONE", 155),
        cell(HC, Val, "FAVOR", 8),
        cell(HC, Val, "AGAINST", 52),
        cell(HC, Val, "NONE", 23),
        cell(HC, Test, "FAVOR", 45),
        cell(HC, Test, "AGAINST", 172),
        cell(HC, Test, "NONE", 78),
        cell(LA, Train, "FAVOR", 109),
        cell(LA, Train, "AGAINST", 326),
        cell(LA, Train, "NONE", 157),
        cell(LA, Val, "FAVOR", 12),
        cell(LA, Val, "AGAINST", 29),
        cell(LA, Val, "NONE", 20),
        cell(LA, Test, "FAVOR", 46),
        cell(LA, Test, "AGAINST", 189),
        cell(LA, Test, "NONE", 45),
    ]
};

pub const SEMEVAL_TOTALS: [(&str, usize); 5] = [
    ("Atheism", 733),
    ("Climate Change is a Real Concern", 564),
    ("Feminist Movement", 949),
    ("Hillary Clinton", 984),
    ("Legalization of Abortion", 933),
];

/// A published count that the loaded data does not reproduce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub cell: String,
    pub expected: usize,
    pub actual: usize,
}

/// Compares a summary against published cells and totals.
pub fn compare_counts(summary: &SplitSummary, cells: &[ReferenceCell], totals: &[(&str, usize)]) -> Vec<CountMismatch> {
    let mut out = Vec::new();
    for c in cells {
        let actual = summary.get(c.target, c.split, c.stance);
        if actual != c.count {
            out.push(CountMismatch {
                cell: format!("{} {} {}", c.target, c.split, c.stance),
                expected: c.count,
                actual,
            });
        }
    }
    for (target, expected) in totals {
        let actual = summary.target_total(target);
        if actual != *expected {
            out.push(CountMismatch { cell: format!("{target} total"), expected: *expected, actual });
        }
    }
    out
}

/// Published cells and per-target totals.
pub type Reference = (&'static [ReferenceCell], &'static [(&'static str, usize)]);

/// Reference counts for a built-in schema, if it has any.
pub fn reference_for(schema: &DatasetSchema) -> Option<Reference> {
    use polistance_core::corpus::SchemaName;
    match schema.name {
        SchemaName::PStance => Some((&PSTANCE_COUNTS, &PSTANCE_TOTALS)),
        SchemaName::SemEval2016 => Some((&SEMEVAL_COUNTS, &SEMEVAL_TOTALS)),
        SchemaName::Custom(_) => None,
    }
}

/// Summary rows as `target, split, stance, count` TSV lines.
pub fn summary_tsv(summary: &SplitSummary) -> String {
    let mut rows: BTreeMap<(String, Split, String), usize> = BTreeMap::new();
    for (k, v) in &summary.counts {
        rows.insert(k.clone(), *v);
    }
    let mut out = String::from("target\tsplit\tstance\tcount\n");
    for ((t, s, l), c) in rows {
        out.push_str(&format!("{t}\t{s}\t{l}\t{c}\n"));
    }
    out
}
