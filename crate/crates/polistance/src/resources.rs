//! Lexicons, sentiment bindings, schemas and external embedding tables.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use polistance_core::corpus::{DatasetSchema, Vocab};
use polistance_core::lexicon::{default_bindings, Binding, Lexicon, SentimentVadMap};
use polistance_core::model::{ModelConfig, PretrainedTables};
use polistance_core::network::BackboneKind;
use polistance_core::tensor::Matrix;
use polistance_core::training::PretrainedSource;

use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a `term V A D` lexicon file.
pub fn read_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::parse(&read_text(path)?).map_err(|e| Error::data(path, e.to_string()))
}

/// Reads a JSON object mapping sentiment labels to a lexicon term or an
/// explicit `[V, A, D]` triple.
pub fn read_bindings(path: &Path) -> Result<BTreeMap<String, Binding>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::data(path, format!("invalid bindings: {e}")))
}

/// Reads a schema from JSON.
pub fn read_schema(path: &Path) -> Result<DatasetSchema> {
    let schema: DatasetSchema =
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::data(path, format!("invalid schema: {e}")))?;
    schema.validate()?;
    Ok(schema)
}

/// Builds the sentiment-to-VAD map for `schema`. Without a bindings file
/// the default label-to-term bindings are used.
pub fn vad_map(schema: &DatasetSchema, lexicon: &Path, bindings: Option<&Path>) -> Result<SentimentVadMap> {
    let lexicon = read_lexicon(lexicon)?;
    let bindings = match bindings {
        Some(p) => read_bindings(p)?,
        None => default_bindings(),
    };
    Ok(SentimentVadMap::build(&schema.sentiment_labels, &bindings, &lexicon)?)
}

/// Word vectors in the whitespace text format, one `token x1 ... xd` per
/// line. An optional leading `count dim` line is skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub source: PathBuf,
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = 0;
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::data(source, format!("line {}: {e}", i + 1)))?;
            if values.is_empty() {
                return Err(Error::data(source, format!("line {}: token without a vector", i + 1)));
            }
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::data(source, format!("line {}: width {} differs from {dim}", i + 1, values.len())));
            }
            vectors.insert(fields[0].to_string(), values);
        }
        if dim == 0 {
            return Err(Error::data(source, "no vectors"));
        }
        Ok(Self { source: source.to_path_buf(), dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact match, then lowercase.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).or_else(|| self.vectors.get(&token.to_lowercase())).map(Vec::as_slice)
    }

    /// A `vocab × dim` table; tokens without a vector get a zero row.
    pub fn table(&self, vocab: &Vocab) -> (Matrix, usize) {
        let mut m = Matrix::zeros(vocab.len(), self.dim);
        let mut missing = 0;
        for (r, tok) in vocab.tokens().iter().enumerate() {
            match self.get(tok) {
                Some(v) => m.row_mut(r).copy_from_slice(v),
                None => missing += 1,
            }
        }
        (m, missing)
    }
}

impl PretrainedSource for Embeddings {
    fn tables(&self, vocab: &Vocab, config: &ModelConfig) -> polistance_core::Result<PretrainedTables> {
        let wants = |k: &BackboneKind| matches!(k, BackboneKind::Pretrained { .. });
        let (table, missing) = self.table(vocab);
        log::info!("{}: {} of {} vocabulary tokens have no vector", self.source.display(), missing, vocab.len());
        Ok(PretrainedTables {
            encoder: wants(&config.encoder.kind).then(|| table.clone()),
            decoder: wants(&config.decoder.kind).then_some(table),
        })
    }
}
