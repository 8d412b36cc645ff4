//! Stance examples, dataset schemas, tokenization and target-aware inputs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" | "dev" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tweet with its target and labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// Stable id assigned at load time.
    pub id: u64,
    pub text: String,
    pub target: String,
    /// Canonical stance label from the schema.
    pub stance: String,
    /// Canonical sentiment label, when annotated.
    pub sentiment: Option<String>,
    pub split: Split,
}

impl Example {
    pub fn new(
        id: u64,
        text: impl Into<String>,
        target: impl Into<String>,
        stance: impl Into<String>,
        sentiment: Option<String>,
        split: Split,
    ) -> Result<Self> {
        let text = text.into();
        if normalize_whitespace(&text).is_empty() {
            return Err(Error::Data(format!("example {id} has empty text")));
        }
        Ok(Self { id, text, target: target.into(), stance: stance.into(), sentiment, split })
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaName {
    #[serde(rename = "P-STANCE")]
    PStance,
    #[serde(rename = "SemEval-2016")]
    SemEval2016,
    Custom(String),
}

impl fmt::Display for SchemaName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaName::PStance => f.write_str("P-STANCE"),
            SchemaName::SemEval2016 => f.write_str("SemEval-2016"),
            SchemaName::Custom(name) => f.write_str(name),
        }
    }
}

/// Label sets and target list of a dataset.
///
/// `synonyms` maps lowercase variant spellings to canonical labels; it is the
/// complete list of accepted spellings beyond a case-insensitive match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: SchemaName,
    pub stance_labels: Vec<String>,
    pub sentiment_labels: Vec<String>,
    pub targets: Vec<String>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

/// Default seven-class sentiment ordering for P-STANCE.
pub const PSTANCE_SENTIMENTS: [&str; 7] = [
    "very negative",
    "moderate negative",
    "slightly negative",
    "neutral",
    "slightly positive",
    "moderate positive",
    "very positive",
];

pub const PSTANCE_TARGETS: [&str; 3] = ["Donald Trump", "Joe Biden", "Bernie Sanders"];

pub const SEMEVAL_TARGETS: [&str; 5] =
    ["Atheism", "Climate Change is a Real Concern", "Feminist Movement", "Hillary Clinton", "Legalization of Abortion"];

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl DatasetSchema {
    pub fn p_stance() -> Self {
        Self {
            name: SchemaName::PStance,
            stance_labels: strings(&["FAVOR", "AGAINST"]),
            sentiment_labels: strings(&PSTANCE_SENTIMENTS),
            targets: strings(&PSTANCE_TARGETS),
            synonyms: BTreeMap::new(),
        }
    }

    pub fn semeval_2016() -> Self {
        let synonyms = [("neither", "NONE"), ("pos", "positive"), ("neg", "negative"), ("other", "neutral")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            name: SchemaName::SemEval2016,
            stance_labels: strings(&["FAVOR", "AGAINST", "NONE"]),
            sentiment_labels: strings(&["positive", "negative", "neutral"]),
            targets: strings(&SEMEVAL_TARGETS),
            synonyms,
        }
    }

    /// One of the two built-in schemas, matched case-insensitively with
    /// punctuation ignored (`pstance`, `semeval2016`, ...).
    pub fn builtin(name: &str) -> Option<Self> {
        let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "pstance" => Some(Self::p_stance()),
            "semeval2016" | "semeval" => Some(Self::semeval_2016()),
            _ => None,
        }
    }

    /// Checks the schema invariants: duplicate-free label lists and the
    /// fixed stance sets of the two named datasets.
    pub fn validate(&self) -> Result<()> {
        for (what, list) in
            [("stance", &self.stance_labels), ("sentiment", &self.sentiment_labels), ("target", &self.targets)]
        {
            let unique: BTreeSet<String> = list.iter().map(|l| l.to_lowercase()).collect();
            if unique.len() != list.len() {
                return Err(Error::InvalidConfig(format!("duplicate {what} labels in schema {}", self.name)));
            }
        }
        let lowered: Vec<String> = self.stance_labels.iter().map(|l| l.to_lowercase()).collect();
        let expected: &[&str] = match self.name {
            SchemaName::PStance => &["favor", "against"],
            SchemaName::SemEval2016 => &["favor", "against", "none"],
            SchemaName::Custom(_) => &[],
        };
        if !expected.is_empty() && lowered != expected {
            return Err(Error::InvalidConfig(format!(
                "schema {} must have stance labels {:?}, got {:?}",
                self.name, expected, self.stance_labels
            )));
        }
        for canonical in self.synonyms.values() {
            let known =
                self.stance_labels.iter().chain(&self.sentiment_labels).any(|l| l.eq_ignore_ascii_case(canonical));
            if !known {
                return Err(Error::InvalidConfig(format!("synonym maps to unknown label {canonical:?}")));
            }
        }
        Ok(())
    }

    fn normalize_in(&self, raw: &str, labels: &[String]) -> Option<String> {
        let key = raw.trim().to_lowercase();
        if let Some(l) = labels.iter().find(|l| l.to_lowercase() == key) {
            return Some(l.clone());
        }
        let canonical = self.synonyms.get(&key)?;
        labels.iter().find(|l| l.eq_ignore_ascii_case(canonical)).cloned()
    }

    /// Maps a raw stance spelling to its canonical label.
    pub fn normalize_stance(&self, raw: &str) -> Option<String> {
        self.normalize_in(raw, &self.stance_labels)
    }

    pub fn normalize_sentiment(&self, raw: &str) -> Option<String> {
        self.normalize_in(raw, &self.sentiment_labels)
    }

    pub fn encode_stance(&self, label: &str) -> Result<usize> {
        let canonical = self.normalize_stance(label).unwrap_or_else(|| label.to_string());
        encode_label(&canonical, &self.stance_labels).map_err(|e| self.rename(e))
    }

    pub fn encode_sentiment(&self, label: &str) -> Result<usize> {
        let canonical = self.normalize_sentiment(label).unwrap_or_else(|| label.to_string());
        encode_label(&canonical, &self.sentiment_labels).map_err(|e| self.rename(e))
    }

    fn rename(&self, e: Error) -> Error {
        match e {
            Error::UnknownLabel { label, .. } => Error::UnknownLabel { label, schema: self.name.to_string() },
            other => other,
        }
    }

    /// Indices of the favor and against classes.
    pub fn stance_roles(&self) -> Result<StanceRoles> {
        let find = |name: &str| {
            self.stance_labels
                .iter()
                .position(|l| l.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::InvalidConfig(format!("schema {} has no {name} stance label", self.name)))
        };
        Ok(StanceRoles { favor: find("favor")?, against: find("against")? })
    }
}

/// Positions of the two scored stance classes within a label list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceRoles {
    pub favor: usize,
    pub against: usize,
}

/// Index of `label` in `label_set`, compared case-insensitively after trimming.
pub fn encode_label(label: &str, label_set: &[String]) -> Result<usize> {
    let key = label.trim();
    label_set
        .iter()
        .position(|l| l.eq_ignore_ascii_case(key))
        .ok_or_else(|| Error::UnknownLabel { label: label.to_string(), schema: format!("[{}]", label_set.join(", ")) })
}

pub fn decode_label(index: usize, label_set: &[String]) -> Option<&str> {
    label_set.get(index).map(String::as_str)
}

/// Counts keyed by `(target, split, stance)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub counts: BTreeMap<(String, Split, String), usize>,
}

impl SplitSummary {
    pub fn get(&self, target: &str, split: Split, stance: &str) -> usize {
        self.counts
            .iter()
            .filter(|((t, s, l), _)| t == target && *s == split && l.eq_ignore_ascii_case(stance))
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn target_total(&self, target: &str) -> usize {
        self.counts.iter().filter(|((t, _, _), _)| t == target).map(|(_, c)| *c).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn split_summary(examples: &[Example]) -> SplitSummary {
    let mut summary = SplitSummary::default();
    for ex in examples {
        *summary.counts.entry((ex.target.clone(), ex.split, ex.stance.clone())).or_insert(0) += 1;
    }
    summary
}

/// Fails when one `(text, target)` pair occurs in more than one split.
pub fn check_split_disjointness(examples: &[Example]) -> Result<()> {
    let mut seen: BTreeMap<(String, &str), Split> = BTreeMap::new();
    for ex in examples {
        let key = (normalize_whitespace(&ex.text), ex.target.as_str());
        match seen.get(&key) {
            Some(&split) if split != ex.split => {
                return Err(Error::Data(format!(
                    "example {} (target {}) appears in both {} and {}",
                    ex.id, ex.target, split, ex.split
                )));
            }
            Some(_) => {}
            None => {
                seen.insert(key, ex.split);
            }
        }
    }
    Ok(())
}

/// Splits raw text into tokens.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercases and splits on whitespace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(|t| t.to_lowercase()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub eos: u32,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self { pad: 0, unk: 1, cls: 2, sep: 3, eos: 4 }
    }
}

const SPECIAL_NAMES: [&str; 5] = ["<pad>", "<unk>", "<cls>", "<sep>", "<eos>"];

/// Token vocabulary with the five special tokens at ids 0..5.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary from token streams, keeping tokens seen at least
    /// `min_freq` times. Ordering is by descending frequency, then by token.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_freq: usize, max_size: Option<usize>) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *freq.entry(t).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, usize)> =
            freq.into_iter().filter(|(t, c)| *c >= min_freq && !SPECIAL_NAMES.contains(t)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        if let Some(max) = max_size {
            ranked.truncate(max.saturating_sub(SPECIAL_NAMES.len()));
        }
        let tokens = SPECIAL_NAMES.iter().map(|s| s.to_string()).chain(ranked.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(tokens.collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    pub fn specials(&self) -> SpecialTokens {
        SpecialTokens::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(self.specials().unk)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Token ids laid out as `<cls> text <sep> target <eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAwareInput {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub cls_position: usize,
}

impl TargetAwareInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The reconstruction reference: every token except the trailing `<eos>`.
    pub fn without_eos(&self) -> &[u32] {
        &self.ids[..self.ids.len() - 1]
    }

    /// The target tokens between `<sep>` and `<eos>`.
    pub fn target_ids(&self, specials: &SpecialTokens) -> &[u32] {
        let sep = self.ids.iter().position(|&t| t == specials.sep).unwrap_or(0);
        &self.ids[sep + 1..self.ids.len() - 1]
    }
}

/// Lays out `<cls> text <sep> target <eos>`, truncating text from the right
/// when the sequence would exceed `max_len`. Target tokens are never cut.
pub fn build_target_aware_input(
    text: &[u32],
    target: &[u32],
    max_len: usize,
    specials: &SpecialTokens,
) -> Result<TargetAwareInput> {
    if max_len < 4 {
        return Err(Error::InvalidConfig(format!("max_len must be at least 4, got {max_len}")));
    }
    if target.len() > max_len - 3 {
        return Err(Error::TargetTooLong { target_len: target.len(), max_len });
    }
    let text_budget = max_len - 3 - target.len();
    let text = &text[..text.len().min(text_budget)];
    let mut ids = Vec::with_capacity(text.len() + target.len() + 3);
    ids.push(specials.cls);
    ids.extend_from_slice(text);
    ids.push(specials.sep);
    ids.extend_from_slice(target);
    ids.push(specials.eos);
    let attention_mask = alloc::vec![1; ids.len()];
    Ok(TargetAwareInput { ids, attention_mask, cls_position: 0 })
}
