//! Valence/arousal/dominance supervision from an NRC-VAD style lexicon.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Valence, arousal and dominance, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VadTriple {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl VadTriple {
    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Result<Self> {
        let t = Self { valence, arousal, dominance };
        for (name, v) in [("valence", valence), ("arousal", arousal), ("dominance", dominance)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::VadOutOfRange { what: name.to_string(), value: v });
            }
        }
        Ok(t)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    fn mean(items: &[VadTriple]) -> VadTriple {
        let n = items.len() as f64;
        let sum = |f: fn(&VadTriple) -> f64| items.iter().map(f).sum::<f64>() / n;
        VadTriple { valence: sum(|t| t.valence), arousal: sum(|t| t.arousal), dominance: sum(|t| t.dominance) }
    }
}

/// Term → VAD table, keyed by lowercased term.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, VadTriple>,
}

/// A line of the lexicon text that could not be used.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconParseError {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

impl core::fmt::Display for LexiconParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "lexicon line {}: {}", self.line, self.reason)
    }
}

impl core::error::Error for LexiconParseError {}

impl Lexicon {
    /// Parses `term V A D` rows. Fields may be tab- or space-separated; the
    /// last three fields are the scores and everything before them is the
    /// term, so multiword terms are allowed. A leading `Word Valence ...`
    /// header line is skipped. Blank lines are ignored.
    pub fn parse(text: &str) -> core::result::Result<Self, LexiconParseError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = if line.contains('\t') {
                line.split('\t').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            if i == 0 && is_header(&fields) {
                continue;
            }
            if fields.len() < 4 {
                return Err(LexiconParseError {
                    line: i + 1,
                    reason: format!("expected term and three scores, got {line:?}"),
                });
            }
            let split = fields.len() - 3;
            let term = fields[..split].join(" ").to_lowercase();
            let mut scores = [0.0; 3];
            for (slot, field) in scores.iter_mut().zip(&fields[split..]) {
                *slot = field.parse::<f64>().map_err(|_| LexiconParseError {
                    line: i + 1,
                    reason: format!("score {field:?} is not a number"),
                })?;
            }
            let triple = VadTriple::new(scores[0], scores[1], scores[2])
                .map_err(|e| LexiconParseError { line: i + 1, reason: e.to_string() })?;
            entries.insert(term, triple);
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, VadTriple)>) -> Self {
        Self { entries: entries.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact match on the lowercased term.
    pub fn lookup(&self, term: &str) -> Result<VadTriple> {
        self.entries.get(&term.trim().to_lowercase()).copied().ok_or_else(|| Error::UnknownTerm(term.to_string()))
    }

    /// Lookup with the phrase fallback: when a multiword phrase is absent,
    /// intensity adverbs are dropped and the remaining words found in the
    /// lexicon are averaged component-wise. Returns the triple and the terms
    /// that produced it.
    pub fn lookup_phrase(&self, phrase: &str) -> Result<(VadTriple, Vec<String>)> {
        let key = phrase.trim().to_lowercase();
        if let Some(t) = self.entries.get(&key) {
            return Ok((*t, alloc::vec![key]));
        }
        let words: Vec<&str> = key.split_whitespace().filter(|w| !INTENSIFIERS.contains(w)).collect();
        let found: Vec<(String, VadTriple)> =
            words.iter().filter_map(|w| self.entries.get(*w).map(|t| (w.to_string(), *t))).collect();
        if found.is_empty() {
            return Err(Error::UnknownTerm(phrase.to_string()));
        }
        let triples: Vec<VadTriple> = found.iter().map(|(_, t)| *t).collect();
        Ok((VadTriple::mean(&triples), found.into_iter().map(|(w, _)| w).collect()))
    }
}

/// Intensity adverbs stripped by the phrase fallback.
pub const INTENSIFIERS: [&str; 12] = [
    "very",
    "moderate",
    "moderately",
    "slightly",
    "extremely",
    "somewhat",
    "mildly",
    "highly",
    "strongly",
    "quite",
    "fairly",
    "rather",
];

fn is_header(fields: &[&str]) -> bool {
    let first = fields.first().map(|f| f.to_ascii_lowercase());
    matches!(first.as_deref(), Some("word" | "term")) && fields.iter().skip(1).all(|f| f.parse::<f64>().is_err())
}

/// How one sentiment label obtains its VAD triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    /// Look up this term (with the phrase fallback).
    Term(String),
    /// Use this explicit `[V, A, D]` triple.
    Triple([f64; 3]),
}

/// Sentiment label → VAD triple, total over a schema's sentiment labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentVadMap {
    entries: BTreeMap<String, MapEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub triple: VadTriple,
    /// Lexicon terms used, or `"explicit"`.
    pub provenance: String,
}

impl SentimentVadMap {
    /// Resolves every schema sentiment label. Labels without an entry in
    /// `bindings` are looked up by their own name. All labels that cannot be
    /// resolved are reported together.
    pub fn build(labels: &[String], bindings: &BTreeMap<String, Binding>, lexicon: &Lexicon) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut unmapped = Vec::new();
        for label in labels {
            let binding = bindings
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(label))
                .map(|(_, b)| b.clone())
                .unwrap_or_else(|| Binding::Term(label.clone()));
            let entry = match binding {
                Binding::Triple([v, a, d]) => {
                    let triple = VadTriple::new(v, a, d).map_err(|_| Error::VadOutOfRange {
                        what: format!("binding for {label}"),
                        value: [v, a, d].into_iter().find(|x| !(0.0..=1.0).contains(x)).unwrap_or(f64::NAN),
                    })?;
                    Some(MapEntry { triple, provenance: "explicit".into() })
                }
                Binding::Term(term) => lexicon
                    .lookup_phrase(&term)
                    .ok()
                    .map(|(triple, terms)| MapEntry { triple, provenance: terms.join("+") }),
            };
            match entry {
                Some(e) => {
                    entries.insert(label.clone(), e);
                }
                None => unmapped.push(label.clone()),
            }
        }
        if !unmapped.is_empty() {
            return Err(Error::UnmappedSentiment { labels: unmapped });
        }
        Ok(Self { entries })
    }

    pub fn from_triples(entries: impl IntoIterator<Item = (String, VadTriple)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(k, triple)| (k, MapEntry { triple, provenance: "explicit".into() }))
                .collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &MapEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn vad_of_sentiment(&self, label: &str) -> Result<VadTriple> {
        self.entries
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(label.trim()))
            .map(|(_, e)| e.triple)
            .ok_or_else(|| Error::UnmappedSentiment { labels: alloc::vec![label.to_string()] })
    }
}

/// Default label → term bindings for the built-in sentiment schemas. Every
/// label is bound to a lexicon term; no triple is hard-coded.
pub fn default_bindings() -> BTreeMap<String, Binding> {
    [
        ("very negative", "very negative"),
        ("moderate negative", "moderate negative"),
        ("slightly negative", "slightly negative"),
        ("neutral", "neutral"),
        ("slightly positive", "slightly positive"),
        ("moderate positive", "moderate positive"),
        ("very positive", "very positive"),
        ("positive", "positive"),
        ("negative", "negative"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), Binding::Term(v.to_string())))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Fixture rows for tests only; "positive" is the published triple, the
    // others are arbitrary in-range values.
    const FIXTURE: &str = "Word\tValence\tArousal\tDominance\n\
        positive\t0.959\t0.510\t0.855\n\
        negative\t0.120\t0.600\t0.300\n\
        neutral\t0.500\t0.200\t0.450\n\
        very\t0.600\t0.550\t0.600\n";

    #[test]
    fn parses_published_positive_row() {
        let lex = Lexicon::parse("positive 0.959 0.510 0.855").unwrap();
        let t = lex.lookup("positive").unwrap();
        assert_eq!(t, VadTriple { valence: 0.959, arousal: 0.510, dominance: 0.855 });
        assert_eq!(lex.lookup("POSITIVE ").unwrap(), t);
    }

    #[test]
    fn header_is_skipped_and_terms_lowercased() {
        let lex = Lexicon::parse(FIXTURE).unwrap();
        assert_eq!(lex.len(), 4);
        assert_eq!(lex.lookup("Negative").unwrap().valence, 0.120);
    }

    #[test]
    fn empty_lexicon_fails_lookups() {
        let lex = Lexicon::parse("").unwrap();
        assert!(lex.is_empty());
        assert_eq!(lex.lookup("positive").unwrap_err(), Error::UnknownTerm("positive".into()));
    }

    #[test]
    fn malformed_and_out_of_range_rows_are_fatal() {
        let err = Lexicon::parse("good 0.9 0.1 0.2\nbad 0.5 x 0.2").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Lexicon::parse("good 0.9 0.1\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = Lexicon::parse("a 0.1 0.2 0.3\nhot 1.2 0.1 0.2").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn phrase_fallback_strips_intensifier() {
        let lex = Lexicon::parse(FIXTURE).unwrap();
        // "very negative" is absent; "very" is an intensifier and dropped, so
        // the average covers only "negative".
        let (t, terms) = lex.lookup_phrase("very negative").unwrap();
        assert_eq!(terms, ["negative"]);
        assert_eq!(t, lex.lookup("negative").unwrap());
        // A two-content-word phrase averages both rows.
        let (t, _) = lex.lookup_phrase("positive neutral").unwrap();
        assert_abs_diff_eq!(t.valence, (0.959 + 0.5) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.arousal, (0.510 + 0.2) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.dominance, (0.855 + 0.45) / 2.0, epsilon = 1e-12);
        assert!(lex.lookup_phrase("extremely").is_err());
    }

    #[test]
    fn map_is_total_and_monotone_on_fixture() {
        let lex = Lexicon::parse(FIXTURE).unwrap();
        let labels: Vec<String> = crate::corpus::PSTANCE_SENTIMENTS.iter().map(|s| s.to_string()).collect();
        let map = SentimentVadMap::build(&labels, &default_bindings(), &lex).unwrap();
        for l in &labels {
            let t = map.vad_of_sentiment(l).unwrap();
            assert!(t.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let pos = map.vad_of_sentiment("moderate positive").unwrap().valence;
        let neg = map.vad_of_sentiment("very negative").unwrap().valence;
        assert!(pos > neg);
        assert!(map.vad_of_sentiment("ecstatic").is_err());
    }

    #[test]
    fn unmapped_labels_are_listed() {
        let lex = Lexicon::parse("positive 0.959 0.510 0.855").unwrap();
        let labels = ["positive".to_string(), "angry".to_string(), "sad".to_string()];
        let err = SentimentVadMap::build(&labels, &BTreeMap::new(), &lex).unwrap_err();
        assert_eq!(err, Error::UnmappedSentiment { labels: alloc::vec!["angry".into(), "sad".into()] });
    }

    #[test]
    fn explicit_triples_are_validated() {
        let lex = Lexicon::default();
        let mut b = BTreeMap::new();
        b.insert("x".to_string(), Binding::Triple([0.1, 0.2, 0.3]));
        let map = SentimentVadMap::build(&["x".to_string()], &b, &lex).unwrap();
        assert_eq!(map.vad_of_sentiment("x").unwrap().dominance, 0.3);
        b.insert("x".to_string(), Binding::Triple([0.1, 1.2, 0.3]));
        assert!(SentimentVadMap::build(&["x".to_string()], &b, &lex).is_err());
    }
}
