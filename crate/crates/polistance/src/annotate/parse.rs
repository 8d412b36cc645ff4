//! Reply parsers for the stance and sentiment clients.

use polistance_core::corpus::DatasetSchema;

pub const ZERO_SHOT_LABELS: [&str; 3] = ["FAVOR", "AGAINST", "NONE"];

fn is_trim_char(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '…')
}

/// Strips surrounding whitespace, punctuation and quotes.
pub fn trim_reply(reply: &str) -> &str {
    reply.trim_matches(is_trim_char)
}

/// Trims punctuation, uppercases and accepts exactly FAVOR, AGAINST or NONE.
pub fn parse_stance(reply: &str) -> Option<&'static str> {
    let word = trim_reply(reply).to_uppercase();
    ZERO_SHOT_LABELS.into_iter().find(|l| *l == word)
}

fn normalize(s: &str) -> String {
    s.split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn at_word_boundary(hay: &str, start: usize, end: usize) -> bool {
    let before = hay[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
    let after = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before && after
}

/// Maps a free-text reply to a schema sentiment label. An exact match of
/// the trimmed reply wins. Otherwise every label and sentiment synonym that
/// appears as a whole phrase is collected, phrases covered by a longer
/// match are dropped, and the reply parses only if the rest agree on one
/// label.
pub fn parse_sentiment(reply: &str, schema: &DatasetSchema) -> Option<String> {
    let hay = normalize(trim_reply(reply));
    if let Some(l) = schema.normalize_sentiment(&hay) {
        return Some(l);
    }
    let mut phrases: Vec<(String, String)> =
        schema.sentiment_labels.iter().map(|l| (normalize(l), l.clone())).collect();
    for (syn, canonical) in &schema.synonyms {
        if let Some(l) = schema.sentiment_labels.iter().find(|l| l.eq_ignore_ascii_case(canonical)) {
            phrases.push((normalize(syn), l.clone()));
        }
    }
    let mut spans: Vec<(usize, usize, &str)> = Vec::new();
    for (phrase, label) in &phrases {
        if phrase.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = hay[from..].find(phrase.as_str()) {
            let start = from + pos;
            let end = start + phrase.len();
            if at_word_boundary(&hay, start, end) {
                spans.push((start, end, label));
            }
            from = start + 1;
            while !hay.is_char_boundary(from) {
                from += 1;
            }
        }
    }
    let kept: Vec<&str> = spans
        .iter()
        .filter(|(s, e, _)| !spans.iter().any(|(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s)))
        .map(|(_, _, l)| *l)
        .collect();
    let first = *kept.first()?;
    kept.iter().all(|l| *l == first).then(|| first.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stance_replies() {
        assert_eq!(parse_stance("AGAINST"), Some("AGAINST"));
        assert_eq!(parse_stance("favor."), Some("FAVOR"));
        assert_eq!(parse_stance("  \"None\"!\n"), Some("NONE"));
        assert_eq!(parse_stance("It supports the target"), None);
        assert_eq!(parse_stance("FAVOR AGAINST"), None);
        assert_eq!(parse_stance(""), None);
    }

    #[test]
    fn sentiment_longest_match() {
        let s = DatasetSchema::p_stance();
        assert_eq!(parse_sentiment("moderate positive", &s).as_deref(), Some("moderate positive"));
        assert_eq!(parse_sentiment("Sentiment: Moderate-Positive.", &s).as_deref(), Some("moderate positive"));
        assert_eq!(parse_sentiment("I think it is neutral overall", &s).as_deref(), Some("neutral"));
        assert_eq!(parse_sentiment("very negative or slightly positive", &s), None);
        assert_eq!(parse_sentiment("The author seems upset about the policy.", &s), None);
        assert_eq!(parse_sentiment("unneutral", &s), None);
    }
}
