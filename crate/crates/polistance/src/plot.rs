//! Stance-by-sentiment count tables and grouped bar charts per target.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use polistance_core::corpus::{DatasetSchema, Example};

use crate::error::{Error, Result};

/// Counts keyed by `(target, stance, sentiment)` schema indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentimentCounts {
    pub targets: Vec<String>,
    pub stances: Vec<String>,
    pub sentiments: Vec<String>,
    pub counts: BTreeMap<(usize, usize, usize), usize>,
}

impl SentimentCounts {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, target: usize, stance: usize, sentiment: usize) -> usize {
        self.counts.get(&(target, stance, sentiment)).copied().unwrap_or(0)
    }
}

/// Tallies examples. Every example needs a sentiment label.
pub fn count_sentiments(examples: &[Example], schema: &DatasetSchema) -> Result<SentimentCounts> {
    let missing = examples.iter().filter(|e| e.sentiment.is_none()).count();
    if missing > 0 {
        return Err(Error::Usage(format!(
            "{missing} of {} examples have no sentiment label; run `polistance annotate` first",
            examples.len()
        )));
    }
    let mut targets: Vec<String> = schema.targets.clone();
    for e in examples {
        if !targets.contains(&e.target) {
            targets.push(e.target.clone());
        }
    }
    let mut out = SentimentCounts {
        targets,
        stances: schema.stance_labels.clone(),
        sentiments: schema.sentiment_labels.clone(),
        counts: BTreeMap::new(),
    };
    for e in examples {
        let t = out.targets.iter().position(|t| *t == e.target).unwrap_or_default();
        let s = schema.encode_stance(&e.stance)?;
        let m = schema.encode_sentiment(e.sentiment.as_deref().unwrap_or_default())?;
        *out.counts.entry((t, s, m)).or_default() += 1;
    }
    Ok(out)
}

/// `target,stance,sentiment,count` rows for every observed combination,
/// in schema order.
pub fn counts_csv(counts: &SentimentCounts) -> String {
    let quote =
        |s: &str| if s.contains([',', '"']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
    let mut out = String::from("target,stance,sentiment,count\n");
    for (&(t, s, m), &c) in &counts.counts {
        let _ = writeln!(
            out,
            "{},{},{},{c}",
            quote(&counts.targets[t]),
            quote(&counts.stances[s]),
            quote(&counts.sentiments[m])
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// One panel per target with sentiment groups on the x axis and a bar per
/// stance inside each group.
pub fn grouped_bars_svg(counts: &SentimentCounts, title: &str) -> String {
    let targets: Vec<usize> = (0..counts.targets.len()).filter(|&t| counts.counts.keys().any(|k| k.0 == t)).collect();
    let (panel_w, panel_h, margin) = (560.0, 260.0, 50.0);
    let bar_w = 14.0;
    let groups = counts.sentiments.len().max(1) as f64;
    let width = panel_w + 2.0 * margin;
    let height = margin + targets.len() as f64 * (panel_h + margin) + 30.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (s, label) in counts.stances.iter().enumerate() {
        let x = margin + s as f64 * 110.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#,
            height - 22.0,
            PALETTE[s % PALETTE.len()]
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 14.0, height - 13.0, escape(label));
    }
    for (row, &t) in targets.iter().enumerate() {
        let top = margin + row as f64 * (panel_h + margin);
        let base = top + panel_h - 40.0;
        let plot_h = panel_h - 60.0;
        let max = (0..counts.stances.len())
            .flat_map(|s| (0..counts.sentiments.len()).map(move |m| (s, m)))
            .map(|(s, m)| counts.get(t, s, m))
            .max()
            .unwrap_or(0)
            .max(1) as f64;
        let _ = writeln!(svg, r#"<g class="panel" data-target="{}">"#, escape(&counts.targets[t]));
        let _ = writeln!(
            svg,
            r#"<text x="{margin}" y="{}" font-size="12">{}</text>"#,
            top + 10.0,
            escape(&counts.targets[t])
        );
        let _ =
            writeln!(svg, r#"<line x1="{margin}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, margin + panel_w);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, margin - 4.0, base - plot_h, max);
        let group_w = panel_w / groups;
        for (m, sentiment) in counts.sentiments.iter().enumerate() {
            let gx = margin + m as f64 * group_w;
            let start = gx + (group_w - bar_w * counts.stances.len() as f64) / 2.0;
            for s in 0..counts.stances.len() {
                let c = counts.get(t, s, m);
                let h = plot_h * c as f64 / max;
                let x = start + s as f64 * bar_w;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w}" height="{h:.2}" fill="{}"><title>{c}</title></rect>"#,
                    base - h,
                    PALETTE[s % PALETTE.len()]
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                gx + group_w / 2.0,
                base + 14.0,
                escape(sentiment)
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use polistance_core::corpus::Split;

    #[test]
    fn single_example_gives_single_row() {
        let schema = DatasetSchema::p_stance();
        let ex = Example::new(0, "x", "Donald Trump", "AGAINST", Some("very negative".into()), Split::Train).unwrap();
        let counts = count_sentiments(&[ex], &schema).unwrap();
        assert_eq!(counts_csv(&counts), "target,stance,sentiment,count\nDonald Trump,AGAINST,very negative,1\n");
    }

    #[test]
    fn missing_sentiment_points_to_annotate() {
        let schema = DatasetSchema::p_stance();
        let ex = Example::new(0, "x", "Donald Trump", "AGAINST", None, Split::Train).unwrap();
        let err = count_sentiments(&[ex], &schema).unwrap_err();
        assert!(err.to_string().contains("annotate"));
    }
}
