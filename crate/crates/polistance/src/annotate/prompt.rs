//! Prompt templates with `[Target]`, `[Text]` and `[Labels]` placeholders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Values substituted into a template.
#[derive(Clone, Copy, Debug, Default)]
pub struct Fill<'a> {
    pub target: &'a str,
    pub text: &'a str,
    pub labels: &'a str,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Part of every cache key; change it whenever the wording changes.
    pub id: String,
    /// False for templates that only approximate an unpublished original.
    #[serde(default = "yes")]
    pub canonical: bool,
    pub system: String,
    pub user: String,
}

fn yes() -> bool {
    true
}

const ZERO_SHOT_SYSTEM: &str = include_str!("../../templates/zero_shot_system.txt");
const ZERO_SHOT_USER: &str = include_str!("../../templates/zero_shot_user.txt");
const SENTIMENT_DEFAULT: &str = include_str!("../../templates/sentiment_seven_class.json");

/// Substitutes placeholders in one pass, so placeholder-like text inside a
/// value is left alone.
pub fn substitute(template: &str, fill: &Fill<'_>) -> String {
    let mut out = String::with_capacity(template.len() + fill.text.len() + fill.target.len());
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = [("[Target]", fill.target), ("[Text]", fill.text), ("[Labels]", fill.labels)]
            .into_iter()
            .find(|(p, _)| tail.starts_with(p));
        match hit {
            Some((p, v)) => {
                out.push_str(v);
                rest = &tail[p.len()..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplate {
    /// The zero-shot stance baseline prompt.
    pub fn zero_shot_stance() -> Self {
        Self {
            id: "zero-shot-stance-v1".into(),
            canonical: true,
            system: ZERO_SHOT_SYSTEM.into(),
            user: ZERO_SHOT_USER.into(),
        }
    }

    /// The bundled seven-class sentiment instruction. It is not canonical:
    /// the original instruction text is unpublished.
    pub fn sentiment_default() -> Self {
        serde_json::from_str(SENTIMENT_DEFAULT).expect("bundled sentiment template is valid JSON")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("invalid template: {e}")))
    }

    pub fn render(&self, fill: &Fill<'_>) -> Vec<ChatMessage> {
        vec![
            ChatMessage { role: Role::System, content: substitute(&self.system, fill) },
            ChatMessage { role: Role::User, content: substitute(&self.user, fill) },
        ]
    }
}

/// The rendered zero-shot prompt as one document, for golden comparisons.
pub fn render_zero_shot_document(target: &str, text: &str) -> String {
    let msgs = PromptTemplate::zero_shot_stance().render(&Fill { target, text, labels: "" });
    format!("System Prompt:\n{}\nUser prompt:\n{}\n", msgs[0].content, msgs[1].content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_does_not_recurse_into_values() {
        let fill = Fill { target: "[Text]", text: "a [Target] b", labels: "" };
        assert_eq!(substitute("T=[Target] X=[Text] [Other]", &fill), "T=[Text] X=a [Target] b [Other]");
    }

    #[test]
    fn bundled_templates_load() {
        let s = PromptTemplate::sentiment_default();
        assert!(!s.canonical);
        assert!(s.system.contains("[Labels]"));
        assert!(PromptTemplate::zero_shot_stance().canonical);
    }
}
