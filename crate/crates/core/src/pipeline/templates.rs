//! Prompt templates with `<name>` placeholders, loaded from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/default.toml");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("template `{template}` lacks placeholder <{placeholder}>")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Template {
    #[serde(default)]
    pub required: Vec<String>,
    pub system: String,
    pub user: String,
}

/// A rendered system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn render(&self, values: &[(&str, &str)]) -> Prompt {
        Prompt {
            system: fill(self.system.trim(), values),
            user: fill(self.user.trim(), values),
        }
    }

    fn check(&self, name: &str) -> Result<(), TemplateError> {
        for p in &self.required {
            let tag = format!("<{p}>");
            if !self.system.contains(&tag) && !self.user.contains(&tag) {
                return Err(TemplateError::MissingPlaceholder {
                    template: name.to_string(),
                    placeholder: p.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Single left-to-right pass: substituted text is never rescanned.
fn fill(text: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = tail.find('>').and_then(|close| {
            let name = &tail[1..close];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplates {
    pub translate: Template,
    pub debug: Template,
    pub insert_spec: Template,
    pub sft: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl PromptTemplates {
    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let t: PromptTemplates = toml::from_str(text)?;
        for (name, tpl) in t.named() {
            tpl.check(name)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn named(&self) -> BTreeMap<&'static str, &Template> {
        BTreeMap::from([
            ("translate", &self.translate),
            ("debug", &self.debug),
            ("insert_spec", &self.insert_spec),
            ("sft", &self.sft),
        ])
    }
}
