use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const DETECTION: &str = include_str!("../../../../templates/detection.txt");
const REASONING: &str = include_str!("../../../../templates/reasoning.txt");

/// Plain text with `{name}` placeholders, `name` being lowercase ASCII and
/// underscores. Any other brace is literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        PromptTemplate { name: name.into(), body: body.into() }
    }

    pub fn detection() -> Self {
        PromptTemplate::new("detection", DETECTION)
    }

    pub fn reasoning() -> Self {
        PromptTemplate::new("reasoning", REASONING)
    }

    /// Loads `path`, naming the template after the file stem.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(PromptTemplate::new(name, fs::read_to_string(path)?))
    }

    pub fn placeholders(&self) -> Vec<&str> {
        pieces(&self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(n) => Some(n),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Single-pass substitution; bound values are never rescanned.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.body.len());
        for p in pieces(&self.body) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(n) => {
                    let v = bindings.iter().find(|(k, _)| *k == n).ok_or_else(|| Error::Render(n.to_string()))?;
                    out.push_str(v.1);
                }
            }
        }
        Ok(out)
    }
}
