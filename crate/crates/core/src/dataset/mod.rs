//! Meme manifests and the corpus tools built on them.
//!
//! A manifest is UTF-8 JSON Lines with one [`MemeRecord`] per line. Blank
//! lines are skipped; unknown keys are rejected.

mod agreement;
mod split;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::Category;

pub use agreement::{annotator_summary, fleiss_kappa, AnnotatorScores, AnnotatorSummary, RatingsMatrix};
pub use split::{split, split_records, Split};
pub use stats::{compute_stats, CategoryStats, DatasetStats};

/// How the caption relates to the text overlaid on the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TextKind {
    Different,
    Same,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemeRecord {
    pub id: String,
    pub category: Category,
    pub text_kind: TextKind,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub overlay: String,
    pub image_ref: String,
    #[serde(default)]
    pub misogyny_label: Option<bool>,
}

impl MemeRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("record id is empty".into()));
        }
        if self.text_kind == TextKind::Image && !(self.caption.is_empty() && self.overlay.is_empty()) {
            return Err(Error::Validation(format!("record {}: text_kind Image must have no caption or overlay", self.id)));
        }
        Ok(())
    }

    /// Caption and overlay joined into the text the model reads.
    ///
    /// `Same` memes repeat one string, so only the caption is used.
    pub fn meme_text(&self) -> String {
        match self.text_kind {
            TextKind::Image => String::new(),
            TextKind::Same => self.caption.clone(),
            TextKind::Different => match (self.caption.is_empty(), self.overlay.is_empty()) {
                (false, false) => format!("{} {}", self.caption, self.overlay),
                (false, true) => self.caption.clone(),
                _ => self.overlay.clone(),
            },
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<MemeRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: MemeRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        record.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
            other => other,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Validation(format!("line {line_no}: duplicate id {}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<MemeRecord>> {
    parse_manifest(&fs::read_to_string(path)?)
}

pub fn manifest_to_string(records: &[MemeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[MemeRecord]) -> Result<()> {
    fs::write(path, manifest_to_string(records))?;
    Ok(())
}
