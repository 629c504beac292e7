//! File helpers that keep the offending path in error messages.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use mmfuse::dataset::MemeRecord;
use mmfuse::{Error, Result};

fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(dir, e))?;
    }
    fs::write(path, text).map_err(|e| with_path(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn load_manifest(path: &Path) -> Result<Vec<MemeRecord>> {
    mmfuse::dataset::parse_manifest(&read_text(path)?)
}

/// `image_ref` as given when absolute, else relative to `embeddings_dir`
/// or, failing that, to the manifest's directory.
pub fn resolve_image(record: &MemeRecord, manifest: &Path, embeddings_dir: Option<&Path>) -> PathBuf {
    let r = Path::new(&record.image_ref);
    if r.is_absolute() {
        return r.to_path_buf();
    }
    let base = embeddings_dir.map(Path::to_path_buf).unwrap_or_else(|| manifest.parent().unwrap_or(Path::new("")).to_path_buf());
    base.join(r)
}

pub fn load_image(path: &Path) -> Result<mmfuse::Matrix> {
    let bytes = fs::read(path).map_err(|e| with_path(path, e))?;
    mmfuse::encoders::decode_matrix(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format { offset, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}
