//! Flat `key = value` run configuration. Blank lines and lines starting
//! with `#` are ignored. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmfuse::encoders::EncoderConfig;
use mmfuse::fusion::{BlendConfig, DEFAULT_CONV_WIDTH};
use mmfuse::model::{FeatureMode, Modality, ModelConfig, TrainConfig, DEFAULT_INSTRUCTION};
use mmfuse::rationale::SUPPORTED_SHOTS;
use mmfuse::{Error, Result};

use crate::io::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageSource {
    /// Files hold raw patch grids.
    Patches,
    /// Files hold precomputed image features `h_i`.
    Features,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub d_h: usize,
    /// True when `d_h` was set explicitly rather than defaulted.
    pub d_h_set: bool,
    pub vocab: usize,
    pub max_len: usize,
    pub raw_dim: usize,
    pub conv_width: usize,
    pub omega: f64,
    pub alpha: f64,
    pub feature: FeatureMode,
    pub modality: Modality,
    pub instruction: String,
    pub lr: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub manifest: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub image_source: ImageSource,
    pub checkpoint: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub fewshot_pool: Option<PathBuf>,
    pub llm_base_url: String,
    pub llm_model: String,
    pub llm_timeout_secs: u64,
    pub llm_max_tokens: u32,
    pub shots: usize,
    pub workers: usize,
    pub backend: BackendKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        RunConfig {
            seed: 0,
            d_h: enc.d_h,
            d_h_set: false,
            vocab: enc.vocab,
            max_len: enc.max_len,
            raw_dim: enc.raw_dim,
            conv_width: DEFAULT_CONV_WIDTH,
            omega: BlendConfig::default().omega(),
            alpha: BlendConfig::default().alpha(),
            feature: FeatureMode::Blended,
            modality: Modality::Multimodal,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            lr: TrainConfig::default().lr,
            epochs: TrainConfig::default().epochs,
            lambda: TrainConfig::default().lambda,
            manifest: None,
            embeddings_dir: None,
            image_source: ImageSource::Patches,
            checkpoint: None,
            templates: None,
            report_dir: None,
            fewshot_pool: None,
            llm_base_url: "http://127.0.0.1:8000".into(),
            llm_model: "default".into(),
            llm_timeout_secs: 30,
            llm_max_tokens: 256,
            shots: 0,
            workers: 4,
            backend: BackendKind::Stub,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Validation(format!("config key {key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_relative(key, value, None)
    }

    /// Like [`RunConfig::set`], resolving relative path values against `base`.
    fn set_relative(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = || Some(base.map_or_else(|| PathBuf::from(value), |b| b.join(value)));
        match key {
            "seed" => self.seed = parse(key, value)?,
            "d_h" => {
                self.d_h = parse(key, value)?;
                self.d_h_set = true;
            }
            "vocab" => self.vocab = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "raw_dim" => self.raw_dim = parse(key, value)?,
            "conv_width" => self.conv_width = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "feature" => {
                self.feature = match value {
                    "blended" => FeatureMode::Blended,
                    "pooled" => FeatureMode::Pooled,
                    _ => return Err(Error::Validation(format!("feature must be blended or pooled, got {value:?}"))),
                }
            }
            "modality" => {
                self.modality = match value {
                    "multimodal" => Modality::Multimodal,
                    "text_only" => Modality::TextOnly,
                    _ => return Err(Error::Validation(format!("modality must be multimodal or text_only, got {value:?}"))),
                }
            }
            "instruction" => self.instruction = value.to_string(),
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "manifest" => self.manifest = path(),
            "embeddings_dir" => self.embeddings_dir = path(),
            "image_source" => {
                self.image_source = match value {
                    "patches" => ImageSource::Patches,
                    "features" => ImageSource::Features,
                    _ => return Err(Error::Validation(format!("image_source must be patches or features, got {value:?}"))),
                }
            }
            "checkpoint" => self.checkpoint = path(),
            "templates" => self.templates = path(),
            "report_dir" => self.report_dir = path(),
            "fewshot_pool" => self.fewshot_pool = path(),
            "llm.base_url" => self.llm_base_url = value.to_string(),
            "llm.model" => self.llm_model = value.to_string(),
            "llm.timeout_secs" => self.llm_timeout_secs = parse(key, value)?,
            "llm.max_tokens" => self.llm_max_tokens = parse(key, value)?,
            "shots" => self.shots = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "backend" => {
                self.backend = match value {
                    "stub" => BackendKind::Stub,
                    "http" => BackendKind::Http,
                    _ => return Err(Error::Validation(format!("backend must be stub or http, got {value:?}"))),
                }
            }
            _ => return Err(Error::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    #[cfg(test)]
    pub fn parse_str(&mut self, text: &str) -> Result<()> {
        self.parse_relative(text, None)
    }

    fn parse_relative(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
            self.set_relative(k.trim(), v.trim(), base)?;
        }
        Ok(())
    }

    /// Defaults, then the file at `path`, then `overrides` in order.
    /// Relative paths inside the file are taken relative to the file.
    pub fn load(path: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(p) = path {
            cfg.parse_relative(&read_text(p)?, p.parent())?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.d_h == 0 || self.max_len == 0 || self.raw_dim == 0 || self.conv_width == 0 {
            return bad("d_h, max_len, raw_dim and conv_width must be positive".into());
        }
        if self.vocab < 2 {
            return bad(format!("vocab must be at least 2, got {}", self.vocab));
        }
        BlendConfig::new(self.omega, self.alpha)?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !SUPPORTED_SHOTS.contains(&self.shots) {
            return bad(format!("shots must be 0, 2 or 5, got {}", self.shots));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            encoder: EncoderConfig {
                d_h: self.d_h,
                vocab: self.vocab,
                max_len: self.max_len,
                raw_dim: self.raw_dim,
                seed: self.seed,
            },
            conv_width: self.conv_width,
            blend: BlendConfig::new(self.omega, self.alpha)?,
            feature: self.feature,
            modality: self.modality,
            instruction: self.instruction.clone(),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, lr: self.lr, lambda: self.lambda }
    }

    /// Every key with its current value, in the file format.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        BTreeMap::from([
            ("seed", self.seed.to_string()),
            ("d_h", self.d_h.to_string()),
            ("vocab", self.vocab.to_string()),
            ("max_len", self.max_len.to_string()),
            ("raw_dim", self.raw_dim.to_string()),
            ("conv_width", self.conv_width.to_string()),
            ("omega", self.omega.to_string()),
            ("alpha", self.alpha.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lambda", self.lambda.to_string()),
            ("manifest", opt(&self.manifest)),
            ("checkpoint", opt(&self.checkpoint)),
            ("report_dir", opt(&self.report_dir)),
            ("llm.base_url", self.llm_base_url.clone()),
            ("shots", self.shots.to_string()),
            ("workers", self.workers.to_string()),
        ])
    }
}
