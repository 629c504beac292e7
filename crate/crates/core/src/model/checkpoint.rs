//! `MMH1` checkpoints: magic, `u32` block count, then per block a `u32`
//! name length followed by the UTF-8 name and one `MME1` matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::encoders::{encode_matrix, EncoderConfig, EncoderParams, AttentionProj, Reader};
use crate::error::{Error, Result};
use crate::fusion::{AlignmentParams, BlendConfig};
use crate::heads::HeadParams;
use crate::numkernel::{ConvKernel, Matrix};

use super::{FeatureMode, Modality, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMH1";

const META_CONFIG: &str = "meta.config";
const META_INSTRUCTION: &str = "meta.instruction_utf8";
const EMBEDDING: &str = "align.embedding";

fn format_err(message: impl Into<String>) -> Error {
    Error::Format { offset: 0, message: message.into() }
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.cfg;
        let e = &c.encoder;
        let meta = Matrix::row_vector(&[
            e.d_h as f64,
            e.vocab as f64,
            e.max_len as f64,
            e.raw_dim as f64,
            (e.seed >> 32) as f64,
            (e.seed & 0xffff_ffff) as f64,
            c.conv_width as f64,
            c.blend.omega(),
            c.blend.alpha(),
            match c.feature {
                FeatureMode::Pooled => 0.0,
                FeatureMode::Blended => 1.0,
            },
            match c.modality {
                Modality::Multimodal => 0.0,
                Modality::TextOnly => 1.0,
            },
            self.head.threshold,
        ]);
        let instruction =
            Matrix::row_vector(&c.instruction.bytes().map(f64::from).collect::<Vec<_>>());

        let mut blocks: Vec<(String, &Matrix)> = vec![(META_CONFIG.into(), &meta)];
        if !c.instruction.is_empty() {
            blocks.push((META_INSTRUCTION.into(), &instruction));
        }
        blocks.extend(self.trainable_tensors());
        blocks.push((EMBEDDING.into(), &self.align.embedding));

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, m) in blocks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            encode_matrix(m, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let count = r.u32("block count")?;
        let mut blocks = BTreeMap::new();
        for _ in 0..count {
            let at = r.offset();
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "block name")?)
                .map_err(|_| Error::Format { offset: at, message: "block name is not UTF-8".into() })?
                .to_string();
            let m = r.matrix()?;
            if blocks.insert(name.clone(), m).is_some() {
                return Err(Error::Format { offset: at, message: format!("duplicate block {name}") });
            }
        }
        if !r.at_end() {
            return Err(r.fail("trailing bytes after last block"));
        }
        Model::from_blocks(blocks)
    }

    fn from_blocks(mut blocks: BTreeMap<String, Matrix>) -> Result<Model> {
        let mut take = |name: &str| blocks.remove(name).ok_or_else(|| format_err(format!("missing block {name}")));
        let meta = take(META_CONFIG)?;
        let m = meta.data();
        if m.len() != 12 {
            return Err(format_err("meta.config must hold 12 values"));
        }
        let count = |v: f64, what: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(format_err(format!("{what} = {v} is not a count")))
            }
        };
        let encoder_cfg = EncoderConfig {
            d_h: count(m[0], "d_h")?,
            vocab: count(m[1], "vocab")?,
            max_len: count(m[2], "max_len")?,
            raw_dim: count(m[3], "raw_dim")?,
            seed: ((count(m[4], "seed")? as u64) << 32) | count(m[5], "seed")? as u64,
        };
        let conv_width = count(m[6], "conv_width")?;
        let blend = BlendConfig::new(m[7], m[8]).map_err(|e| format_err(e.to_string()))?;
        let feature = if m[9] == 0.0 { FeatureMode::Pooled } else { FeatureMode::Blended };
        let modality = if m[10] == 0.0 { Modality::Multimodal } else { Modality::TextOnly };
        let threshold = m[11];

        let instruction = match take(META_INSTRUCTION) {
            Ok(b) => {
                let bytes: Vec<u8> = b.data().iter().map(|&v| v as u8).collect();
                String::from_utf8(bytes).map_err(|_| format_err("instruction is not UTF-8"))?
            }
            Err(_) => String::new(),
        };

        let mut encoder = EncoderParams::init(&EncoderConfig { seed: encoder_cfg.seed, ..encoder_cfg })?;
        let embedding = take(EMBEDDING)?;
        let taps = (0..conv_width).map(|i| take(&format!("align.conv.{i}"))).collect::<Result<Vec<_>>>()?;
        let d = encoder_cfg.d_h;
        let mut align = AlignmentParams {
            conv: ConvKernel::new(taps)?,
            lin_w: Matrix::zeros(d, d),
            lin_b: Matrix::zeros(1, d),
            cross: AttentionProj::identity(d),
            embedding,
        };
        let mut head = HeadParams::zeros(d);
        head.threshold = threshold;

        let fill = |dest: &mut Matrix, name: &str, src: Matrix| -> Result<()> {
            if !dest.same_shape(&src) {
                return Err(format_err(format!(
                    "block {name} is {}x{}, expected {}x{}",
                    src.rows(),
                    src.cols(),
                    dest.rows(),
                    dest.cols()
                )));
            }
            *dest = src;
            Ok(())
        };
        for (name, dest) in encoder.tensors_mut() {
            fill(dest, name, take(name)?)?;
        }
        for (name, dest) in align.tensors_mut() {
            if name.starts_with("align.conv.") {
                continue;
            }
            fill(dest, &name, take(&name)?)?;
        }
        for (name, dest) in head.tensors_mut() {
            fill(dest, &name, take(&name)?)?;
        }
        if let Some(extra) = blocks.keys().next() {
            return Err(format_err(format!("unknown block {extra}")));
        }
        let cfg = ModelConfig { encoder: encoder_cfg, conv_width, blend, feature, modality, instruction };
        Model::from_parts(cfg, encoder, align, head)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_bytes(&fs::read(path)?)
    }
}
