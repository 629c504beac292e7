//! Synthetic corpora: a manifest mirroring the WBMS marginal counts and a
//! small planted-pattern dataset for end-to-end learning checks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{save_manifest, MemeRecord, TextKind};
use crate::encoders::save_matrix;
use crate::error::Result;
use crate::heads::Category;
use crate::encoders::EncoderConfig;
use crate::model::{Example, MemeInput, Modality, ModelConfig, TrainConfig};
use crate::numkernel::Matrix;

/// `(category, different, same, image)` rows of the WBMS statistics table.
pub const WBMS_COUNTS: [(Category, usize, usize, usize); 4] = [
    (Category::Kitchen, 780, 125, 171),
    (Category::Leadership, 262, 0, 272),
    (Category::Working, 151, 0, 170),
    (Category::Shopping, 118, 4, 77),
];

/// Placeholder records reproducing the WBMS counts per category and text kind.
pub fn wbms_mirror() -> Vec<MemeRecord> {
    let mut out = Vec::new();
    for (category, different, same, image) in WBMS_COUNTS {
        let kinds = [(TextKind::Different, different), (TextKind::Same, same), (TextKind::Image, image)];
        for (kind, n) in kinds {
            for _ in 0..n {
                let i = out.len() + 1;
                let id = format!("wbms-{i:04}");
                let (caption, overlay) = match kind {
                    TextKind::Different => (format!("placeholder caption {i}"), format!("placeholder overlay {i}")),
                    TextKind::Same => (format!("placeholder text {i}"), format!("placeholder text {i}")),
                    TextKind::Image => (String::new(), String::new()),
                };
                out.push(MemeRecord {
                    image_ref: format!("images/{id}.mme"),
                    id,
                    category,
                    text_kind: kind,
                    caption,
                    overlay,
                    misogyny_label: None,
                });
            }
        }
    }
    out
}

/// Where the planted discriminative pattern lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    /// Category and label keywords in the text, matching prototypes in the patches.
    Both,
    /// Text is filler only; category and label are visible in the patches alone.
    ImageOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub memes: usize,
    pub patches: usize,
    pub raw_dim: usize,
    pub noise: f64,
    /// Filler words per meme, placed after the planted keywords.
    pub fillers: usize,
    pub signal: Signal,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig { memes: 64, patches: 4, raw_dim: 8, noise: 0.1, fillers: 2, signal: Signal::Both, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMeme {
    pub record: MemeRecord,
    pub patches: Matrix,
}

impl PlantedMeme {
    pub fn example(&self, vocab: usize) -> Example {
        Example {
            input: MemeInput::from_text(&self.record.meme_text(), self.patches.clone(), vocab),
            label: self.record.misogyny_label.expect("planted memes are labelled"),
            category: self.record.category,
        }
    }
}

const CATEGORY_WORDS: [&str; 5] = ["stove", "podium", "office", "mall", "garden"];
const LABEL_WORDS: [&str; 2] = ["respect", "ridicule"];
const FILLER: [&str; 48] = [
    "alpha", "bravo", "cobalt", "delta", "ember", "fjord", "gravel", "harbor", "indigo", "juniper", "kestrel",
    "lantern", "meadow", "nickel", "orbit", "pebble", "quartz", "raven", "saffron", "tundra", "umber", "velvet",
    "walnut", "xenon", "yarrow", "zephyr", "acorn", "basalt", "cinder", "dune", "eddy", "flint", "glacier", "hazel",
    "iris", "jasper", "kelp", "lichen", "marble", "nectar", "onyx", "prairie", "quill", "reef", "sorrel", "thistle",
    "upland", "vapor",
];

/// Seeded planted-pattern corpus. Categories are as balanced as `memes`
/// allows and labels alternate, so every category holds both labels.
pub fn planted(cfg: &PlantedConfig) -> Vec<PlantedMeme> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut proto_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ca7e);
    let cat_protos: Vec<Matrix> = (0..Category::COUNT).map(|_| Matrix::uniform(1, cfg.raw_dim, 1.0, &mut proto_rng)).collect();
    let label_protos: Vec<Matrix> = (0..2).map(|_| Matrix::uniform(1, cfg.raw_dim, 1.0, &mut proto_rng)).collect();

    let mut categories: Vec<Category> = (0..cfg.memes).map(|i| Category::ALL[i % Category::COUNT]).collect();
    categories.shuffle(&mut rng);

    categories
        .into_iter()
        .enumerate()
        .map(|(i, category)| {
            let label = i % 2 == 0;
            let mut words: Vec<&str> = Vec::new();
            if cfg.signal == Signal::Both {
                words.push(CATEGORY_WORDS[category.code()]);
                words.push(LABEL_WORDS[usize::from(label)]);
            }
            let fillers = if cfg.signal == Signal::Both { cfg.fillers } else { cfg.fillers + 2 };
            words.extend((0..fillers).map(|_| FILLER[rng.gen_range(0..FILLER.len())]));
            let text = words.join(" ");

            let mut patches = Matrix::uniform(cfg.patches, cfg.raw_dim, cfg.noise, &mut rng);
            let rows = [&cat_protos[category.code()], &label_protos[usize::from(label)]];
            for (r, proto) in rows.into_iter().enumerate().take(cfg.patches) {
                for (v, p) in patches.row_mut(r).iter_mut().zip(proto.data()) {
                    *v += p;
                }
            }

            let id = format!("toy-{i:03}");
            let record = MemeRecord {
                image_ref: format!("patches/{id}.mme"),
                id,
                category,
                text_kind: TextKind::Same,
                caption: text.clone(),
                overlay: text,
                misogyny_label: Some(label),
            };
            PlantedMeme { record, patches }
        })
        .collect()
}

pub const TOY_VOCAB: usize = 256;

/// Model sized for the planted corpus. `max_len` leaves room for the
/// default instruction after the meme text.
pub fn toy_model_config(seed: u64, modality: Modality) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig { d_h: 16, vocab: TOY_VOCAB, max_len: 32, raw_dim: PlantedConfig::default().raw_dim, seed },
        modality,
        ..ModelConfig::default()
    }
}

pub fn toy_train_config() -> TrainConfig {
    TrainConfig { epochs: 200, lr: 0.5, lambda: 1.0 }
}

/// Writes `manifest.jsonl` and one `MME1` patch file per meme under `dir`.
/// Returns the manifest path.
pub fn write_planted(dir: impl AsRef<Path>, memes: &[PlantedMeme]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("patches"))?;
    for m in memes {
        save_matrix(dir.join(&m.record.image_ref), &m.patches)?;
    }
    let manifest = dir.join("manifest.jsonl");
    let records: Vec<MemeRecord> = memes.iter().map(|m| m.record.clone()).collect();
    save_manifest(&manifest, &records)?;
    Ok(manifest)
}
