//! The end-to-end network: encoders, alignment, context, blend and heads,
//! with a hand-written backward pass through all of it.

mod checkpoint;
mod train;

use std::thread;

use crate::encoders::{
    encode_image_backward, encode_image_traced, encode_text_backward, encode_text_traced, tokenize,
    EmbeddingSequence, EncoderConfig, EncoderParams, ImageTrace, TextTrace, TokenSequence,
};
use crate::error::{Error, Result};
use crate::fusion::{
    align_backward, align_traced, blend_backward, blend_vectors, stack_context, AlignAccum, AlignKeys,
    AlignTrace, AlignmentParams, BlendConfig, MultimodalContext, DEFAULT_CONV_WIDTH,
};
use crate::heads::{Category, HeadParams, Prediction};
use crate::numkernel::{cross_entropy, linear_backward, mean_rows_backward, Matrix};

pub use checkpoint::CHECKPOINT_MAGIC;
pub use train::{train, train_model, TrainConfig};

pub const DEFAULT_INSTRUCTION: &str =
    "decide whether this meme is misogynous and name the social domain it targets";

/// What the heads read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Mean of the whole multimodal context.
    Pooled,
    /// Blend of the four pooled modality sequences.
    Blended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Multimodal,
    /// Drops the image branch entirely (ablation baseline).
    TextOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub conv_width: usize,
    pub blend: BlendConfig,
    pub feature: FeatureMode,
    pub modality: Modality,
    pub instruction: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            conv_width: DEFAULT_CONV_WIDTH,
            blend: BlendConfig::default(),
            feature: FeatureMode::Blended,
            modality: Modality::Multimodal,
            instruction: DEFAULT_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextInput {
    Tokens(TokenSequence),
    /// Precomputed `h_t`; bypasses the text encoder.
    Features(EmbeddingSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageInput {
    /// Raw `P × raw_dim` patch grid.
    Patches(Matrix),
    /// Precomputed `h_i`; bypasses the image encoder.
    Features(EmbeddingSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemeInput {
    pub text: TextInput,
    pub image: ImageInput,
}

impl MemeInput {
    pub fn new(tokens: TokenSequence, patches: Matrix) -> Self {
        MemeInput { text: TextInput::Tokens(tokens), image: ImageInput::Patches(patches) }
    }

    /// Hash-tokenizes `text` for a vocabulary of `vocab` entries.
    pub fn from_text(text: &str, patches: Matrix, vocab: usize) -> Self {
        MemeInput::new(tokenize(text, vocab), patches)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: MemeInput,
    pub label: bool,
    pub category: Category,
}

#[derive(Debug, Clone)]
enum Branch<T> {
    Traced(T),
    Fixed(Matrix),
}

#[derive(Debug, Clone)]
struct Trace {
    text: Branch<TextTrace>,
    /// Text conditioned on the instruction (`hᵗ_t`).
    text_cond: Branch<TextTrace>,
    image: Option<(Branch<ImageTrace>, AlignTrace)>,
    ctx: MultimodalContext,
    feature: Matrix,
    label_logits: Matrix,
    category_logits: Matrix,
}

impl Trace {
    fn h_t(&self) -> &Matrix {
        match &self.text {
            Branch::Traced(t) => &t.h,
            Branch::Fixed(m) => m,
        }
    }

    fn h_t_t(&self) -> &Matrix {
        match &self.text_cond {
            Branch::Traced(t) => &t.h,
            Branch::Fixed(m) => m,
        }
    }
}

/// Gradients for every trainable tensor, in [`Model::trainable_tensors`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: EncoderParams,
    pub align: AlignmentParams,
    pub head: HeadParams,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> =
            self.encoder.tensors().into_iter().map(|(n, m)| (n.to_string(), m)).collect();
        out.extend(self.align.tensors());
        out.extend(self.head.tensors());
        out
    }
}

struct GradSink {
    encoder: EncoderParams,
    align: AlignAccum,
    head: HeadParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub encoder: EncoderParams,
    pub align: AlignmentParams,
    pub head: HeadParams,
    instruction: TokenSequence,
}

impl Model {
    pub fn init(cfg: ModelConfig) -> Result<Self> {
        let encoder = EncoderParams::init(&cfg.encoder)?;
        let align = AlignmentParams::init(&encoder, cfg.conv_width, cfg.encoder.seed)?;
        let head = HeadParams::init(cfg.encoder.d_h, cfg.encoder.seed);
        Model::from_parts(cfg, encoder, align, head)
    }

    pub fn from_parts(
        cfg: ModelConfig,
        encoder: EncoderParams,
        align: AlignmentParams,
        head: HeadParams,
    ) -> Result<Self> {
        let d = encoder.d_h();
        if align.d_h() != d || head.d_h() != d {
            return Err(Error::dim("encoder, alignment and head disagree on d_h"));
        }
        if align.embedding.cols() != d {
            return Err(Error::dim("embedding matrix width differs from d_h"));
        }
        let instruction = tokenize(&cfg.instruction, encoder.vocab());
        if instruction.len() >= encoder.max_len() {
            return Err(Error::Argument(format!(
                "instruction of {} tokens leaves no room for text within max length {}",
                instruction.len(),
                encoder.max_len()
            )));
        }
        Ok(Model { cfg, encoder, align, head, instruction })
    }

    pub fn d_h(&self) -> usize {
        self.encoder.d_h()
    }

    pub fn instruction_tokens(&self) -> &TokenSequence {
        &self.instruction
    }

    /// Longest text that still fits once the instruction is appended.
    pub fn max_text_len(&self) -> usize {
        self.encoder.max_len() - self.instruction.len()
    }

    pub fn trainable_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> =
            self.encoder.tensors().into_iter().map(|(n, m)| (n.to_string(), m)).collect();
        out.extend(self.align.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn trainable_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> =
            self.encoder.tensors_mut().into_iter().map(|(n, m)| (n.to_string(), m)).collect();
        out.extend(self.align.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn keys(&self) -> Result<AlignKeys> {
        self.align.keys()
    }

    fn forward(&self, input: &MemeInput, keys: &AlignKeys) -> Result<Trace> {
        let instr = self.encoder.embed_tokens(&self.instruction)?;
        let (text, text_cond) = match &input.text {
            TextInput::Tokens(tokens) => {
                let tokens = tokens.truncated(self.max_text_len());
                let conditioned = tokens.concat(&self.instruction);
                (
                    Branch::Traced(encode_text_traced(&tokens, &self.encoder)?),
                    Branch::Traced(encode_text_traced(&conditioned, &self.encoder)?),
                )
            }
            TextInput::Features(h) => {
                if h.dim() != self.d_h() {
                    return Err(Error::dim(format!("text features have dim {}, model has {}", h.dim(), self.d_h())));
                }
                let cond = Matrix::vstack(&[h.as_matrix(), &instr])?;
                (Branch::Fixed(h.as_matrix().clone()), Branch::Fixed(cond))
            }
        };

        let image = match self.cfg.modality {
            Modality::TextOnly => None,
            Modality::Multimodal => {
                let branch = match &input.image {
                    ImageInput::Patches(p) => Branch::Traced(encode_image_traced(p, &self.encoder)?),
                    ImageInput::Features(h) => Branch::Fixed(h.as_matrix().clone()),
                };
                let h_i = match &branch {
                    Branch::Traced(t) => &t.attn.out,
                    Branch::Fixed(m) => m,
                };
                let aligned = align_traced(h_i, &self.align, keys)?;
                Some((branch, aligned))
            }
        };

        let h_t = match &text {
            Branch::Traced(t) => &t.h,
            Branch::Fixed(m) => m,
        };
        let mut ctx = stack_context(h_t, image.as_ref().map(|(_, a)| &a.out), &instr)?;

        let feature = match self.cfg.feature {
            FeatureMode::Pooled => ctx.x.mean_rows()?,
            FeatureMode::Blended => {
                let h_t_t = match &text_cond {
                    Branch::Traced(t) => &t.h,
                    Branch::Fixed(m) => m,
                };
                let text_part = crate::fusion::weighted(self.cfg.blend.omega(), &h_t.mean_rows()?, &h_t_t.mean_rows()?)?;
                let z = match &image {
                    Some((branch, aligned)) => {
                        let h_i = match branch {
                            Branch::Traced(t) => &t.attn.out,
                            Branch::Fixed(m) => m,
                        };
                        blend_vectors(
                            &aligned.out.mean_rows()?,
                            &h_i.mean_rows()?,
                            &h_t.mean_rows()?,
                            &h_t_t.mean_rows()?,
                            self.cfg.blend,
                        )?
                    }
                    None => text_part,
                };
                ctx.z_test = Some(z.clone());
                z
            }
        };

        let (label_logits, category_logits) = self.head.logits(&feature)?;
        Ok(Trace { text, text_cond, image, ctx, feature, label_logits, category_logits })
    }

    fn backward(&self, t: &Trace, dly: &Matrix, dlc: &Matrix, keys: &AlignKeys, sink: &mut GradSink) -> Result<()> {
        let gy = linear_backward(&t.feature, &self.head.label_w, dly)?;
        let gc = linear_backward(&t.feature, &self.head.category_w, dlc)?;
        sink.head.label_w.add_assign(&gy.dw)?;
        sink.head.label_b.add_assign(&gy.db)?;
        sink.head.category_w.add_assign(&gc.dw)?;
        sink.head.category_b.add_assign(&gc.db)?;
        let dfeature = gy.dx.add(&gc.dx)?;

        let d = self.d_h();
        let lt = t.h_t().rows();
        let ltt = t.h_t_t().rows();
        let li = t.image.as_ref().map_or(0, |(_, a)| a.out.rows());
        let dh_t;
        let mut dh_t_t = Matrix::zeros(ltt, d);
        let mut dh_t_i = Matrix::zeros(li, d);
        let mut dh_i = t.image.as_ref().map(|(_, a)| Matrix::zeros(a.h_i.rows(), d));
        let mut dinstr = Matrix::zeros(self.instruction.len(), d);

        match self.cfg.feature {
            FeatureMode::Pooled => {
                let dx = mean_rows_backward(t.ctx.x.rows(), &dfeature);
                let [b0, b1, b2] = t.ctx.boundaries;
                dh_t = dx.slice_rows(0, b0)?;
                dh_t_i = dx.slice_rows(b0, b1)?;
                dinstr = dx.slice_rows(b1, b2)?;
            }
            FeatureMode::Blended => match &mut dh_i {
                Some(dh_i) => {
                    let [a, b, c, e] = blend_backward([li, dh_i.rows(), lt, ltt], self.cfg.blend, &dfeature);
                    dh_t_i = a;
                    *dh_i = b;
                    dh_t = c;
                    dh_t_t = e;
                }
                None => {
                    let w = self.cfg.blend.omega();
                    dh_t = mean_rows_backward(lt, &dfeature.scale(w));
                    dh_t_t = mean_rows_backward(ltt, &dfeature.scale(1.0 - w));
                }
            },
        }

        if let (Some((branch, aligned)), Some(mut dh_i)) = (&t.image, dh_i) {
            let from_align = align_backward(aligned, &self.align, keys, &dh_t_i, &mut sink.align)?;
            dh_i.add_assign(&from_align)?;
            if let Branch::Traced(img) = branch {
                encode_image_backward(img, &self.encoder, &dh_i, &mut sink.encoder)?;
            }
        }

        if let Branch::Traced(tt) = &t.text {
            encode_text_backward(tt, &self.encoder, &dh_t, &mut sink.encoder)?;
        }
        match &t.text_cond {
            Branch::Traced(tc) => encode_text_backward(tc, &self.encoder, &dh_t_t, &mut sink.encoder)?,
            Branch::Fixed(_) => {
                // Only the appended instruction rows are trainable here.
                let tail = dh_t_t.slice_rows(lt, ltt)?;
                dinstr.add_assign(&tail)?;
            }
        }
        sink.encoder.token_embed.scatter_add_rows(self.instruction.as_slice(), &dinstr)?;
        Ok(())
    }

    /// Mean joint loss `CE(label) + λ·CE(category)` and its gradients.
    pub fn loss_and_grads(&self, batch: &[Example], lambda: f64) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let keys = self.keys()?;
        let mut sink =
            GradSink { encoder: self.encoder.zeros_like(), align: AlignAccum::new(&self.align), head: HeadParams::zeros(self.d_h()) };
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let t = self.forward(&ex.input, &keys)?;
            let (ly, gy) = cross_entropy(t.label_logits.data(), usize::from(ex.label))?;
            let (lc, gc) = cross_entropy(t.category_logits.data(), ex.category.code())?;
            total += ly + lambda * lc;
            let dly = Matrix::row_vector(&gy).scale(scale);
            let dlc = Matrix::row_vector(&gc).scale(scale * lambda);
            self.backward(&t, &dly, &dlc, &keys, &mut sink)?;
        }
        let grads = Gradients { encoder: sink.encoder, align: sink.align.finish(&self.align)?, head: sink.head };
        Ok((total * scale, grads))
    }

    /// Mean joint loss only.
    pub fn loss(&self, batch: &[Example], lambda: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let keys = self.keys()?;
        // Same accumulation and scaling as `loss_and_grads`, so the two agree bit for bit.
        let mut total = 0.0;
        for ex in batch {
            let t = self.forward(&ex.input, &keys)?;
            let (ly, _) = cross_entropy(t.label_logits.data(), usize::from(ex.label))?;
            let (lc, _) = cross_entropy(t.category_logits.data(), ex.category.code())?;
            total += ly + lambda * lc;
        }
        Ok(total * (1.0 / batch.len() as f64))
    }

    /// Runs the full pipeline for one meme and returns the prediction with its context.
    pub fn infer(&self, input: &MemeInput) -> Result<(Prediction, MultimodalContext)> {
        self.infer_with_keys(input, &self.keys()?)
    }

    fn infer_with_keys(&self, input: &MemeInput, keys: &AlignKeys) -> Result<(Prediction, MultimodalContext)> {
        let t = self.forward(input, keys)?;
        let pred = Prediction::from_logits(t.label_logits.data(), t.category_logits.data(), self.head.threshold)?;
        Ok((pred, t.ctx))
    }

    pub fn predict(&self, input: &MemeInput) -> Result<Prediction> {
        Ok(self.infer(input)?.0)
    }

    /// Predicts many memes on up to `workers` threads. Results keep input order.
    pub fn predict_batch(&self, inputs: &[MemeInput], workers: usize) -> Vec<Result<Prediction>> {
        let keys = match self.keys() {
            Ok(k) => k,
            Err(e) => return inputs.iter().map(|_| Err(Error::dim(e.to_string()))).collect(),
        };
        let workers = workers.max(1).min(inputs.len().max(1));
        let chunk = inputs.len().div_ceil(workers).max(1);
        let keys = &keys;
        thread::scope(|s| {
            let handles: Vec<_> = inputs
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter().map(|i| self.infer_with_keys(i, keys).map(|(p, _)| p)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("prediction worker panicked")).collect()
        })
    }
}
