//! Toy text and image encoders standing in for large pretrained models.
//!
//! Both produce `L × d_h` feature sequences. The text encoder runs token
//! plus positional embeddings through one self-attention block and one
//! `tanh` feed-forward layer. The image encoder projects raw patch vectors
//! to `d_h`, adds positions and applies one self-attention block.

mod embfile;
mod tokenizer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{attention, attention_backward, linear_backward, linear_forward, tanh_backward, Matrix};

pub use embfile::{
    decode_matrix, encode_matrix, load_embeddings, load_matrix, save_embeddings, save_matrix,
    EMBEDDING_MAGIC,
};
pub(crate) use embfile::Reader;
pub use tokenizer::{stable_hash, tokenize, words, TokenSequence};

/// An `L × d_h` feature sequence with `L ≥ 1` and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence(Matrix);

impl EmbeddingSequence {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::dim("embedding sequence needs at least one row"));
        }
        if !values.is_finite() {
            return Err(Error::Validation("embedding sequence has non-finite values".into()));
        }
        Ok(EmbeddingSequence(values))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn mean(&self) -> Matrix {
        self.0.mean_rows().expect("non-empty by construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub d_h: usize,
    pub vocab: usize,
    pub max_len: usize,
    /// Width of one raw image patch vector.
    pub raw_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { d_h: 32, vocab: 4096, max_len: 64, raw_dim: 16, seed: 0 }
    }
}

/// Query/key/value projections of one single-head attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProj {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

impl AttentionProj {
    fn init(d: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        AttentionProj {
            wq: Matrix::uniform(d, d, bound, rng),
            wk: Matrix::uniform(d, d, bound, rng),
            wv: Matrix::uniform(d, d, bound, rng),
        }
    }

    pub fn identity(d: usize) -> Self {
        AttentionProj { wq: Matrix::identity(d), wk: Matrix::identity(d), wv: Matrix::identity(d) }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        AttentionProj { wq: z(&self.wq), wk: z(&self.wk), wv: z(&self.wv) }
    }
}

/// Self-attention over `z` with the given projections, plus what backward needs.
#[derive(Debug, Clone)]
pub(crate) struct SelfAttnTrace {
    pub z: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub weights: Matrix,
    pub out: Matrix,
}

pub(crate) fn self_attention(z: Matrix, p: &AttentionProj) -> Result<SelfAttnTrace> {
    let q = z.matmul(&p.wq)?;
    let k = z.matmul(&p.wk)?;
    let v = z.matmul(&p.wv)?;
    let (out, weights) = attention(&q, &k, &v)?;
    Ok(SelfAttnTrace { z, q, k, v, weights, out })
}

/// Accumulates projection gradients into `grads` and returns `dz`.
pub(crate) fn self_attention_backward(
    t: &SelfAttnTrace,
    p: &AttentionProj,
    dout: &Matrix,
    grads: &mut AttentionProj,
) -> Result<Matrix> {
    let g = attention_backward(&t.q, &t.k, &t.v, &t.weights, dout)?;
    grads.wq.add_assign(&t.z.matmul_at(&g.dq)?)?;
    grads.wk.add_assign(&t.z.matmul_at(&g.dk)?)?;
    grads.wv.add_assign(&t.z.matmul_at(&g.dv)?)?;
    let mut dz = g.dq.matmul_bt(&p.wq)?;
    dz.add_assign(&g.dk.matmul_bt(&p.wk)?)?;
    dz.add_assign(&g.dv.matmul_bt(&p.wv)?)?;
    Ok(dz)
}

/// Trainable encoder weights. The same struct doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embed: Matrix,
    pub positions: Matrix,
    pub text_attn: AttentionProj,
    pub ffn_w: Matrix,
    pub ffn_b: Matrix,
    pub patch_w: Matrix,
    pub patch_b: Matrix,
    pub image_attn: AttentionProj,
    pub seed: u64,
}

impl EncoderParams {
    /// Uniform initialization in `[−1/√d_h, 1/√d_h]` from a ChaCha stream seeded by `cfg.seed`.
    pub fn init(cfg: &EncoderConfig) -> Result<Self> {
        if cfg.d_h == 0 || cfg.vocab < 2 || cfg.max_len == 0 || cfg.raw_dim == 0 {
            return Err(Error::Argument(format!("invalid encoder config {cfg:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_h;
        let bound = 1.0 / (d as f64).sqrt();
        Ok(EncoderParams {
            token_embed: Matrix::uniform(cfg.vocab, d, bound, &mut rng),
            positions: Matrix::uniform(cfg.max_len, d, bound, &mut rng),
            text_attn: AttentionProj::init(d, bound, &mut rng),
            ffn_w: Matrix::uniform(d, d, bound, &mut rng),
            ffn_b: Matrix::zeros(1, d),
            patch_w: Matrix::uniform(cfg.raw_dim, d, bound, &mut rng),
            patch_b: Matrix::zeros(1, d),
            image_attn: AttentionProj::init(d, bound, &mut rng),
            seed: cfg.seed,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        EncoderParams {
            token_embed: z(&self.token_embed),
            positions: z(&self.positions),
            text_attn: self.text_attn.zeros_like(),
            ffn_w: z(&self.ffn_w),
            ffn_b: z(&self.ffn_b),
            patch_w: z(&self.patch_w),
            patch_b: z(&self.patch_b),
            image_attn: self.image_attn.zeros_like(),
            seed: self.seed,
        }
    }

    pub fn d_h(&self) -> usize {
        self.token_embed.cols()
    }

    pub fn vocab(&self) -> usize {
        self.token_embed.rows()
    }

    pub fn max_len(&self) -> usize {
        self.positions.rows()
    }

    pub fn raw_dim(&self) -> usize {
        self.patch_w.rows()
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            d_h: self.d_h(),
            vocab: self.vocab(),
            max_len: self.max_len(),
            raw_dim: self.raw_dim(),
            seed: self.seed,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("enc.token_embed", &self.token_embed),
            ("enc.positions", &self.positions),
            ("enc.text_wq", &self.text_attn.wq),
            ("enc.text_wk", &self.text_attn.wk),
            ("enc.text_wv", &self.text_attn.wv),
            ("enc.ffn_w", &self.ffn_w),
            ("enc.ffn_b", &self.ffn_b),
            ("enc.patch_w", &self.patch_w),
            ("enc.patch_b", &self.patch_b),
            ("enc.image_wq", &self.image_attn.wq),
            ("enc.image_wk", &self.image_attn.wk),
            ("enc.image_wv", &self.image_attn.wv),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("enc.token_embed", &mut self.token_embed),
            ("enc.positions", &mut self.positions),
            ("enc.text_wq", &mut self.text_attn.wq),
            ("enc.text_wk", &mut self.text_attn.wk),
            ("enc.text_wv", &mut self.text_attn.wv),
            ("enc.ffn_w", &mut self.ffn_w),
            ("enc.ffn_b", &mut self.ffn_b),
            ("enc.patch_w", &mut self.patch_w),
            ("enc.patch_b", &mut self.patch_b),
            ("enc.image_wq", &mut self.image_attn.wq),
            ("enc.image_wk", &mut self.image_attn.wk),
            ("enc.image_wv", &mut self.image_attn.wv),
        ]
    }

    fn check_tokens(&self, tokens: &TokenSequence) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::dim("empty token sequence"));
        }
        if tokens.len() > self.max_len() {
            return Err(Error::dim(format!(
                "{} tokens exceed max sequence length {}",
                tokens.len(),
                self.max_len()
            )));
        }
        if let Some(&bad) = tokens.as_slice().iter().find(|&&t| t >= self.vocab()) {
            return Err(Error::Index(format!("token {bad} outside vocabulary of {}", self.vocab())));
        }
        Ok(())
    }

    /// Token embedding rows only, without positions. Used for instruction text.
    pub fn embed_tokens(&self, tokens: &TokenSequence) -> Result<Matrix> {
        self.check_tokens(tokens)?;
        self.token_embed.gather_rows(tokens.as_slice())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TextTrace {
    pub tokens: Vec<usize>,
    pub attn: SelfAttnTrace,
    pub h: Matrix,
}

pub(crate) fn encode_text_traced(tokens: &TokenSequence, p: &EncoderParams) -> Result<TextTrace> {
    p.check_tokens(tokens)?;
    let idx = tokens.as_slice();
    let positions: Vec<usize> = (0..idx.len()).collect();
    let z = p.token_embed.gather_rows(idx)?.add(&p.positions.gather_rows(&positions)?)?;
    let attn = self_attention(z, &p.text_attn)?;
    let h = linear_forward(&attn.out, &p.ffn_w, &p.ffn_b)?.map(f64::tanh);
    Ok(TextTrace { tokens: idx.to_vec(), attn, h })
}

pub(crate) fn encode_text_backward(
    t: &TextTrace,
    p: &EncoderParams,
    dh: &Matrix,
    grads: &mut EncoderParams,
) -> Result<()> {
    let dpre = tanh_backward(&t.h, dh)?;
    let lin = linear_backward(&t.attn.out, &p.ffn_w, &dpre)?;
    grads.ffn_w.add_assign(&lin.dw)?;
    grads.ffn_b.add_assign(&lin.db)?;
    let dz = self_attention_backward(&t.attn, &p.text_attn, &lin.dx, &mut grads.text_attn)?;
    grads.token_embed.scatter_add_rows(&t.tokens, &dz)?;
    let positions: Vec<usize> = (0..t.tokens.len()).collect();
    grads.positions.scatter_add_rows(&positions, &dz)?;
    Ok(())
}

/// `h_t = tanh(Attn(z, z, z)·W_f + b_f)` with `z = token + position embeddings`.
pub fn encode_text(tokens: &TokenSequence, p: &EncoderParams) -> Result<EmbeddingSequence> {
    EmbeddingSequence::new(encode_text_traced(tokens, p)?.h)
}

#[derive(Debug, Clone)]
pub(crate) struct ImageTrace {
    pub patches: Matrix,
    pub attn: SelfAttnTrace,
}

pub(crate) fn encode_image_traced(patches: &Matrix, p: &EncoderParams) -> Result<ImageTrace> {
    if patches.rows() == 0 {
        return Err(Error::dim("image needs at least one patch"));
    }
    if patches.cols() != p.raw_dim() {
        return Err(Error::dim(format!(
            "patch width {} does not match projection input {}",
            patches.cols(),
            p.raw_dim()
        )));
    }
    if patches.rows() > p.max_len() {
        return Err(Error::dim(format!("{} patches exceed max length {}", patches.rows(), p.max_len())));
    }
    let positions: Vec<usize> = (0..patches.rows()).collect();
    let z = linear_forward(patches, &p.patch_w, &p.patch_b)?.add(&p.positions.gather_rows(&positions)?)?;
    let attn = self_attention(z, &p.image_attn)?;
    Ok(ImageTrace { patches: patches.clone(), attn })
}

pub(crate) fn encode_image_backward(
    t: &ImageTrace,
    p: &EncoderParams,
    dh: &Matrix,
    grads: &mut EncoderParams,
) -> Result<()> {
    let dz = self_attention_backward(&t.attn, &p.image_attn, dh, &mut grads.image_attn)?;
    let lin = linear_backward(&t.patches, &p.patch_w, &dz)?;
    grads.patch_w.add_assign(&lin.dw)?;
    grads.patch_b.add_assign(&lin.db)?;
    let positions: Vec<usize> = (0..t.patches.rows()).collect();
    grads.positions.scatter_add_rows(&positions, &dz)?;
    Ok(())
}

/// `h_i = Attn(z, z, z)` with `z = patches·W_p + b_p + position embeddings`.
pub fn encode_image(patches: &Matrix, p: &EncoderParams) -> Result<EmbeddingSequence> {
    EmbeddingSequence::new(encode_image_traced(patches, p)?.attn.out)
}
