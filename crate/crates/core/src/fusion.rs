//! Aligns image features to the token embedding space and blends the modalities.
//!
//! Image features are mapped into the text embedding space by a valid 1-D
//! convolution and a linear layer, then refined with single-head
//! cross-attention whose keys and values come from the token embedding
//! table `E`. The context stacks text features, aligned image features and
//! the instruction embedding. The blend interpolates mean-pooled sequences
//! with `W_l(c, d) = l·c + (1 − l)·d`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{AttentionProj, EmbeddingSequence, EncoderParams, TokenSequence};
use crate::error::{Error, Result};
use crate::numkernel::{
    attention, attention_backward, conv1d_backward, conv1d_forward, linear_backward, linear_forward,
    mean_rows_backward, ConvKernel, Matrix,
};

pub const DEFAULT_CONV_WIDTH: usize = 2;
pub const CONV_STRIDE: usize = 1;

/// Alignment weights. `embedding` is the frozen key/value table `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentParams {
    pub conv: ConvKernel,
    pub lin_w: Matrix,
    pub lin_b: Matrix,
    pub cross: AttentionProj,
    pub embedding: Matrix,
}

impl AlignmentParams {
    /// Random projections; `E` is copied from the encoder's token table.
    pub fn init(enc: &EncoderParams, conv_width: usize, seed: u64) -> Result<Self> {
        if conv_width == 0 {
            return Err(Error::Argument("conv width must be at least 1".into()));
        }
        let d = enc.d_h();
        let bound = 1.0 / (d as f64).sqrt();
        // Offset the stream so alignment weights never mirror encoder weights.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x616c_6967_6e00_0001);
        let taps = (0..conv_width).map(|_| Matrix::uniform(d, d, bound, &mut rng)).collect();
        Ok(AlignmentParams {
            conv: ConvKernel::new(taps)?,
            lin_w: Matrix::uniform(d, d, bound, &mut rng),
            lin_b: Matrix::zeros(1, d),
            cross: AttentionProj {
                wq: Matrix::uniform(d, d, bound, &mut rng),
                wk: Matrix::uniform(d, d, bound, &mut rng),
                wv: Matrix::uniform(d, d, bound, &mut rng),
            },
            embedding: enc.token_embed.clone(),
        })
    }

    /// Alignment in which every layer is the identity, the convolution having width 1.
    pub fn identity(embedding: Matrix) -> Self {
        let d = embedding.cols();
        AlignmentParams {
            conv: ConvKernel { taps: vec![Matrix::identity(d)] },
            lin_w: Matrix::identity(d),
            lin_b: Matrix::zeros(1, d),
            cross: AttentionProj::identity(d),
            embedding,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        AlignmentParams {
            conv: self.conv.zeros_like(),
            lin_w: z(&self.lin_w),
            lin_b: z(&self.lin_b),
            cross: self.cross.zeros_like(),
            embedding: z(&self.embedding),
        }
    }

    pub fn d_h(&self) -> usize {
        self.lin_w.cols()
    }

    pub fn conv_width(&self) -> usize {
        self.conv.width()
    }

    /// Trainable tensors. `E` is excluded.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> =
            self.conv.taps.iter().enumerate().map(|(i, t)| (format!("align.conv.{i}"), t)).collect();
        out.push(("align.lin_w".into(), &self.lin_w));
        out.push(("align.lin_b".into(), &self.lin_b));
        out.push(("align.cross_wq".into(), &self.cross.wq));
        out.push(("align.cross_wk".into(), &self.cross.wk));
        out.push(("align.cross_wv".into(), &self.cross.wv));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = self
            .conv
            .taps
            .iter_mut()
            .enumerate()
            .map(|(i, t)| (format!("align.conv.{i}"), t))
            .collect();
        out.push(("align.lin_w".into(), &mut self.lin_w));
        out.push(("align.lin_b".into(), &mut self.lin_b));
        out.push(("align.cross_wq".into(), &mut self.cross.wq));
        out.push(("align.cross_wk".into(), &mut self.cross.wk));
        out.push(("align.cross_wv".into(), &mut self.cross.wv));
        out
    }

    /// Projected keys and values of `E`, shared by every meme in a batch.
    pub fn keys(&self) -> Result<AlignKeys> {
        Ok(AlignKeys { k: self.embedding.matmul(&self.cross.wk)?, v: self.embedding.matmul(&self.cross.wv)? })
    }
}

#[derive(Debug, Clone)]
pub struct AlignKeys {
    pub k: Matrix,
    pub v: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) struct AlignTrace {
    pub h_i: Matrix,
    pub conv_out: Matrix,
    pub h_prime: Matrix,
    pub q: Matrix,
    pub weights: Matrix,
    pub out: Matrix,
}

pub(crate) fn align_traced(h_i: &Matrix, p: &AlignmentParams, keys: &AlignKeys) -> Result<AlignTrace> {
    if h_i.cols() != p.d_h() {
        return Err(Error::dim(format!("image features have dim {}, alignment expects {}", h_i.cols(), p.d_h())));
    }
    if h_i.rows() < p.conv_width() {
        return Err(Error::dim(format!(
            "image sequence of length {} is shorter than conv width {}",
            h_i.rows(),
            p.conv_width()
        )));
    }
    let conv_out = conv1d_forward(h_i, &p.conv, CONV_STRIDE)?;
    let h_prime = linear_forward(&conv_out, &p.lin_w, &p.lin_b)?;
    let q = h_prime.matmul(&p.cross.wq)?;
    let (out, weights) = attention(&q, &keys.k, &keys.v)?;
    Ok(AlignTrace { h_i: h_i.clone(), conv_out, h_prime, q, weights, out })
}

/// Gradient sink for alignment. Key/value gradients are kept in `E`-space
/// and folded into `W_k`, `W_v` once per batch by [`AlignAccum::finish`].
#[derive(Debug, Clone)]
pub(crate) struct AlignAccum {
    pub grads: AlignmentParams,
    dkeys: Matrix,
    dvalues: Matrix,
}

impl AlignAccum {
    pub fn new(p: &AlignmentParams) -> Self {
        let (v, d) = p.embedding.shape();
        AlignAccum { grads: p.zeros_like(), dkeys: Matrix::zeros(v, d), dvalues: Matrix::zeros(v, d) }
    }

    pub fn finish(mut self, p: &AlignmentParams) -> Result<AlignmentParams> {
        self.grads.cross.wk.add_assign(&p.embedding.matmul_at(&self.dkeys)?)?;
        self.grads.cross.wv.add_assign(&p.embedding.matmul_at(&self.dvalues)?)?;
        Ok(self.grads)
    }
}

/// Returns the gradient with respect to the image features `h_i`.
pub(crate) fn align_backward(
    t: &AlignTrace,
    p: &AlignmentParams,
    keys: &AlignKeys,
    dout: &Matrix,
    acc: &mut AlignAccum,
) -> Result<Matrix> {
    let g = attention_backward(&t.q, &keys.k, &keys.v, &t.weights, dout)?;
    acc.dkeys.add_assign(&g.dk)?;
    acc.dvalues.add_assign(&g.dv)?;
    acc.grads.cross.wq.add_assign(&t.h_prime.matmul_at(&g.dq)?)?;
    let dh_prime = g.dq.matmul_bt(&p.cross.wq)?;
    let lin = linear_backward(&t.conv_out, &p.lin_w, &dh_prime)?;
    acc.grads.lin_w.add_assign(&lin.dw)?;
    acc.grads.lin_b.add_assign(&lin.db)?;
    let (dh_i, dconv) = conv1d_backward(&t.h_i, &p.conv, CONV_STRIDE, &lin.dx)?;
    for (acc_tap, tap) in acc.grads.conv.taps.iter_mut().zip(&dconv.taps) {
        acc_tap.add_assign(tap)?;
    }
    Ok(dh_i)
}

/// `h′_i = Linear(Conv1D(h_i))` and `hᵗ_i = Attn(h′_i·W_q, E·W_k, E·W_v)`.
pub fn align_image(
    h_i: &EmbeddingSequence,
    p: &AlignmentParams,
) -> Result<(EmbeddingSequence, EmbeddingSequence)> {
    let keys = p.keys()?;
    let t = align_traced(h_i.as_matrix(), p, &keys)?;
    Ok((EmbeddingSequence::new(t.h_prime)?, EmbeddingSequence::new(t.out)?))
}

/// Row-stacked `[h_t ; hᵗ_i ; Embed(instruction)]`.
///
/// `boundaries` holds the exclusive end row of each segment. The history of
/// earlier memes is carried along but no operation reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalContext {
    pub x: Matrix,
    pub boundaries: [usize; 3],
    pub history: Vec<(EmbeddingSequence, EmbeddingSequence)>,
    /// Blend output, when the pipeline computed one.
    pub z_test: Option<Matrix>,
}

impl MultimodalContext {
    pub fn text(&self) -> Matrix {
        self.x.slice_rows(0, self.boundaries[0]).expect("valid boundaries")
    }

    pub fn aligned_image(&self) -> Matrix {
        self.x.slice_rows(self.boundaries[0], self.boundaries[1]).expect("valid boundaries")
    }

    pub fn instruction(&self) -> Matrix {
        self.x.slice_rows(self.boundaries[1], self.boundaries[2]).expect("valid boundaries")
    }
}

pub(crate) fn stack_context(h_t: &Matrix, h_t_i: Option<&Matrix>, instr: &Matrix) -> Result<MultimodalContext> {
    let d = h_t.cols();
    if instr.cols() != d || h_t_i.is_some_and(|m| m.cols() != d) {
        return Err(Error::dim("context segments differ in feature dimension"));
    }
    let empty = Matrix::zeros(0, d);
    let img = h_t_i.unwrap_or(&empty);
    let b0 = h_t.rows();
    let b1 = b0 + img.rows();
    let b2 = b1 + instr.rows();
    Ok(MultimodalContext {
        x: Matrix::vstack(&[h_t, img, instr])?,
        boundaries: [b0, b1, b2],
        history: Vec::new(),
        z_test: None,
    })
}

/// Assembles the multimodal context. An empty instruction embeds as the null token.
pub fn build_context(
    h_t: &EmbeddingSequence,
    h_t_i: &EmbeddingSequence,
    instruction: &TokenSequence,
    p: &EncoderParams,
) -> Result<MultimodalContext> {
    if h_t.dim() != p.d_h() || h_t_i.dim() != p.d_h() {
        return Err(Error::dim(format!(
            "segment dims ({}, {}) do not match d_h {}",
            h_t.dim(),
            h_t_i.dim(),
            p.d_h()
        )));
    }
    let instr = if instruction.is_empty() { TokenSequence::null() } else { instruction.clone() };
    let embedded = p.embed_tokens(&instr)?;
    stack_context(h_t.as_matrix(), Some(h_t_i.as_matrix()), &embedded)
}

/// Image weight `ω` and original-context fidelity `α`, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    omega: f64,
    alpha: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig { omega: 0.5, alpha: 0.7 }
    }
}

impl BlendConfig {
    pub fn new(omega: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("omega", omega), ("alpha", alpha)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(BlendConfig { omega, alpha })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `W_l(c, d) = l·c + (1 − l)·d`, elementwise.
pub fn weighted(l: f64, c: &Matrix, d: &Matrix) -> Result<Matrix> {
    if !c.same_shape(d) {
        return Err(Error::dim("blend operands differ in shape"));
    }
    let data = c.data().iter().zip(d.data()).map(|(&a, &b)| l * a + (1.0 - l) * b).collect();
    Matrix::from_vec(c.rows(), c.cols(), data)
}

/// `W_α(W_ω(a, b), W_ω(c, d))` over `1 × d_h` vectors.
pub fn blend_vectors(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, cfg: BlendConfig) -> Result<Matrix> {
    let image = weighted(cfg.omega, a, b)?;
    let text = weighted(cfg.omega, c, d)?;
    weighted(cfg.alpha, &image, &text)
}

/// Coefficients of the four pooled inputs in [`blend_vectors`].
pub(crate) fn blend_coefficients(cfg: BlendConfig) -> [f64; 4] {
    let (w, a) = (cfg.omega, cfg.alpha);
    [a * w, a * (1.0 - w), (1.0 - a) * w, (1.0 - a) * (1.0 - w)]
}

/// Mean-pools each sequence, then `z = W_α(W_ω(hᵗ_i, h_i), W_ω(h_t, hᵗ_t))`.
pub fn blend(
    h_t_i: &EmbeddingSequence,
    h_i: &EmbeddingSequence,
    h_t: &EmbeddingSequence,
    h_t_t: &EmbeddingSequence,
    cfg: BlendConfig,
) -> Result<EmbeddingSequence> {
    let d = h_t_i.dim();
    if [h_i.dim(), h_t.dim(), h_t_t.dim()].iter().any(|&x| x != d) {
        return Err(Error::dim("blend inputs differ in feature dimension"));
    }
    EmbeddingSequence::new(blend_vectors(&h_t_i.mean(), &h_i.mean(), &h_t.mean(), &h_t_t.mean(), cfg)?)
}

/// Gradients of the pooled blend with respect to each full input sequence.
pub(crate) fn blend_backward(rows: [usize; 4], cfg: BlendConfig, dz: &Matrix) -> [Matrix; 4] {
    let coef = blend_coefficients(cfg);
    std::array::from_fn(|i| mean_rows_backward(rows[i], &dz.scale(coef[i])))
}
