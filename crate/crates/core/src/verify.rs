//! Finite-difference verification of every trainable path.
//!
//! Each path is probed at its own output with a random linear functional
//! `Σ W ⊙ out`, so the checked gradients are of order one. The composite
//! check differentiates the full training loss instead; there, parameters
//! deep in the image branch can have gradients near `1e-8`, where the
//! relative metric is dominated by `f64` rounding of the loss, so each
//! entry also reports its absolute error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{
    encode_image_backward, encode_image_traced, encode_text_backward, encode_text_traced, EncoderParams,
    TokenSequence,
};
use crate::error::Result;
use crate::fusion::{align_backward, align_traced, AlignAccum, AlignmentParams};
use crate::heads::{Category, HeadParams};
use crate::model::{Example, Model};
use crate::numkernel::{cross_entropy, finite_diff_entries, linear_backward, EntryCheck, Matrix};

pub const GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Central-difference noise floor for an O(1) loss at `eps = 1e-4`:
/// a few hundred ulps of the loss divided by `2·eps`.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub path: &'static str,
    pub tensor: String,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Largest relative error among entries whose absolute error exceeds [`ROUNDOFF_FLOOR`].
    pub max_relative_error_above_floor: f64,
}

impl TensorCheck {
    fn from_entries(path: &'static str, tensor: String, entries: &[EntryCheck]) -> Self {
        let fold = |f: &dyn Fn(&EntryCheck) -> f64| entries.iter().map(f).fold(0.0, f64::max);
        TensorCheck {
            path,
            tensor,
            max_relative_error: fold(&|e| e.relative_error()),
            max_absolute_error: fold(&|e| e.absolute_error()),
            max_relative_error_above_floor: fold(&|e| {
                if e.absolute_error() > ROUNDOFF_FLOOR {
                    e.relative_error()
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn passes(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }

    pub fn passes_above_floor(&self) -> bool {
        self.max_relative_error_above_floor < GRADCHECK_TOLERANCE
    }
}

fn probe(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Checks one tensor of a cloned parameter set.
fn check_tensor<P: Clone>(
    path: &'static str,
    name: String,
    params: &P,
    get: impl Fn(&P) -> &Matrix,
    set: impl Fn(&mut P) -> &mut Matrix,
    eval: impl Fn(&P) -> (f64, Matrix),
    eps: f64,
) -> TensorCheck {
    let f = |m: &Matrix| {
        let mut p = params.clone();
        *set(&mut p) = m.clone();
        eval(&p)
    };
    TensorCheck::from_entries(path, name, &finite_diff_entries(f, get(params), eps))
}

const TEXT_TENSORS: [&str; 7] =
    ["enc.token_embed", "enc.positions", "enc.text_wq", "enc.text_wk", "enc.text_wv", "enc.ffn_w", "enc.ffn_b"];
const IMAGE_TENSORS: [&str; 6] =
    ["enc.positions", "enc.patch_w", "enc.patch_b", "enc.image_wq", "enc.image_wk", "enc.image_wv"];

fn encoder_index(p: &EncoderParams, name: &str) -> usize {
    p.tensors().iter().position(|(n, _)| *n == name).expect("known encoder tensor")
}

/// Text encoder tensors against `Σ W ⊙ h_t`.
pub fn text_encoder(enc: &EncoderParams, tokens: &TokenSequence, seed: u64, eps: f64) -> Result<Vec<TensorCheck>> {
    let w = probe(tokens.len(), enc.d_h(), seed);
    let eval = |p: &EncoderParams| {
        let t = encode_text_traced(tokens, p).expect("valid tokens");
        let mut g = p.zeros_like();
        encode_text_backward(&t, p, &w, &mut g).expect("shapes agree");
        (t.h.dot(&w).expect("shapes agree"), g)
    };
    encode_text_traced(tokens, enc)?;
    Ok(TEXT_TENSORS
        .iter()
        .map(|&name| {
            let i = encoder_index(enc, name);
            check_tensor(
                "text encoder",
                name.to_string(),
                enc,
                |p| p.tensors()[i].1,
                |p| p.tensors_mut().swap_remove(i).1,
                |p| {
                    let (v, g) = eval(p);
                    (v, g.tensors()[i].1.clone())
                },
                eps,
            )
        })
        .collect())
}

/// Image encoder tensors against `Σ W ⊙ h_i`.
pub fn image_encoder(enc: &EncoderParams, patches: &Matrix, seed: u64, eps: f64) -> Result<Vec<TensorCheck>> {
    let w = probe(patches.rows(), enc.d_h(), seed);
    let eval = |p: &EncoderParams| {
        let t = encode_image_traced(patches, p).expect("valid patches");
        let mut g = p.zeros_like();
        encode_image_backward(&t, p, &w, &mut g).expect("shapes agree");
        (t.attn.out.dot(&w).expect("shapes agree"), g)
    };
    encode_image_traced(patches, enc)?;
    Ok(IMAGE_TENSORS
        .iter()
        .map(|&name| {
            let i = encoder_index(enc, name);
            check_tensor(
                "image encoder",
                name.to_string(),
                enc,
                |p| p.tensors()[i].1,
                |p| p.tensors_mut().swap_remove(i).1,
                |p| {
                    let (v, g) = eval(p);
                    (v, g.tensors()[i].1.clone())
                },
                eps,
            )
        })
        .collect())
}

/// Alignment tensors (conv taps, linear, cross-attention projections) and
/// the input features against `Σ W ⊙ hᵗ_i`.
pub fn alignment(align: &AlignmentParams, h_i: &Matrix, seed: u64, eps: f64) -> Result<Vec<TensorCheck>> {
    let out_rows = align_traced(h_i, align, &align.keys()?)?.out.rows();
    let w = probe(out_rows, align.d_h(), seed);
    let eval = |p: &AlignmentParams, x: &Matrix| {
        let keys = p.keys().expect("shapes agree");
        let t = align_traced(x, p, &keys).expect("valid features");
        let mut acc = AlignAccum::new(p);
        let dx = align_backward(&t, p, &keys, &w, &mut acc).expect("shapes agree");
        (t.out.dot(&w).expect("shapes agree"), acc.finish(p).expect("shapes agree"), dx)
    };
    let count = align.tensors().len();
    let mut out: Vec<TensorCheck> = (0..count)
        .map(|i| {
            check_tensor(
                "alignment",
                align.tensors()[i].0.clone(),
                align,
                |p| p.tensors()[i].1,
                |p| p.tensors_mut().swap_remove(i).1,
                |p| {
                    let (v, g, _) = eval(p, h_i);
                    (v, g.tensors()[i].1.clone())
                },
                eps,
            )
        })
        .collect();
    let f = |x: &Matrix| {
        let (v, _, dx) = eval(align, x);
        (v, dx)
    };
    out.push(TensorCheck::from_entries("alignment", "input h_i".into(), &finite_diff_entries(f, h_i, eps)));
    Ok(out)
}

/// Head tensors and the input feature against the joint loss.
pub fn heads(head: &HeadParams, feature: &Matrix, label: bool, category: Category, lambda: f64, eps: f64) -> Result<Vec<TensorCheck>> {
    let eval = |p: &HeadParams, f: &Matrix| {
        let (ly, lc) = p.logits(f).expect("valid feature");
        let (a, gy) = cross_entropy(ly.data(), usize::from(label)).expect("binary label");
        let (b, gc) = cross_entropy(lc.data(), category.code()).expect("valid category");
        let gy = linear_backward(f, &p.label_w, &Matrix::row_vector(&gy)).expect("shapes agree");
        let gc = linear_backward(f, &p.category_w, &Matrix::row_vector(&gc).scale(lambda)).expect("shapes agree");
        let mut g = HeadParams::zeros(p.d_h());
        g.label_w = gy.dw;
        g.label_b = gy.db;
        g.category_w = gc.dw;
        g.category_b = gc.db;
        let df = gy.dx.add(&gc.dx).expect("shapes agree");
        (a + lambda * b, g, df)
    };
    head.logits(feature)?;
    let count = head.tensors().len();
    let mut out: Vec<TensorCheck> = (0..count)
        .map(|i| {
            check_tensor(
                "heads",
                head.tensors()[i].0.clone(),
                head,
                |p| p.tensors()[i].1,
                |p| p.tensors_mut().swap_remove(i).1,
                |p| {
                    let (v, g, _) = eval(p, feature);
                    (v, g.tensors()[i].1.clone())
                },
                eps,
            )
        })
        .collect();
    let f = |x: &Matrix| {
        let (v, _, df) = eval(head, x);
        (v, df)
    };
    out.push(TensorCheck::from_entries("heads", "input feature".into(), &finite_diff_entries(f, feature, eps)));
    Ok(out)
}

/// Every trainable tensor against the full mean training loss.
pub fn composite(model: &Model, batch: &[Example], lambda: f64, eps: f64) -> Result<Vec<TensorCheck>> {
    model.loss_and_grads(batch, lambda)?;
    let count = model.trainable_tensors().len();
    Ok((0..count)
        .map(|i| {
            check_tensor(
                "composite",
                model.trainable_tensors()[i].0.clone(),
                model,
                |m| m.trainable_tensors()[i].1,
                |m| m.trainable_tensors_mut().swap_remove(i).1,
                |m| {
                    let (l, g) = m.loss_and_grads(batch, lambda).expect("valid batch");
                    (l, g.tensors()[i].1.clone())
                },
                eps,
            )
        })
        .collect())
}
