use crate::encoders::{encode_text, tokenize, EncoderParams};
use crate::error::{Error, Result};
use crate::heads::Category;
use crate::numkernel::Matrix;

use super::readability::sentences;

fn pooled(text: &str, enc: &EncoderParams) -> Result<Matrix> {
    if text.trim().is_empty() {
        return Err(Error::Argument("semantic similarity needs non-empty text".into()));
    }
    let tokens = tokenize(text, enc.vocab()).truncated(enc.max_len());
    Ok(encode_text(&tokens, enc)?.mean())
}

/// `(cos(u, v) + 1) / 2`, clamped against rounding.
pub fn pooled_similarity(u: &Matrix, v: &Matrix) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    if u == v {
        return Ok(1.0);
    }
    let cos = u.dot(v)? / (nu * nv);
    Ok(((cos + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Cosine of the mean-pooled text encodings, mapped to `[0, 1]`.
pub fn semsim(a: &str, b: &str, enc: &EncoderParams) -> Result<f64> {
    pooled_similarity(&pooled(a, enc)?, &pooled(b, enc)?)
}

pub fn relevance(rationale: &str, meme_text: &str, enc: &EncoderParams) -> Result<f64> {
    semsim(rationale, meme_text, enc)
}

/// Mean similarity of adjacent sentences; 1 for a single sentence.
pub fn coherence(rationale: &str, enc: &EncoderParams) -> Result<f64> {
    let parts = sentences(rationale);
    if parts.is_empty() {
        return Err(Error::Argument("coherence needs a non-empty rationale".into()));
    }
    if parts.len() == 1 {
        return Ok(1.0);
    }
    let pooled: Vec<Matrix> = parts.iter().map(|s| pooled(s, enc)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for pair in pooled.windows(2) {
        total += pooled_similarity(&pair[0], &pair[1])?;
    }
    Ok(total / (pooled.len() - 1) as f64)
}

/// Reference sentence describing each category, used for SemSim when no
/// gold rationale is available.
pub fn category_reference(c: Category) -> &'static str {
    match c {
        Category::Kitchen => "The meme confines women to cooking, cleaning and kitchen chores as their proper place.",
        Category::Leadership => "The meme mocks women as unfit to lead, govern or hold positions of authority.",
        Category::Working => "The meme belittles women in the workplace and questions their professional competence.",
        Category::Shopping => "The meme stereotypes women as frivolous shoppers who waste money.",
        Category::Other => "The meme demeans or stereotypes women in another social domain.",
    }
}
