//! Classification heads: binary misogyny label and five-way category.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::MultimodalContext;
use crate::numkernel::{linear_forward, softmax_rows, Matrix};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Social domain of a meme. Integer codes follow declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Kitchen,
    Leadership,
    Working,
    Shopping,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::Kitchen, Category::Leadership, Category::Working, Category::Shopping, Category::Other];
    pub const COUNT: usize = 5;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Category> {
        Category::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Kitchen => "Kitchen",
            Category::Leadership => "Leadership",
            Category::Working => "Working",
            Category::Shopping => "Shopping",
            Category::Other => "Other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub misogyny_prob: f64,
    pub category_dist: [f64; 5],
    pub label: bool,
    pub category: Category,
}

impl Prediction {
    pub fn from_logits(label_logits: &[f64], category_logits: &[f64], threshold: f64) -> Result<Self> {
        if label_logits.len() != 2 || category_logits.len() != Category::COUNT {
            return Err(Error::dim("head logits have the wrong width"));
        }
        let py = softmax_rows(&Matrix::row_vector(label_logits))?;
        let pc = softmax_rows(&Matrix::row_vector(category_logits))?;
        let misogyny_prob = py.get(0, 1);
        let mut category_dist = [0.0; 5];
        category_dist.copy_from_slice(pc.data());
        Ok(Prediction {
            misogyny_prob,
            category_dist,
            label: misogyny_prob >= threshold,
            category: Category::ALL[argmax(&category_dist)],
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub label_w: Matrix,
    pub label_b: Matrix,
    pub category_w: Matrix,
    pub category_b: Matrix,
    pub threshold: f64,
}

impl HeadParams {
    pub fn init(d_h: usize, seed: u64) -> Self {
        let bound = 1.0 / (d_h as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6865_6164_7300_0002);
        HeadParams {
            label_w: Matrix::uniform(d_h, 2, bound, &mut rng),
            label_b: Matrix::zeros(1, 2),
            category_w: Matrix::uniform(d_h, Category::COUNT, bound, &mut rng),
            category_b: Matrix::zeros(1, Category::COUNT),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn zeros(d_h: usize) -> Self {
        HeadParams {
            label_w: Matrix::zeros(d_h, 2),
            label_b: Matrix::zeros(1, 2),
            category_w: Matrix::zeros(d_h, Category::COUNT),
            category_b: Matrix::zeros(1, Category::COUNT),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn d_h(&self) -> usize {
        self.label_w.rows()
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("head.label_w".into(), &self.label_w),
            ("head.label_b".into(), &self.label_b),
            ("head.category_w".into(), &self.category_w),
            ("head.category_b".into(), &self.category_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("head.label_w".into(), &mut self.label_w),
            ("head.label_b".into(), &mut self.label_b),
            ("head.category_w".into(), &mut self.category_w),
            ("head.category_b".into(), &mut self.category_b),
        ]
    }

    /// Returns `(label_logits, category_logits)` for a `1 × d_h` feature.
    pub fn logits(&self, feature: &Matrix) -> Result<(Matrix, Matrix)> {
        if feature.rows() != 1 || feature.cols() != self.d_h() {
            return Err(Error::dim(format!(
                "head expects a 1x{} feature, got {}x{}",
                self.d_h(),
                feature.rows(),
                feature.cols()
            )));
        }
        Ok((
            linear_forward(feature, &self.label_w, &self.label_b)?,
            linear_forward(feature, &self.category_w, &self.category_b)?,
        ))
    }

    pub fn predict_feature(&self, feature: &Matrix) -> Result<Prediction> {
        let (ly, lc) = self.logits(feature)?;
        Prediction::from_logits(ly.data(), lc.data(), self.threshold)
    }
}

/// Arithmetic mean over all rows of the context.
pub fn pool_context(ctx: &MultimodalContext) -> Matrix {
    ctx.x.mean_rows().expect("context has at least one row")
}

/// Classifies a context. Uses the blend output when present, else the pooled context.
pub fn predict(ctx: &MultimodalContext, p: &HeadParams) -> Result<Prediction> {
    match &ctx.z_test {
        Some(z) => p.predict_feature(z),
        None => p.predict_feature(&pool_context(ctx)),
    }
}
