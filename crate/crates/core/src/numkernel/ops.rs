use crate::error::{Error, Result};

use super::Matrix;

/// A value together with the gradient of some scalar with respect to it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub value: Matrix,
    pub grad: Matrix,
}

impl GradPair {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        GradPair { value, grad }
    }

    pub fn with_grad(value: Matrix, grad: Matrix) -> Result<Self> {
        if !value.same_shape(&grad) {
            return Err(Error::dim("gradient shape differs from value shape"));
        }
        Ok(GradPair { value, grad })
    }
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::dim("softmax of an empty matrix"));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Given `y = softmax_rows(x)` and `dy`, returns `dx`.
pub fn softmax_backward(y: &Matrix, dy: &Matrix) -> Result<Matrix> {
    if !y.same_shape(dy) {
        return Err(Error::dim("softmax_backward shape mismatch"));
    }
    let mut dx = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let dyr = dy.row(r);
        let inner: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
            *d = yr[c] * (dyr[c] - inner);
        }
    }
    Ok(dx)
}

/// Scaled dot-product attention. Returns `(weights · v, weights)`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<(Matrix, Matrix)> {
    if q.cols() != k.cols() {
        return Err(Error::dim(format!("query dim {} vs key dim {}", q.cols(), k.cols())));
    }
    if v.rows() != k.rows() {
        return Err(Error::dim(format!("{} keys but {} values", k.rows(), v.rows())));
    }
    let scale = 1.0 / (k.cols() as f64).sqrt();
    let scores = q.matmul_bt(k)?.scale(scale);
    let weights = softmax_rows(&scores)?;
    let out = weights.matmul(v)?;
    Ok((out, weights))
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dq: Matrix,
    pub dk: Matrix,
    pub dv: Matrix,
}

/// Backward pass of [`attention`] given the forward inputs and weights.
pub fn attention_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    weights: &Matrix,
    dout: &Matrix,
) -> Result<AttentionGrads> {
    let scale = 1.0 / (k.cols() as f64).sqrt();
    let dv = weights.matmul_at(dout)?;
    let dweights = dout.matmul_bt(v)?;
    let dscores = softmax_backward(weights, &dweights)?.scale(scale);
    let dq = dscores.matmul(k)?;
    let dk = dscores.matmul_at(q)?;
    Ok(AttentionGrads { dq, dk, dv })
}

/// `x · w + b`, with `b` broadcast over rows and added after the product.
pub fn linear_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    x.matmul(w)?.add_row_broadcast(b)
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: Matrix,
    pub dw: Matrix,
    pub db: Matrix,
}

pub fn linear_backward(x: &Matrix, w: &Matrix, dout: &Matrix) -> Result<LinearGrads> {
    Ok(LinearGrads { dx: dout.matmul_bt(w)?, dw: x.matmul_at(dout)?, db: dout.sum_rows() })
}

/// Stack of `width` matrices, each `in_dim × out_dim`; tap `j` multiplies
/// input row `t·stride + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub taps: Vec<Matrix>,
}

impl ConvKernel {
    pub fn new(taps: Vec<Matrix>) -> Result<Self> {
        let first = taps.first().ok_or_else(|| Error::dim("conv kernel needs at least one tap"))?;
        if taps.iter().any(|t| !t.same_shape(first)) {
            return Err(Error::dim("conv kernel taps differ in shape"));
        }
        Ok(ConvKernel { taps })
    }

    pub fn zeros_like(&self) -> Self {
        ConvKernel { taps: self.taps.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect() }
    }

    pub fn width(&self) -> usize {
        self.taps.len()
    }

    pub fn in_dim(&self) -> usize {
        self.taps[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.taps[0].cols()
    }
}

/// Valid (unpadded) 1-D convolution over the row axis.
pub fn conv1d_forward(seq: &Matrix, kernel: &ConvKernel, stride: usize) -> Result<Matrix> {
    let width = kernel.width();
    if stride == 0 {
        return Err(Error::dim("conv stride must be at least 1"));
    }
    if width > seq.rows() {
        return Err(Error::dim(format!("conv width {width} exceeds sequence length {}", seq.rows())));
    }
    if kernel.in_dim() != seq.cols() {
        return Err(Error::dim(format!(
            "conv expects {} input features, sequence has {}",
            kernel.in_dim(),
            seq.cols()
        )));
    }
    let out_len = (seq.rows() - width) / stride + 1;
    let k_out = kernel.out_dim();
    let mut out = Matrix::zeros(out_len, k_out);
    for t in 0..out_len {
        let out_row = out.row_mut(t);
        for (j, tap) in kernel.taps.iter().enumerate() {
            let input = seq.row(t * stride + j);
            for (i, &x) in input.iter().enumerate() {
                for (o, &w) in out_row.iter_mut().zip(tap.row(i)) {
                    *o += x * w;
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(d_seq, d_kernel)`.
pub fn conv1d_backward(
    seq: &Matrix,
    kernel: &ConvKernel,
    stride: usize,
    dout: &Matrix,
) -> Result<(Matrix, ConvKernel)> {
    let mut dseq = Matrix::zeros(seq.rows(), seq.cols());
    let mut dkernel = kernel.zeros_like();
    for t in 0..dout.rows() {
        let g = dout.row(t);
        for (j, tap) in kernel.taps.iter().enumerate() {
            let r = t * stride + j;
            let x = seq.row(r).to_vec();
            let dtap = &mut dkernel.taps[j];
            for (i, &xi) in x.iter().enumerate() {
                let w = tap.row(i);
                let mut acc = 0.0;
                for (o, &gv) in g.iter().enumerate() {
                    acc += gv * w[o];
                }
                dseq.set(r, i, dseq.get(r, i) + acc);
                for (d, &gv) in dtap.row_mut(i).iter_mut().zip(g) {
                    *d += xi * gv;
                }
            }
        }
    }
    Ok((dseq, dkernel))
}

/// Softmax cross-entropy on a single logit row. Returns `(loss, dloss/dlogits)`.
pub fn cross_entropy(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::Index(format!("gold class {gold} with {} logits", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_norm = max + sum.ln();
    let loss = log_norm - logits[gold];
    let mut grad: Vec<f64> = logits.iter().map(|&l| (l - log_norm).exp()).collect();
    grad[gold] -= 1.0;
    // Clamp tiny negative rounding; NaN passes through for divergence checks.
    let loss = if loss < 0.0 { 0.0 } else { loss };
    Ok((loss, grad))
}

/// Given `y = tanh(x)` and `dy`, returns `dx`.
pub fn tanh_backward(y: &Matrix, dy: &Matrix) -> Result<Matrix> {
    if !y.same_shape(dy) {
        return Err(Error::dim("tanh_backward shape mismatch"));
    }
    let data = y.data().iter().zip(dy.data()).map(|(&y, &g)| g * (1.0 - y * y)).collect();
    Matrix::from_vec(y.rows(), y.cols(), data)
}

/// Spreads the gradient of a `1×cols` row mean back over `rows` rows.
pub fn mean_rows_backward(rows: usize, dmean: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(rows, dmean.cols());
    let inv = 1.0 / rows as f64;
    for r in 0..rows {
        for (o, g) in out.row_mut(r).iter_mut().zip(dmean.data()) {
            *o = g * inv;
        }
    }
    out
}
