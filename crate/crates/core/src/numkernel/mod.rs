//! Dense numeric kernels with explicit forward and backward passes.
//!
//! Every differentiable op comes as a `*_forward` / `*_backward` pair (or a
//! cache-returning forward). There is no tape: callers compose backward
//! passes by hand, in reverse order of the forward.

mod gradcheck;
mod matrix;
mod ops;

pub use gradcheck::{finite_diff_check, finite_diff_entries, EntryCheck};
pub use matrix::Matrix;
pub use ops::{
    attention, attention_backward, conv1d_backward, conv1d_forward, cross_entropy,
    linear_backward, linear_forward, mean_rows_backward, softmax_backward, softmax_rows,
    tanh_backward, AttentionGrads, ConvKernel, GradPair, LinearGrads,
};
