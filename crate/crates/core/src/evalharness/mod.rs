//! Scores for classifications and generated rationales, with report rendering.
//!
//! The similarity-based rationale metrics are embedding cosines
//! under a frozen text encoder; readability is normalized Flesch Reading
//! Ease. Every metric lies in `[0, 1]`.

mod classify;
mod readability;
mod report;
mod semantic;

pub use classify::{f1, macro_f1, per_class_f1, Confusion};
pub use readability::{readability, sentences, syllables, text_counts, TextCounts};
pub use report::{render_csv, render_table, round_half_up, MetricReport, ReportRow, OPERATIONALIZATION_NOTE};
pub use semantic::{category_reference, coherence, pooled_similarity, relevance, semsim};
