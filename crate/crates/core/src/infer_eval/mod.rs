//! Inference with sample ensembling and the evaluation metric suite.

mod inference;
pub mod metrics;
mod report;

pub use inference::run_inference;
pub use metrics::{auroc, average_precision, f1_max, pro, Grid, DEFAULT_FPR_LIMIT};
pub use report::{evaluate, CategoryMetrics, EvalItem, MetricsReport, TSV_HEADER};
