//! Evaluation metrics and the dataset bias audit.

mod audit;
mod ranking;
mod report;
mod sets;

pub use audit::{
    audit_top_k, binary_entropy, count_entropy, conditional_entropy_audit, histogram_bin, AuditReport,
    ContextStats, HISTOGRAM_BINS,
};
pub use ranking::{
    average_precision, mean_average_precision, per_class_average_precision, pr_equal_threshold,
};
pub use report::MetricReport;
pub use sets::{aae, f1_label_based, f1_sample_based, jaccard_coefficient};
