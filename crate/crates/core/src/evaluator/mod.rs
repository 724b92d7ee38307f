//! Instance-segmentation evaluation: one-to-one greedy matching,
//! precision/recall, 101-point interpolated average precision at single and
//! swept IoU thresholds, per-class and macro reports, and the hierarchical
//! vessel-conditioned protocol.
//!
//! Matching rules, pinned: predictions are taken in descending score order
//! (ties by input order); each takes the unmatched same-class ground truth of
//! highest IoU at or above the threshold (ties by lowest ground-truth index).
//! Metrics are computed over masks. Scores only ever matter through their
//! ranking.

mod ap;
mod conditioned;
mod matching;
mod report;

pub use ap::{ap_range, average_precision, AP_SWEEP_THRESHOLDS};
pub use conditioned::{vessel_conditioned_eval, ConditionedCell, ConditionedConfig, ConditionedResult};
pub use matching::{match_instances, precision_recall, GtView, MatchResult, PredView};
pub use report::{evaluate, macro_report, write_report_json, ClassMetrics, ClassReport, EvalConfig, EvalReport, MacroSummary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("instances from multiple images passed to a per-image operation")]
    MixedImageIds,
    #[error("iou threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("macro average over an empty class set")]
    EmptyMacro,
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
