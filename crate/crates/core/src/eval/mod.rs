//! Bjøntegaard-Delta metrics, significance testing and ladder comparison
//! reports.

pub mod bd;
pub mod pchip;
pub mod report;
pub mod stats;

use thiserror::Error;

pub use bd::{bd_quality, bd_rate, RdCurve};
pub use pchip::Pchip;
pub use report::{
    evaluate_ladders, parse_decisions, write_decisions, write_report_csv, BdSummary, ComparisonReport,
    FrameDropStats, SceneDecision, SignificanceRow,
};
pub use stats::{cohens_d, midranks, wilcoxon_signed_rank, Alternative, EffectSize, WilcoxonResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("curve needs at least two points")]
    TooFewPoints,
    #[error("curve rates and qualities must strictly increase")]
    NotMonotone,
    #[error("curves do not overlap")]
    NoOverlap,
    #[error("paired samples differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("sample too small")]
    EmptySample,
    #[error("differences have zero variance")]
    DegenerateVariance,
    #[error("decision grids differ: {0}")]
    GridMismatch(String),
    #[error("missing measurement: {0}")]
    MissingMeasurement(String),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(String),
}
