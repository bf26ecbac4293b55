//! Readers and writers for encoder statistics, rate-quality tables, scene
//! maps, per-frame traces and weight bundles, plus a synthetic generator.

pub mod rq_table;
pub mod scenes;
pub mod stats_log;
pub mod synthetic;
pub mod traces;
pub mod weights;

pub use rq_table::*;
pub use scenes::*;
pub use stats_log::*;
pub use synthetic::*;
pub use traces::*;
pub use weights::*;
