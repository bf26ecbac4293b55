//! Content-adaptive resolution selection for interactive game streaming.

pub mod cnn;
pub mod domain;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod ladder;
pub mod pipeline;
pub mod runtime;
