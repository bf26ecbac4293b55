//! Online decision engine, sender-side channel model and session replay.

pub mod channel;
pub mod engine;
pub mod simulate;

use thiserror::Error;

use crate::cnn::CnnError;
use crate::domain::{Resolution, ZoneError};
use crate::features::FeatureError;

pub use channel::{step_channel, ChannelModel, FrameOutcome, DEFAULT_DROP_THRESHOLD};
pub use engine::{static_mimic_bundle, static_policy, Decision, DecisionSource, Policy, Session};
pub use simulate::{simulate_session, write_decision_log, write_session_summary, SceneOutcome, SessionReport};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("no weight bundle for zone {0}")]
    MissingBundle(u8),
    #[error("no oracle label for the scene at frame {frame} in zone {zone}")]
    MissingLabel { frame: u64, zone: u8 },
    #[error("frame {frame}: {reason}")]
    InvalidFrame { frame: u64, reason: String },
    #[error("stream lengths differ: {frames} frames, {cc} cc samples, {sizes} size rows")]
    StreamLengthMismatch { frames: usize, cc: usize, sizes: usize },
    #[error("no size model for {0}")]
    NoSizeModel(Resolution),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
}
