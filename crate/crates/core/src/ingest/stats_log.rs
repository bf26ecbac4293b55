//! Per-frame encoder statistics and their line-delimited log format.
//!
//! One JSON object per line. Keys are `frame_index`, `scene_change`,
//! `resolution`, `frame_size_bytes` and the seven per-line arrays named as the
//! encoder names them (`numIntraBlockPerLine`, ...). Arrays run from the top
//! CTB row to the bottom one.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ctb_rows, Resolution, DEFAULT_CTB_SIZE};

/// Highest legal HEVC QP.
pub const MAX_QP: f64 = 51.0;

/// The seven per-line statistics, in tensor channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    NumIntraBlock,
    NumInterBlock,
    NumSkipBlock,
    AverageSatd,
    MinQp,
    MaxQp,
    MotionType,
}

impl Feature {
    pub const COUNT: usize = 7;

    pub const ALL: [Feature; 7] = [
        Feature::NumIntraBlock,
        Feature::NumInterBlock,
        Feature::NumSkipBlock,
        Feature::AverageSatd,
        Feature::MinQp,
        Feature::MaxQp,
        Feature::MotionType,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Feature::NumIntraBlock => "numIntraBlockPerLine",
            Feature::NumInterBlock => "numInterBlockPerLine",
            Feature::NumSkipBlock => "numSkipBlockPerLine",
            Feature::AverageSatd => "averageSatdPerLine",
            Feature::MinQp => "minQpPerLine",
            Feature::MaxQp => "maxQpPerLine",
            Feature::MotionType => "motionTypePerLine",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Encoder statistics for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameStats {
    pub frame_index: u64,
    pub scene_change: bool,
    pub resolution: Resolution,
    #[serde(rename = "frame_size_bytes")]
    pub frame_size: u64,
    #[serde(rename = "numIntraBlockPerLine")]
    pub num_intra_block: Vec<f64>,
    #[serde(rename = "numInterBlockPerLine")]
    pub num_inter_block: Vec<f64>,
    #[serde(rename = "numSkipBlockPerLine")]
    pub num_skip_block: Vec<f64>,
    #[serde(rename = "averageSatdPerLine")]
    pub average_satd: Vec<f64>,
    #[serde(rename = "minQpPerLine")]
    pub min_qp: Vec<f64>,
    #[serde(rename = "maxQpPerLine")]
    pub max_qp: Vec<f64>,
    #[serde(rename = "motionTypePerLine")]
    pub motion_type: Vec<f64>,
}

impl FrameStats {
    pub fn feature(&self, feature: Feature) -> &[f64] {
        match feature {
            Feature::NumIntraBlock => &self.num_intra_block,
            Feature::NumInterBlock => &self.num_inter_block,
            Feature::NumSkipBlock => &self.num_skip_block,
            Feature::AverageSatd => &self.average_satd,
            Feature::MinQp => &self.min_qp,
            Feature::MaxQp => &self.max_qp,
            Feature::MotionType => &self.motion_type,
        }
    }

    /// Checks every frame invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let rows = ctb_rows(self.resolution, DEFAULT_CTB_SIZE);
        if self.frame_size == 0 {
            return Err("frame_size_bytes must be positive".into());
        }
        for f in Feature::ALL {
            let values = self.feature(f);
            if values.len() != rows {
                return Err(format!(
                    "{} has {} lines, expected {} for {}",
                    f.key(),
                    values.len(),
                    rows,
                    self.resolution
                ));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(format!("{} contains non-finite value {}", f.key(), v));
            }
            let non_negative = matches!(
                f,
                Feature::NumIntraBlock
                    | Feature::NumInterBlock
                    | Feature::NumSkipBlock
                    | Feature::AverageSatd
            );
            if non_negative {
                if let Some(v) = values.iter().find(|v| **v < 0.0) {
                    return Err(format!("{} contains negative value {}", f.key(), v));
                }
            }
            if matches!(f, Feature::MinQp | Feature::MaxQp) {
                if let Some(v) = values.iter().find(|v| !(0.0..=MAX_QP).contains(*v)) {
                    return Err(format!("{} value {} outside [0, 51]", f.key(), v));
                }
            }
        }
        for (line, (lo, hi)) in self.min_qp.iter().zip(&self.max_qp).enumerate() {
            if lo > hi {
                return Err(format!("line {line}: minQp {lo} exceeds maxQp {hi}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StatsLogError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: invariant violation: {reason}")]
    InvariantViolation { line: usize, reason: String },
    #[error("line {line}: frame_index {found} does not follow {previous}")]
    NonMonotoneFrameIndex { line: usize, previous: u64, found: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads a stats log. Blank lines are skipped; frame indices must strictly
/// increase.
pub fn parse_stats_log<R: BufRead>(reader: R) -> Result<Vec<FrameStats>, StatsLogError> {
    let mut frames = Vec::new();
    let mut previous: Option<u64> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameStats = serde_json::from_str(&line).map_err(|e| {
            StatsLogError::MalformedRecord { line: line_no, reason: e.to_string() }
        })?;
        frame
            .validate()
            .map_err(|reason| StatsLogError::InvariantViolation { line: line_no, reason })?;
        if let Some(prev) = previous {
            if frame.frame_index <= prev {
                return Err(StatsLogError::NonMonotoneFrameIndex {
                    line: line_no,
                    previous: prev,
                    found: frame.frame_index,
                });
            }
        }
        previous = Some(frame.frame_index);
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_stats_log<W: Write>(mut writer: W, frames: &[FrameStats]) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut writer, f)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
