//! Scene map (CSV): which frame range of a stats log belongs to which
//! `clip_id/scene_id` of the RQ table.
//!
//! Columns: `clip_id, scene_id, first_frame, frame_count, complexity`.
//! `complexity` is the latent value of synthetic scenes and may be empty.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rq_table::SceneKey;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpan {
    pub key: SceneKey,
    pub first_frame: u64,
    pub frame_count: u64,
    pub complexity: Option<f64>,
}

impl SceneSpan {
    pub fn contains(&self, frame_index: u64) -> bool {
        frame_index >= self.first_frame && frame_index < self.first_frame + self.frame_count
    }
}

#[derive(Debug, Error)]
pub enum SceneMapError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Serialize, Deserialize)]
struct Row {
    clip_id: String,
    scene_id: String,
    first_frame: u64,
    frame_count: u64,
    complexity: Option<f64>,
}

/// Reads a scene map; spans must be non-empty, in frame order and disjoint.
pub fn parse_scene_map<R: Read>(reader: R) -> Result<Vec<SceneSpan>, SceneMapError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut spans: Vec<SceneSpan> = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row_no = i + 2;
        let r = row.map_err(|e| SceneMapError::MalformedRow { row: row_no, reason: e.to_string() })?;
        if r.frame_count == 0 {
            return Err(SceneMapError::MalformedRow { row: row_no, reason: "frame_count is 0".into() });
        }
        if let Some(prev) = spans.last() {
            if r.first_frame < prev.first_frame + prev.frame_count {
                return Err(SceneMapError::MalformedRow {
                    row: row_no,
                    reason: format!("scene starts at frame {} inside the previous scene", r.first_frame),
                });
            }
        }
        spans.push(SceneSpan {
            key: SceneKey::new(r.clip_id, r.scene_id),
            first_frame: r.first_frame,
            frame_count: r.frame_count,
            complexity: r.complexity,
        });
    }
    Ok(spans)
}

pub fn write_scene_map<W: Write>(writer: W, spans: &[SceneSpan]) -> Result<(), SceneMapError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in spans {
        wtr.serialize(Row {
            clip_id: s.key.clip_id.clone(),
            scene_id: s.key.scene_id.clone(),
            first_frame: s.first_frame,
            frame_count: s.frame_count,
            complexity: s.complexity,
        })?;
    }
    wtr.flush().map_err(|e| SceneMapError::Csv(e.into()))?;
    Ok(())
}
