//! Frame-by-frame replay of a session through a policy and the channel.

use std::io::Write;

use crate::domain::{Resolution, ZoneTable};
use crate::ingest::{FrameStats, SizeTrace};

use super::channel::{ChannelModel, FrameOutcome};
use super::engine::{Decision, DecisionSource, Policy, Session};
use super::RuntimeError;

/// What happened to one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOutcome {
    pub first_frame: u64,
    pub frames: u64,
    pub resolution: Resolution,
    pub zone_id: Option<u8>,
    pub source: DecisionSource,
    pub probability: Option<f64>,
    pub dropped: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionReport {
    pub decisions: Vec<Decision>,
    pub outcomes: Vec<FrameOutcome>,
    pub scenes: Vec<SceneOutcome>,
    pub dropped: u64,
    pub drop_percent: f64,
}

/// Replays `frames` with the per-frame CC bitrate `cc` and per-resolution
/// size factors `sizes`. The channel capacity follows `cc`; its queue state
/// starts from `channel`.
pub fn simulate_session(
    frames: &[FrameStats],
    cc: &[f64],
    sizes: &SizeTrace,
    zones: &ZoneTable,
    policy: Policy,
    channel: &ChannelModel,
) -> Result<SessionReport, RuntimeError> {
    if cc.len() != frames.len() || sizes.len() != frames.len() {
        return Err(RuntimeError::StreamLengthMismatch { frames: frames.len(), cc: cc.len(), sizes: sizes.len() });
    }
    let mut session = Session::new(zones.clone(), policy);
    let mut ch = channel.clone();
    let mut outcomes = Vec::with_capacity(frames.len());
    let mut scenes: Vec<SceneOutcome> = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let d = session.on_frame(frame, cc[i])?;
        if !Resolution::STREAMED.contains(&d.resolution) {
            return Err(RuntimeError::NoSizeModel(d.resolution));
        }
        ch.capacity_mbps = cc[i];
        let outcome = ch.step(sizes.bytes(i, d.resolution, cc[i], ch.fps));
        outcomes.push(outcome);
        if d.idr || scenes.is_empty() {
            scenes.push(SceneOutcome {
                first_frame: d.frame_index,
                frames: 0,
                resolution: d.resolution,
                zone_id: d.zone_id,
                source: d.source,
                probability: d.probability,
                dropped: 0,
            });
        }
        let scene = scenes.last_mut().expect("pushed above");
        scene.frames += 1;
        scene.dropped += u64::from(outcome == FrameOutcome::Dropped);
    }
    Ok(SessionReport {
        decisions: session.into_log(),
        outcomes,
        scenes,
        dropped: ch.dropped,
        drop_percent: ch.drop_percent(),
    })
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(String::new, |p| format!("{p:.6}"))
}

/// Per-frame CSV: `frame_index, idr, resolution, source, zone_id, probability, outcome`.
pub fn write_decision_log<W: Write>(writer: W, report: &SessionReport) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["frame_index", "idr", "resolution", "source", "zone_id", "probability", "outcome"])?;
    for (d, o) in report.decisions.iter().zip(&report.outcomes) {
        wtr.write_record([
            d.frame_index.to_string(),
            d.idr.to_string(),
            d.resolution.to_string(),
            d.source.to_string(),
            d.zone_id.map_or_else(String::new, |z| z.to_string()),
            opt_f64(d.probability),
            match o {
                FrameOutcome::Delivered => "delivered".to_string(),
                FrameOutcome::Dropped => "dropped".to_string(),
            },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-scene CSV with a final `total` row for the whole session.
pub fn write_session_summary<W: Write>(writer: W, report: &SessionReport) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["first_frame", "frames", "resolution", "source", "zone_id", "probability", "dropped", "drop_percent"])?;
    for s in &report.scenes {
        wtr.write_record([
            s.first_frame.to_string(),
            s.frames.to_string(),
            s.resolution.to_string(),
            s.source.to_string(),
            s.zone_id.map_or_else(String::new, |z| z.to_string()),
            opt_f64(s.probability),
            s.dropped.to_string(),
            format!("{:.6}", 100.0 * s.dropped as f64 / s.frames as f64),
        ])?;
    }
    wtr.write_record([
        "total".to_string(),
        report.decisions.len().to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        report.dropped.to_string(),
        format!("{:.6}", report.drop_percent),
    ])?;
    wtr.flush()?;
    Ok(())
}
