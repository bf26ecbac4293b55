//! Offline stages that tie the modules together: hull labels, per-zone
//! training sets, classifier training and scene-level inference.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{
    train_bundle, Architecture, CnnError, Layout, TrainConfig, TrainOutcome, WeightBundle,
};
use crate::domain::{Resolution, ZoneError, ZoneTable};
use crate::eval::SceneDecision;
use crate::features::{
    assemble_tensor, compute_normalization, FeatureError, FeatureTensor, FrameMatrix, Normalization,
    StatsWindow, WINDOW_FRAMES,
};
use crate::ingest::{FrameStats, Metric, RqTable, SceneKey, SceneSpan};
use crate::ladder::{ground_truth_label, upper_convex_hull, LadderError};

/// One label target per default zone.
pub const DEFAULT_LABEL_TARGETS: [f64; 4] = [1.5, 3.5, 7.5, 15.0];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scene {0} has no rate-quality measurements")]
    MissingScene(SceneKey),
    #[error("frame {0} is not in the stats log")]
    FrameNotFound(u64),
    #[error("no labels for zone {0}")]
    NoLabels(u8),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("zone {zone}: {source}")]
    Train { zone: u8, source: CnnError },
    #[error(transparent)]
    Cnn(#[from] CnnError),
}

/// Hull-derived label of one scene for one zone at one target bitrate.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub scene: SceneKey,
    pub zone_id: u8,
    pub target: f64,
    pub label: u8,
    pub resolution: Resolution,
}

#[derive(Serialize, Deserialize)]
struct LabelCsv {
    clip_id: String,
    scene_id: String,
    zone_id: u8,
    target_bitrate_mbps: f64,
    label: u8,
    resolution: Resolution,
}

/// Labels every scene of `rq` at every target.
pub fn compute_labels(
    rq: &RqTable,
    zones: &ZoneTable,
    targets: &[f64],
    metric: Metric,
) -> Result<Vec<LabelRow>, PipelineError> {
    let mut rows = Vec::with_capacity(rq.len() * targets.len());
    for (key, points) in rq {
        let hull = upper_convex_hull(points, metric)?;
        for &target in targets {
            let zone = zones.zone_for_bitrate(target)?.zone;
            let label = ground_truth_label(&hull, target, zone)?;
            rows.push(LabelRow {
                scene: key.clone(),
                zone_id: zone.id,
                target,
                label,
                resolution: zone.resolution_for_label(label),
            });
        }
    }
    Ok(rows)
}

pub fn write_labels<W: Write>(writer: W, rows: &[LabelRow]) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(LabelCsv {
            clip_id: r.scene.clip_id.clone(),
            scene_id: r.scene.scene_id.clone(),
            zone_id: r.zone_id,
            target_bitrate_mbps: r.target,
            label: r.label,
            resolution: r.resolution,
        })?;
    }
    wtr.flush().map_err(|e| PipelineError::Csv(e.into()))?;
    Ok(())
}

/// CSV columns: `clip_id, scene_id, zone_id, target_bitrate_mbps, label, resolution`.
pub fn parse_labels<R: Read>(reader: R) -> Result<Vec<LabelRow>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<LabelCsv>()
        .enumerate()
        .map(|(i, row)| {
            let r = row.map_err(|e| PipelineError::MalformedRow { row: i + 2, reason: e.to_string() })?;
            if r.label > 1 {
                return Err(PipelineError::MalformedRow { row: i + 2, reason: format!("label {} is not 0 or 1", r.label) });
            }
            Ok(LabelRow {
                scene: SceneKey::new(r.clip_id, r.scene_id),
                zone_id: r.zone_id,
                target: r.target_bitrate_mbps,
                label: r.label,
                resolution: r.resolution,
            })
        })
        .collect()
}

pub fn frame_matrices(frames: &[FrameStats]) -> Result<Vec<FrameMatrix>, PipelineError> {
    frames.iter().map(|f| FrameMatrix::from_frame(f).map_err(PipelineError::from)).collect()
}

fn position(frames: &[FrameStats], frame_index: u64) -> Result<usize, PipelineError> {
    frames
        .binary_search_by_key(&frame_index, |f| f.frame_index)
        .map_err(|_| PipelineError::FrameNotFound(frame_index))
}

/// For each scene, the stats-log position of the first of the 60 frames
/// preceding it, or `None` when fewer than 60 frames precede it. With
/// `same_clip`, windows reaching back into another clip are also `None`.
pub fn window_starts(
    frames: &[FrameStats],
    spans: &[SceneSpan],
    same_clip: bool,
) -> Result<Vec<Option<usize>>, PipelineError> {
    spans
        .iter()
        .map(|span| {
            let pos = position(frames, span.first_frame)?;
            if pos < WINDOW_FRAMES {
                return Ok(None);
            }
            let start = pos - WINDOW_FRAMES;
            if same_clip {
                let first = frames[start].frame_index;
                let owner = spans.iter().rev().find(|s| s.first_frame <= first);
                if owner.is_none_or(|s| !s.contains(first) || s.key.clip_id != span.key.clip_id) {
                    return Ok(None);
                }
            }
            Ok(Some(start))
        })
        .collect()
}

/// Standardized tensor of the 60 matrices starting at `start`.
pub fn window_tensor(matrices: &[FrameMatrix], start: usize, norm: &Normalization) -> Result<FeatureTensor, PipelineError> {
    let mut w = StatsWindow::new();
    for m in &matrices[start..start + WINDOW_FRAMES] {
        w.push_matrix(m.clone());
    }
    Ok(assemble_tensor(&w, norm)?)
}

/// Normalization over every frame of the given scenes.
pub fn normalization_for(
    frames: &[FrameStats],
    matrices: &[FrameMatrix],
    spans: &[SceneSpan],
) -> Result<Normalization, PipelineError> {
    let mut selected = Vec::new();
    for span in spans {
        let pos = position(frames, span.first_frame)?;
        let end = (pos + span.frame_count as usize).min(frames.len());
        selected.extend(&matrices[pos..end]);
    }
    Ok(compute_normalization(selected)?)
}

/// Training examples of one zone.
#[derive(Clone, Debug)]
pub struct ZoneDataset {
    pub zone_id: u8,
    pub scenes: Vec<SceneKey>,
    pub examples: Vec<(FeatureTensor, u8)>,
}

impl ZoneDataset {
    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.1 == 1).count()
    }
}

/// One example per (scene, label row) for every scene with a window; the
/// window is the 60 frames before the scene starts.
pub fn build_datasets(
    matrices: &[FrameMatrix],
    spans: &[SceneSpan],
    windows: &[Option<usize>],
    labels: &[LabelRow],
    norm: &Normalization,
    zones: &ZoneTable,
) -> Result<Vec<ZoneDataset>, PipelineError> {
    let mut by_scene: BTreeMap<&SceneKey, Vec<&LabelRow>> = BTreeMap::new();
    for l in labels {
        by_scene.entry(&l.scene).or_default().push(l);
    }
    let mut sets: Vec<ZoneDataset> = zones
        .zones()
        .iter()
        .map(|z| ZoneDataset { zone_id: z.id, scenes: Vec::new(), examples: Vec::new() })
        .collect();
    for (span, start) in spans.iter().zip(windows) {
        let (Some(start), Some(rows)) = (start, by_scene.get(&span.key)) else { continue };
        let tensor = window_tensor(matrices, *start, norm)?;
        for row in rows {
            if let Some(set) = sets.iter_mut().find(|s| s.zone_id == row.zone_id) {
                set.scenes.push(span.key.clone());
                set.examples.push((tensor.clone(), row.label));
            }
        }
    }
    Ok(sets)
}

/// Trains one bundle per non-empty zone dataset. Zone `z` uses seed
/// `config.seed + z`.
pub fn train_zone_bundles(
    datasets: &[ZoneDataset],
    norm: &Normalization,
    layout: Layout,
    config: &TrainConfig,
) -> Result<Vec<(WeightBundle, TrainOutcome)>, PipelineError> {
    let arch = Architecture::default_for(layout);
    datasets
        .iter()
        .map(|set| {
            if set.examples.is_empty() {
                return Err(PipelineError::NoLabels(set.zone_id));
            }
            let cfg = TrainConfig { seed: config.seed.wrapping_add(u64::from(set.zone_id)), ..config.clone() };
            train_bundle(&set.examples, *norm, set.zone_id, layout, &arch, &cfg)
                .map_err(|source| PipelineError::Train { zone: set.zone_id, source })
        })
        .collect()
}

/// Share of `set`'s examples whose predicted label matches.
pub fn agreement(bundle: &WeightBundle, set: &ZoneDataset) -> Result<f64, PipelineError> {
    if set.examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (tensor, label) in &set.examples {
        hits += usize::from(bundle.predict(tensor)? == *label);
    }
    Ok(hits as f64 / set.examples.len() as f64)
}

/// CAE decisions per scene and target; scenes without a window get the
/// zone's static resolution.
pub fn infer_decisions(
    matrices: &[FrameMatrix],
    spans: &[SceneSpan],
    windows: &[Option<usize>],
    bundles: &[WeightBundle],
    zones: &ZoneTable,
    targets: &[f64],
) -> Result<Vec<SceneDecision>, PipelineError> {
    let mut out = Vec::with_capacity(spans.len() * targets.len());
    for (span, start) in spans.iter().zip(windows) {
        for &target in targets {
            let zone = zones.zone_for_bitrate(target)?.zone;
            let (resolution, probability) = match start {
                None => (zone.static_resolution, None),
                Some(start) => {
                    let bundle = bundles
                        .iter()
                        .find(|b| b.zone_id == zone.id)
                        .ok_or(PipelineError::NoLabels(zone.id))?;
                    let tensor = window_tensor(matrices, *start, &bundle.normalization)?;
                    let p = bundle.forward(&tensor)?;
                    (zone.resolution_for_label(bundle.label_for(p)), Some(p))
                }
            };
            out.push(SceneDecision { scene: span.key.clone(), target, resolution, probability });
        }
    }
    Ok(out)
}

pub fn static_decisions(
    spans: &[SceneSpan],
    zones: &ZoneTable,
    targets: &[f64],
) -> Result<Vec<SceneDecision>, PipelineError> {
    let mut out = Vec::with_capacity(spans.len() * targets.len());
    for span in spans {
        for &target in targets {
            let zone = zones.zone_for_bitrate(target)?.zone;
            out.push(SceneDecision {
                scene: span.key.clone(),
                target,
                resolution: zone.static_resolution,
                probability: None,
            });
        }
    }
    Ok(out)
}

/// Decisions that follow the hull labels.
pub fn oracle_decisions(labels: &[LabelRow], spans: &[SceneSpan]) -> Vec<SceneDecision> {
    let wanted: std::collections::BTreeSet<&SceneKey> = spans.iter().map(|s| &s.key).collect();
    labels
        .iter()
        .filter(|l| wanted.contains(&l.scene))
        .map(|l| SceneDecision { scene: l.scene.clone(), target: l.target, resolution: l.resolution, probability: None })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic_session, SyntheticConfig};

    fn session() -> crate::ingest::SyntheticSession {
        let cfg = SyntheticConfig { n_scenes: 6, frames_per_scene: 70, scenes_per_clip: 3, ..SyntheticConfig::default() };
        generate_synthetic_session(&cfg).unwrap()
    }

    #[test]
    fn windows_respect_clip_boundaries() {
        let s = session();
        let any = window_starts(&s.frames, &s.scenes, false).unwrap();
        let same = window_starts(&s.frames, &s.scenes, true).unwrap();
        assert_eq!(any, vec![None, Some(10), Some(80), Some(150), Some(220), Some(290)]);
        assert_eq!(same, vec![None, Some(10), Some(80), None, Some(220), Some(290)]);
    }

    #[test]
    fn labels_round_trip_and_cover_every_scene() {
        let s = session();
        let zones = ZoneTable::default();
        let labels = compute_labels(&s.rq, &zones, &DEFAULT_LABEL_TARGETS, Metric::Vmaf).unwrap();
        assert_eq!(labels.len(), 6 * 4);
        let mut buf = Vec::new();
        write_labels(&mut buf, &labels).unwrap();
        assert_eq!(parse_labels(buf.as_slice()).unwrap(), labels);
        assert!(labels.iter().all(|l| zones.zone(l.zone_id).unwrap().candidates().contains(&l.resolution)));
    }

    #[test]
    fn datasets_have_one_example_per_windowed_scene_and_zone() {
        let s = session();
        let zones = ZoneTable::default();
        let labels = compute_labels(&s.rq, &zones, &DEFAULT_LABEL_TARGETS, Metric::Vmaf).unwrap();
        let m = frame_matrices(&s.frames).unwrap();
        let w = window_starts(&s.frames, &s.scenes, true).unwrap();
        let norm = normalization_for(&s.frames, &m, &s.scenes).unwrap();
        let sets = build_datasets(&m, &s.scenes, &w, &labels, &norm, &zones).unwrap();
        assert_eq!(sets.len(), 4);
        assert!(sets.iter().all(|d| d.examples.len() == 4));
    }

    #[test]
    fn static_and_oracle_decisions_use_zone_pairs() {
        let s = session();
        let zones = ZoneTable::default();
        let stat = static_decisions(&s.scenes, &zones, &DEFAULT_LABEL_TARGETS).unwrap();
        let got: Vec<Resolution> = stat[..4].iter().map(|d| d.resolution).collect();
        assert_eq!(got, vec![Resolution::P360, Resolution::P540, Resolution::P720, Resolution::P1080]);
        let labels = compute_labels(&s.rq, &zones, &DEFAULT_LABEL_TARGETS, Metric::Vmaf).unwrap();
        assert_eq!(oracle_decisions(&labels, &s.scenes[..2]).len(), 8);
    }
}
