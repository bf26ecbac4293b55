//! Per-stream decision engine: resolution changes only at scene changes.

use std::collections::BTreeMap;
use std::fmt;

use crate::cnn::{Architecture, ConvNet, Layout, WeightBundle, DEFAULT_THRESHOLD};
use crate::domain::{Resolution, Zone, ZoneTable};
use crate::features::{assemble_tensor, Normalization, StatsWindow};
use crate::ingest::FrameStats;

use super::RuntimeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionSource {
    /// Zone classifier on a full window.
    Cae,
    /// Window not yet full; the zone's static resolution.
    StaticFallback,
    /// Static-ladder baseline.
    Static,
    /// Precomputed hull labels.
    Oracle,
    /// Not a scene change; the current resolution is kept.
    Unchanged,
}

impl DecisionSource {
    pub fn name(self) -> &'static str {
        match self {
            DecisionSource::Cae => "cae",
            DecisionSource::StaticFallback => "static-fallback",
            DecisionSource::Static => "static",
            DecisionSource::Oracle => "oracle",
            DecisionSource::Unchanged => "unchanged",
        }
    }
}

impl fmt::Display for DecisionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub frame_index: u64,
    pub resolution: Resolution,
    /// Set exactly on scene-change frames.
    pub idr: bool,
    pub source: DecisionSource,
    pub probability: Option<f64>,
    /// Active zone on scene-change frames.
    pub zone_id: Option<u8>,
}

/// How a session picks the resolution of a new scene.
#[derive(Clone, Debug)]
pub enum Policy {
    /// One classifier per zone id.
    Cae(BTreeMap<u8, WeightBundle>),
    Static,
    /// Labels keyed by (first frame of the scene, zone id).
    Oracle(BTreeMap<(u64, u8), u8>),
}

impl Policy {
    pub fn cae(bundles: impl IntoIterator<Item = WeightBundle>) -> Self {
        Policy::Cae(bundles.into_iter().map(|b| (b.zone_id, b)).collect())
    }
}

pub fn static_policy(zone: &Zone) -> Resolution {
    zone.static_resolution
}

/// A bundle whose classifier always answers the zone's static label, so CAE
/// reproduces the static ladder.
pub fn static_mimic_bundle(zone: &Zone, layout: Layout) -> WeightBundle {
    let arch = Architecture::default_for(layout);
    let mut widths = vec![arch.in_channels];
    widths.extend(&arch.hidden);
    widths.push(1);
    let mut layers: Vec<_> = widths
        .windows(2)
        .map(|w| crate::cnn::ConvLayer::zeros(w[0], w[1], arch.kernel_size))
        .collect();
    let last = layers.last_mut().expect("at least one layer");
    last.bias[0] = if zone.static_label() == 1 { 8.0 } else { -8.0 };
    WeightBundle {
        net: ConvNet { layers, leaky_slope: arch.leaky_slope },
        layout,
        normalization: Normalization::default(),
        zone_id: zone.id,
        threshold: DEFAULT_THRESHOLD,
    }
}

/// State of one stream.
pub struct Session {
    zones: ZoneTable,
    policy: Policy,
    window: StatsWindow,
    current: Resolution,
    scene_start: u64,
    frame_counter: u64,
    log: Vec<Decision>,
}

impl Session {
    /// Starts at the lowest zone's static resolution until the first scene
    /// change.
    pub fn new(zones: ZoneTable, policy: Policy) -> Self {
        let current = zones.zones().first().map_or(Resolution::P360, |z| z.static_resolution);
        Session {
            zones,
            policy,
            window: StatsWindow::new(),
            current,
            scene_start: 0,
            frame_counter: 0,
            log: Vec::new(),
        }
    }

    pub fn current_resolution(&self) -> Resolution {
        self.current
    }

    pub fn window(&self) -> &StatsWindow {
        &self.window
    }

    pub fn frame_counter(&self) -> u64 {
        self.frame_counter
    }

    pub fn log(&self) -> &[Decision] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Decision> {
        self.log
    }

    /// Decides the resolution of `frame`. The decision uses only frames
    /// before it: the frame's own statistics exist only after it has been
    /// encoded at the chosen resolution, so it enters the window afterwards.
    pub fn on_frame(&mut self, frame: &FrameStats, cc_mbps: f64) -> Result<Decision, RuntimeError> {
        frame
            .validate()
            .map_err(|reason| RuntimeError::InvalidFrame { frame: frame.frame_index, reason })?;
        let decision = if frame.scene_change {
            self.scene_start = frame.frame_index;
            self.decide_scene(frame.frame_index, cc_mbps)?
        } else {
            Decision {
                frame_index: frame.frame_index,
                resolution: self.current,
                idr: false,
                source: DecisionSource::Unchanged,
                probability: None,
                zone_id: None,
            }
        };
        self.current = decision.resolution;
        self.window.push_frame(frame)?;
        self.frame_counter += 1;
        self.log.push(decision.clone());
        Ok(decision)
    }

    fn decide_scene(&self, frame_index: u64, cc_mbps: f64) -> Result<Decision, RuntimeError> {
        let zone = self.zones.zone_for_bitrate(cc_mbps)?.zone;
        let (resolution, source, probability) = match &self.policy {
            Policy::Static => (static_policy(zone), DecisionSource::Static, None),
            Policy::Oracle(labels) => {
                let label = labels
                    .get(&(self.scene_start, zone.id))
                    .ok_or(RuntimeError::MissingLabel { frame: frame_index, zone: zone.id })?;
                (zone.resolution_for_label(*label), DecisionSource::Oracle, None)
            }
            Policy::Cae(_) if !self.window.is_full() => {
                (static_policy(zone), DecisionSource::StaticFallback, None)
            }
            Policy::Cae(bundles) => {
                let bundle = bundles.get(&zone.id).ok_or(RuntimeError::MissingBundle(zone.id))?;
                let tensor = assemble_tensor(&self.window, &bundle.normalization)?;
                let p = bundle.forward(&tensor)?;
                (zone.resolution_for_label(bundle.label_for(p)), DecisionSource::Cae, Some(p))
            }
        };
        Ok(Decision { frame_index, resolution, idr: true, source, probability, zone_id: Some(zone.id) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::stats_log::tests::flat_frame;

    fn frames(n: u64, scene_every: u64) -> Vec<FrameStats> {
        (0..n)
            .map(|i| {
                let mut f = flat_frame(i, Resolution::P1080, 1.0);
                f.scene_change = i % scene_every == 0;
                f
            })
            .collect()
    }

    fn biased_bundle(zone: &Zone, logit: f64) -> WeightBundle {
        let mut b = static_mimic_bundle(zone, Layout::FramesAsChannels);
        b.net.layers.last_mut().unwrap().bias[0] = logit;
        b
    }

    #[test]
    fn scene_change_with_full_window_uses_classifier() {
        let zones = ZoneTable::default();
        let z2 = zones.zone(2).unwrap().clone();
        // sigmoid(ln 4) = 0.8
        let mut s = Session::new(zones, Policy::cae([biased_bundle(&z2, 4f64.ln())]));
        let fs = frames(61, 1000);
        for f in &fs[..60] {
            s.on_frame(f, 7.5).unwrap();
        }
        let mut f = fs[60].clone();
        f.scene_change = true;
        let d = s.on_frame(&f, 7.5).unwrap();
        assert_eq!(d.resolution, Resolution::P1080);
        assert!(d.idr);
        assert_eq!(d.source, DecisionSource::Cae);
        assert!((d.probability.unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn non_scene_frames_keep_resolution() {
        let zones = ZoneTable::default();
        let mut s = Session::new(zones, Policy::Static);
        let fs = frames(3, 1000);
        let first = s.on_frame(&fs[0], 7.5).unwrap();
        assert_eq!(first.resolution, Resolution::P720);
        let d = s.on_frame(&fs[1], 15.0).unwrap();
        assert_eq!((d.resolution, d.idr, d.source), (Resolution::P720, false, DecisionSource::Unchanged));
    }

    #[test]
    fn cold_start_falls_back_to_static() {
        let zones = ZoneTable::default();
        let z2 = zones.zone(2).unwrap().clone();
        let mut s = Session::new(zones, Policy::cae([biased_bundle(&z2, 5.0)]));
        let fs = frames(31, 30);
        let mut last = None;
        for f in &fs {
            last = Some(s.on_frame(f, 7.5).unwrap());
        }
        let d = last.unwrap();
        assert!(d.idr);
        assert_eq!(d.source, DecisionSource::StaticFallback);
        assert_eq!(d.resolution, Resolution::P720);
        assert_eq!(s.window().len(), 31);
    }

    #[test]
    fn missing_bundle_is_an_error() {
        let mut s = Session::new(ZoneTable::default(), Policy::cae([]));
        let fs = frames(61, 60);
        for f in &fs[..60] {
            s.on_frame(f, 3.0).unwrap();
        }
        assert!(matches!(s.on_frame(&fs[60], 3.0), Err(RuntimeError::MissingBundle(1))));
    }

    #[test]
    fn static_policy_follows_table() {
        let zones = ZoneTable::default();
        assert_eq!(static_policy(zones.zone(0).unwrap()), Resolution::P360);
        assert_eq!(static_policy(zones.zone(3).unwrap()), Resolution::P1080);
        let statics: Vec<Resolution> = zones.zones().iter().map(static_policy).collect();
        assert!(statics.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mimic_bundles_reproduce_static_labels() {
        let zones = ZoneTable::default();
        for z in zones.zones() {
            let b = static_mimic_bundle(z, Layout::FramesAsChannels);
            let p = b.forward(&crate::features::FeatureTensor::zeros()).unwrap();
            assert_eq!(z.resolution_for_label(b.label_for(p)), z.static_resolution);
        }
    }
}
