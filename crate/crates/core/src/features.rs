//! Running window of per-line statistics and model input assembly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::stats_log::{Feature, FrameStats};

/// Frames kept in the running window.
pub const WINDOW_FRAMES: usize = 60;
/// Per-line positions after resampling (CTB rows of a 1080p frame).
pub const LINE_POSITIONS: usize = 17;
pub const FEATURES: usize = Feature::COUNT;
/// Floor applied to every normalization standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("cannot resample an empty line")]
    EmptyInput,
    #[error("window holds {have} frames, {need} required")]
    WindowNotFull { have: usize, need: usize },
    #[error("normalization needs at least one frame")]
    EmptyDataset,
}

/// Resamples `values` to `target` points with endpoint-aligned linear
/// interpolation. Output position `j` reads source coordinate
/// `j * (len - 1) / (target - 1)`.
pub fn resample_line(values: &[f64], target: usize) -> Result<Vec<f64>, FeatureError> {
    let n = values.len();
    if n == 0 {
        return Err(FeatureError::EmptyInput);
    }
    if n == 1 || target == 1 {
        return Ok(vec![values[0]; target]);
    }
    if n == target {
        return Ok(values.to_vec());
    }
    let scale = (n - 1) as f64 / (target - 1) as f64;
    let out = (0..target)
        .map(|j| {
            if j == target - 1 {
                return values[n - 1];
            }
            let x = j as f64 * scale;
            let i = (x.floor() as usize).min(n - 2);
            let t = x - i as f64;
            if t == 0.0 {
                values[i]
            } else {
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        })
        .collect();
    Ok(out)
}

/// One frame's statistics resampled to 7 × 17, raw (not standardized).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix(pub [[f64; LINE_POSITIONS]; FEATURES]);

impl FrameMatrix {
    pub fn from_frame(frame: &FrameStats) -> Result<Self, FeatureError> {
        let mut m = [[0.0; LINE_POSITIONS]; FEATURES];
        for f in Feature::ALL {
            let row = resample_line(frame.feature(f), LINE_POSITIONS)?;
            m[f.index()].copy_from_slice(&row);
        }
        Ok(FrameMatrix(m))
    }
}

/// Fixed-capacity ring of the most recent frames, oldest first.
#[derive(Clone, Debug)]
pub struct StatsWindow {
    capacity: usize,
    entries: VecDeque<FrameMatrix>,
}

impl Default for StatsWindow {
    fn default() -> Self {
        StatsWindow::new()
    }
}

impl StatsWindow {
    pub fn new() -> Self {
        StatsWindow::with_capacity(WINDOW_FRAMES)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        StatsWindow { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Resamples and appends a frame, evicting the oldest one when full.
    pub fn push_frame(&mut self, frame: &FrameStats) -> Result<(), FeatureError> {
        let m = FrameMatrix::from_frame(frame)?;
        self.push_matrix(m);
        Ok(())
    }

    pub fn push_matrix(&mut self, m: FrameMatrix) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(m);
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &FrameMatrix> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Per-feature standardization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: [0.0; FEATURES], std: [1.0; FEATURES] }
    }
}

impl Normalization {
    pub fn standardize(&self, feature: usize, value: f64) -> f64 {
        (value - self.mean[feature]) / self.std[feature]
    }
}

/// Mean and population standard deviation of every feature over all frames
/// and positions, std floored at [`STD_FLOOR`].
pub fn compute_normalization<'a, I>(frames: I) -> Result<Normalization, FeatureError>
where
    I: IntoIterator<Item = &'a FrameMatrix>,
{
    let frames: Vec<&FrameMatrix> = frames.into_iter().collect();
    if frames.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let count = (frames.len() * LINE_POSITIONS) as f64;
    let mut norm = Normalization::default();
    for f in 0..FEATURES {
        let mean = frames.iter().flat_map(|m| m.0[f].iter()).sum::<f64>() / count;
        let var = frames
            .iter()
            .flat_map(|m| m.0[f].iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count;
        norm.mean[f] = mean;
        norm.std[f] = var.sqrt().max(STD_FLOOR);
    }
    Ok(norm)
}

/// Standardized 60 × 7 × 17 model input, stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    data: Vec<f64>,
}

impl FeatureTensor {
    pub const LEN: usize = WINDOW_FRAMES * FEATURES * LINE_POSITIONS;

    pub fn zeros() -> Self {
        FeatureTensor { data: vec![0.0; Self::LEN] }
    }

    pub fn from_vec(data: Vec<f64>) -> Option<Self> {
        (data.len() == Self::LEN && data.iter().all(|v| v.is_finite())).then_some(FeatureTensor { data })
    }

    fn offset(frame: usize, feature: usize, position: usize) -> usize {
        (frame * FEATURES + feature) * LINE_POSITIONS + position
    }

    pub fn get(&self, frame: usize, feature: usize, position: usize) -> f64 {
        self.data[Self::offset(frame, feature, position)]
    }

    pub fn set(&mut self, frame: usize, feature: usize, position: usize, value: f64) {
        self.data[Self::offset(frame, feature, position)] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Standardizes a full window into a tensor, oldest frame at index 0.
pub fn assemble_tensor(window: &StatsWindow, norm: &Normalization) -> Result<FeatureTensor, FeatureError> {
    if window.len() < WINDOW_FRAMES {
        return Err(FeatureError::WindowNotFull { have: window.len(), need: WINDOW_FRAMES });
    }
    let skip = window.len() - WINDOW_FRAMES;
    let mut data = Vec::with_capacity(FeatureTensor::LEN);
    for m in window.entries().skip(skip) {
        for (f, row) in m.0.iter().enumerate() {
            data.extend(row.iter().map(|&v| norm.standardize(f, v)));
        }
    }
    Ok(FeatureTensor { data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Resolution;
    use crate::ingest::stats_log::tests::flat_frame;
    use proptest::prelude::*;

    fn frame_with(index: u64, resolution: Resolution, value: f64) -> FrameStats {
        flat_frame(index, resolution, value)
    }

    #[test]
    fn resample_constant_line() {
        let out = resample_line(&[5.0; 9], 17).unwrap();
        assert_eq!(out, vec![5.0; 17]);
    }

    #[test]
    fn resample_two_points_to_three() {
        assert_eq!(resample_line(&[0.0, 1.0], 3).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn resample_identity_and_broadcast() {
        let v: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        assert_eq!(resample_line(&v, 17).unwrap(), v);
        assert_eq!(resample_line(&[3.0], 17).unwrap(), vec![3.0; 17]);
        assert_eq!(resample_line(&[], 17), Err(FeatureError::EmptyInput));
    }

    #[test]
    fn resample_nine_to_seventeen_hits_source_points() {
        // 9 -> 17: every even output position lands on a source sample.
        let v: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let out = resample_line(&v, 17).unwrap();
        for i in 0..9 {
            assert_eq!(out[2 * i], v[i]);
        }
        assert_eq!(out[1], 0.5);
    }

    proptest! {
        #[test]
        fn resample_is_linear(
            x in prop::collection::vec(-100.0f64..100.0, 1..40),
            seed in prop::collection::vec(-100.0f64..100.0, 40),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = seed[..x.len()].to_vec();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = resample_line(&combo, 17).unwrap();
            let rx = resample_line(&x, 17).unwrap();
            let ry = resample_line(&y, 17).unwrap();
            for j in 0..17 {
                let rhs = a * rx[j] + b * ry[j];
                prop_assert!((lhs[j] - rhs).abs() <= 1e-12 * (1.0 + lhs[j].abs().max(rhs.abs())));
            }
        }

        #[test]
        fn resample_keeps_ends_and_range(x in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let out = resample_line(&x, 17).unwrap();
            prop_assert_eq!(out.len(), 17);
            prop_assert_eq!(out[0], x[0]);
            prop_assert_eq!(out[16], x[x.len() - 1]);
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = StatsWindow::new();
        assert_eq!(w.len(), 0);
        for i in 1..=61u64 {
            w.push_frame(&frame_with(i, Resolution::P1080, i as f64)).unwrap();
        }
        assert_eq!(w.len(), 60);
        let firsts: Vec<f64> = w.entries().map(|m| m.0[0][0]).collect();
        assert_eq!(firsts.first(), Some(&2.0));
        assert_eq!(firsts.last(), Some(&61.0));
    }

    #[test]
    fn mixed_resolutions_resample_on_push() {
        let mut w = StatsWindow::new();
        w.push_frame(&frame_with(0, Resolution::P540, 1.0)).unwrap();
        w.push_frame(&frame_with(1, Resolution::P1080, 2.0)).unwrap();
        assert_eq!(w.len(), 2);
        for m in w.entries() {
            assert_eq!(m.0.len(), 7);
            assert!(m.0.iter().all(|row| row.len() == 17));
        }
    }

    #[test]
    fn assemble_requires_full_window() {
        let mut w = StatsWindow::new();
        for i in 0..59 {
            w.push_frame(&frame_with(i, Resolution::P720, 1.0)).unwrap();
        }
        assert_eq!(
            assemble_tensor(&w, &Normalization::default()),
            Err(FeatureError::WindowNotFull { have: 59, need: 60 })
        );
        w.push_frame(&frame_with(59, Resolution::P720, 1.0)).unwrap();
        assert!(assemble_tensor(&w, &Normalization::default()).is_ok());
    }

    #[test]
    fn standardization_identities() {
        let mut w = StatsWindow::new();
        for i in 0..60 {
            w.push_frame(&frame_with(i, Resolution::P1080, 4.0)).unwrap();
        }
        let mut norm = Normalization::default();
        norm.mean[3] = 4.0;
        norm.std[3] = 2.5;
        norm.mean[0] = 1.0;
        norm.std[0] = 1.5;
        let t = assemble_tensor(&w, &norm).unwrap();
        for frame in 0..60 {
            for p in 0..17 {
                assert_eq!(t.get(frame, 3, p), 0.0);
                // mean + 2 std
                assert_eq!(t.get(frame, 0, p), 2.0);
            }
        }
    }

    #[test]
    fn oldest_frame_first_and_eviction_invariance() {
        let mut a = StatsWindow::new();
        let mut b = StatsWindow::new();
        for i in 0..200u64 {
            a.push_frame(&frame_with(i, Resolution::P1080, i as f64)).unwrap();
        }
        for i in 140..200u64 {
            b.push_frame(&frame_with(i, Resolution::P1080, i as f64)).unwrap();
        }
        let n = Normalization::default();
        let ta = assemble_tensor(&a, &n).unwrap();
        assert_eq!(ta, assemble_tensor(&b, &n).unwrap());
        assert_eq!(ta.get(0, 0, 0), 140.0);
        assert_eq!(ta.get(59, 0, 0), 199.0);
    }

    #[test]
    fn normalization_of_constant_dataset_is_floored() {
        let m = FrameMatrix([[3.0; 17]; 7]);
        let n = compute_normalization([&m, &m, &m]).unwrap();
        assert_eq!(n.mean, [3.0; 7]);
        assert_eq!(n.std, [STD_FLOOR; 7]);
    }

    #[test]
    fn normalization_two_point_distribution() {
        let zeros = FrameMatrix([[0.0; 17]; 7]);
        let twos = FrameMatrix([[2.0; 17]; 7]);
        let n = compute_normalization([&zeros, &twos]).unwrap();
        assert_eq!(n.mean, [1.0; 7]);
        assert_eq!(n.std, [1.0; 7]);
        assert_eq!(compute_normalization(std::iter::empty()), Err(FeatureError::EmptyDataset));
    }

    #[test]
    fn standardized_training_set_has_zero_mean_unit_std() {
        let frames: Vec<FrameMatrix> = (0..50)
            .map(|i| {
                let mut m = [[0.0; 17]; 7];
                for (f, row) in m.iter_mut().enumerate() {
                    for (p, v) in row.iter_mut().enumerate() {
                        *v = ((i * 31 + f * 7 + p * 3) % 17) as f64 * (f + 1) as f64 + 10.0 * f as f64;
                    }
                }
                FrameMatrix(m)
            })
            .collect();
        let n = compute_normalization(&frames).unwrap();
        for f in 0..7 {
            let vals: Vec<f64> = frames
                .iter()
                .flat_map(|m| m.0[f].iter().map(|&v| n.standardize(f, v)))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
