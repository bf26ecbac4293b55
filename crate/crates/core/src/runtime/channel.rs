//! Sender-side queue that drops frames whose queuing delay would exceed a
//! budget.

use super::RuntimeError;

pub const DEFAULT_DROP_THRESHOLD: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameOutcome {
    Delivered,
    Dropped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub capacity_mbps: f64,
    pub fps: f64,
    pub queue_bytes: f64,
    /// Queue budget in frame intervals of drain.
    pub drop_threshold: f64,
    pub delivered: u64,
    pub dropped: u64,
}

impl ChannelModel {
    pub fn new(capacity_mbps: f64, fps: f64) -> Result<Self, RuntimeError> {
        Self::with_threshold(capacity_mbps, fps, DEFAULT_DROP_THRESHOLD)
    }

    pub fn with_threshold(capacity_mbps: f64, fps: f64, drop_threshold: f64) -> Result<Self, RuntimeError> {
        if !(capacity_mbps > 0.0 && fps > 0.0 && drop_threshold > 0.0) {
            return Err(RuntimeError::InvalidChannel(format!(
                "capacity {capacity_mbps} Mbps, fps {fps}, threshold {drop_threshold}"
            )));
        }
        Ok(ChannelModel { capacity_mbps, fps, queue_bytes: 0.0, drop_threshold, delivered: 0, dropped: 0 })
    }

    /// Bytes drained per frame interval.
    pub fn drain_bytes(&self) -> f64 {
        self.capacity_mbps * 1e6 / 8.0 / self.fps
    }

    /// Offers one frame, then drains one interval.
    pub fn step(&mut self, frame_bytes: f64) -> FrameOutcome {
        let drain = self.drain_bytes();
        let outcome = if self.queue_bytes + frame_bytes > self.drop_threshold * drain {
            self.dropped += 1;
            FrameOutcome::Dropped
        } else {
            self.queue_bytes += frame_bytes;
            self.delivered += 1;
            FrameOutcome::Delivered
        };
        self.queue_bytes = (self.queue_bytes - drain).max(0.0);
        outcome
    }

    pub fn frames(&self) -> u64 {
        self.delivered + self.dropped
    }

    pub fn drop_percent(&self) -> f64 {
        if self.frames() == 0 {
            0.0
        } else {
            100.0 * self.dropped as f64 / self.frames() as f64
        }
    }
}

pub fn step_channel(model: &mut ChannelModel, frame_bytes: f64) -> FrameOutcome {
    model.step(frame_bytes)
}
