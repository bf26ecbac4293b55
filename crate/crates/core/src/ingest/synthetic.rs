//! Synthetic sessions for desk-scale experiments.
//!
//! Every scene has a latent complexity `c` in [0, 1]. It drives the per-line
//! statistics (SATD and QP spread grow with `c`, skip blocks shrink) and the
//! rate–quality curves
//!
//! ```text
//! q(R, S, c) = q_max(S) · R^k / (R^k + h^k),   h = half_rate(S) · exp(gain · c)
//! ```
//!
//! so complex scenes switch to higher resolutions at higher bitrates.
//! Scenes come in clips; scenes of one clip share a base complexity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::rq_table::{Quality, RQPoint, RqTable, SceneKey};
use super::scenes::SceneSpan;
use super::stats_log::{FrameStats, MAX_QP};
use crate::domain::{ctb_cols, ctb_rows, Resolution, DEFAULT_CTB_SIZE};

/// Bitrates (Mbps) every scene is measured at.
pub const DEFAULT_RQ_TARGETS: [f64; 13] = [1.0, 1.5, 2.0, 2.5, 3.5, 5.0, 6.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0];
/// Frame budget used for the `frame_size_bytes` of generated stats.
const REFERENCE_MBPS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RqModel {
    pub resolution: Resolution,
    pub q_max: f64,
    /// Rate (Mbps) at which a scene with `c = 0` reaches half of `q_max`.
    pub half_rate: f64,
    pub steepness: f64,
}

impl RqModel {
    /// Noise-free VMAF at `rate` Mbps for complexity `c`.
    pub fn vmaf(&self, rate: f64, c: f64, complexity_gain: f64) -> f64 {
        let h = self.half_rate * (complexity_gain * c).exp();
        let rk = rate.powf(self.steepness);
        self.q_max * rk / (rk + h.powf(self.steepness))
    }
}

pub fn default_rq_models() -> Vec<RqModel> {
    let m = |resolution, q_max, half_rate| RqModel { resolution, q_max, half_rate, steepness: 1.6 };
    vec![
        m(Resolution::P360, 72.0, 0.35),
        m(Resolution::P540, 84.0, 0.4683),
        m(Resolution::P720, 93.0, 0.6704),
        m(Resolution::P1080, 100.0, 1.1154),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub frames_per_scene: usize,
    pub complexity_range: (f64, f64),
    pub rq_models: Vec<RqModel>,
    /// Log-scale growth of every half-rate per unit of complexity.
    pub complexity_gain: f64,
    /// Standard deviation of additive VMAF noise; also scales the jitter of
    /// measured against target bitrate (1% per unit).
    pub noise_level: f64,
    pub scenes_per_clip: usize,
    /// Standard deviation of a scene's complexity around its clip's base.
    pub scene_jitter: f64,
    pub stats_resolution: Resolution,
    pub rq_targets: Vec<f64>,
    pub fps: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 42,
            n_scenes: 500,
            frames_per_scene: 90,
            complexity_range: (0.0, 1.0),
            rq_models: default_rq_models(),
            complexity_gain: std::f64::consts::LN_2 / 0.4,
            noise_level: 0.5,
            scenes_per_clip: 5,
            scene_jitter: 0.03,
            stats_resolution: Resolution::P1080,
            rq_targets: DEFAULT_RQ_TARGETS.to_vec(),
            fps: 60.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidConfig(m));
        let (lo, hi) = self.complexity_range;
        if self.n_scenes == 0 {
            return bad("n_scenes must be at least 1".into());
        }
        if self.frames_per_scene < 61 {
            return bad(format!("frames_per_scene {} < 61", self.frames_per_scene));
        }
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("complexity range [{lo}, {hi}] not within [0, 1]"));
        }
        if self.scenes_per_clip == 0 {
            return bad("scenes_per_clip must be at least 1".into());
        }
        if !(self.noise_level >= 0.0 && self.scene_jitter >= 0.0 && self.complexity_gain >= 0.0) {
            return bad("noise level, scene jitter and complexity gain must be non-negative".into());
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if self.rq_targets.is_empty() || self.rq_targets.iter().any(|t| !(*t > 0.0)) {
            return bad("rq targets must be non-empty and positive".into());
        }
        if self.rq_targets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("rq targets must be strictly increasing".into());
        }
        for r in Resolution::STREAMED {
            match self.rq_models.iter().filter(|m| m.resolution == r).count() {
                1 => {}
                0 => return bad(format!("no rq model for {r}")),
                _ => return bad(format!("duplicate rq model for {r}")),
            }
        }
        if self
            .rq_models
            .iter()
            .any(|m| !(m.q_max > 0.0 && m.q_max <= 100.0 && m.half_rate > 0.0 && m.steepness > 0.0))
        {
            return bad("rq model parameters must be positive with q_max <= 100".into());
        }
        Ok(())
    }

    pub fn model(&self, resolution: Resolution) -> Option<&RqModel> {
        self.rq_models.iter().find(|m| m.resolution == resolution)
    }
}

/// Per-frame size factors relative to the per-interval channel budget, one
/// column per streamed resolution (ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct SizeTrace {
    pub factors: Vec<[f64; 4]>,
}

impl SizeTrace {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Factor of frame `i` encoded at `resolution` (a streamed resolution).
    pub fn factor(&self, i: usize, resolution: Resolution) -> f64 {
        let col = Resolution::STREAMED
            .iter()
            .position(|r| *r == resolution)
            .expect("streamed resolution");
        self.factors[i][col]
    }

    /// Bytes of frame `i` when rate control targets `cc_mbps` at `fps`.
    pub fn bytes(&self, i: usize, resolution: Resolution, cc_mbps: f64, fps: f64) -> f64 {
        self.factor(i, resolution) * cc_mbps * 1e6 / 8.0 / fps
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSession {
    pub frames: Vec<FrameStats>,
    pub rq: RqTable,
    pub scenes: Vec<SceneSpan>,
    pub sizes: SizeTrace,
}

pub fn scene_key(scene: usize, scenes_per_clip: usize) -> SceneKey {
    SceneKey::new(format!("clip{:03}", scene / scenes_per_clip), format!("s{:02}", scene % scenes_per_clip))
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Relative size of a frame: heavier for complex content at high resolution,
/// heavier still for the IDR frame that opens a scene.
pub fn size_factor(resolution: Resolution, c: f64, idr: bool, z: f64) -> f64 {
    let scale = (f64::from(resolution.height()) / 1080.0).sqrt();
    let base = 0.72 + 0.3 * c * scale;
    let idr_boost = if idr { 1.6 } else { 1.0 };
    round_to(base * (0.1 * z).exp() * idr_boost, 1e-4)
}

/// Per-scene smooth variation along the frame height.
struct LineProfile {
    amplitude: f64,
    cycles: f64,
    phase: f64,
}

impl LineProfile {
    fn random<R: Rng>(rng: &mut R) -> Self {
        LineProfile {
            amplitude: rng.random_range(0.05..0.3),
            cycles: rng.random_range(0.5..1.5),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, line: usize, rows: usize) -> f64 {
        let x = if rows > 1 { line as f64 / (rows - 1) as f64 } else { 0.0 };
        1.0 + self.amplitude * (std::f64::consts::TAU * self.cycles * x + self.phase).sin()
    }
}

fn synth_frame<R: Rng>(
    rng: &mut R,
    index: u64,
    idr: bool,
    c: f64,
    profile: &LineProfile,
    resolution: Resolution,
    size_factor: f64,
    fps: f64,
) -> FrameStats {
    let rows = ctb_rows(resolution, DEFAULT_CTB_SIZE);
    let cols = ctb_cols(resolution, DEFAULT_CTB_SIZE) as f64;
    let mut f = FrameStats {
        frame_index: index,
        scene_change: idr,
        resolution,
        frame_size: ((size_factor * REFERENCE_MBPS * 1e6 / 8.0 / fps).round() as u64).max(1),
        num_intra_block: Vec::with_capacity(rows),
        num_inter_block: Vec::with_capacity(rows),
        num_skip_block: Vec::with_capacity(rows),
        average_satd: Vec::with_capacity(rows),
        min_qp: Vec::with_capacity(rows),
        max_qp: Vec::with_capacity(rows),
        motion_type: Vec::with_capacity(rows),
    };
    let qp_center = 22.0 + 14.0 * c + 0.5 * gauss(rng);
    for line in 0..rows {
        let p = profile.at(line, rows);
        let (intra, inter, skip) = if idr {
            (cols, 0.0, 0.0)
        } else {
            let intra = (cols * (0.03 + 0.12 * c) * (1.0 + 0.1 * gauss(rng))).clamp(0.0, cols);
            let skip = (cols * 0.75 * (1.0 - c) * p * (1.0 + 0.05 * gauss(rng))).clamp(0.0, cols - intra);
            (intra, cols - intra - skip, skip)
        };
        let satd_boost = if idr { 2.0 } else { 1.0 };
        let satd = (400.0 * (0.25 + c) * p * satd_boost * (1.0 + 0.1 * gauss(rng))).max(0.0);
        let spread = (2.0 + 10.0 * c) * (1.0 + 0.1 * gauss(rng)).max(0.0);
        let center = qp_center + 0.5 * gauss(rng);
        let min_qp = (center - spread / 2.0).clamp(0.0, MAX_QP);
        let max_qp = (center + spread / 2.0).clamp(min_qp, MAX_QP);
        let motion = 1.0 + 3.0 * c * p + 0.3 * gauss(rng);

        f.num_intra_block.push(round_to(intra, 1e-3));
        f.num_inter_block.push(round_to(inter, 1e-3).max(0.0));
        f.num_skip_block.push(round_to(skip, 1e-3));
        f.average_satd.push(round_to(satd, 1e-3));
        f.min_qp.push(round_to(min_qp, 1e-3));
        f.max_qp.push(round_to(max_qp, 1e-3).max(round_to(min_qp, 1e-3)));
        f.motion_type.push(round_to(motion, 1e-3));
    }
    f
}

/// Deterministic in `config.seed`.
pub fn generate_synthetic_session(config: &SyntheticConfig) -> Result<SyntheticSession, SyntheticError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut size_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5157_A7E5);
    let (lo, hi) = config.complexity_range;

    let mut complexities = Vec::with_capacity(config.n_scenes);
    let mut base = lo;
    for s in 0..config.n_scenes {
        if s % config.scenes_per_clip == 0 {
            base = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        let c = (base + config.scene_jitter * gauss(&mut rng)).clamp(lo, hi);
        complexities.push(round_to(c, 1e-6).clamp(lo, hi));
    }

    let per_scene = config.frames_per_scene;
    let mut frames = Vec::with_capacity(config.n_scenes * per_scene);
    let mut factors = Vec::with_capacity(config.n_scenes * per_scene);
    let mut scenes = Vec::with_capacity(config.n_scenes);
    let mut rq = RqTable::new();
    for (s, &c) in complexities.iter().enumerate() {
        let key = scene_key(s, config.scenes_per_clip);
        let first = (s * per_scene) as u64;
        scenes.push(SceneSpan { key: key.clone(), first_frame: first, frame_count: per_scene as u64, complexity: Some(c) });

        let profile = LineProfile::random(&mut rng);
        for i in 0..per_scene {
            let idr = i == 0;
            let z = gauss(&mut size_rng);
            let row: [f64; 4] = Resolution::STREAMED.map(|r| size_factor(r, c, idr, z));
            let own = size_factor(config.stats_resolution, c, idr, z);
            factors.push(row);
            frames.push(synth_frame(&mut rng, first + i as u64, idr, c, &profile, config.stats_resolution, own, config.fps));
        }

        let mut points = Vec::with_capacity(config.rq_models.len() * config.rq_targets.len());
        for r in Resolution::STREAMED {
            let model = config.model(r).expect("validated");
            for &target in &config.rq_targets {
                let jitter = 0.01 * config.noise_level * gauss(&mut rng);
                let measured = round_to(target * (1.0 + jitter).max(0.5), 1e-6);
                let vmaf = model.vmaf(target, c, config.complexity_gain) + config.noise_level * gauss(&mut rng);
                let vmaf = round_to(vmaf.clamp(0.0, 100.0), 1e-4);
                let u = vmaf / 100.0;
                points.push(RQPoint {
                    clip_id: key.clip_id.clone(),
                    scene_id: key.scene_id.clone(),
                    resolution: r,
                    target_bitrate: target,
                    measured_bitrate: measured,
                    quality: Quality {
                        vmaf,
                        psnr_y: round_to(28.0 + 16.0 * u, 1e-4),
                        ssim_yb: round_to(0.80 + 0.19 * u, 1e-6),
                    },
                });
            }
        }
        rq.insert(key, points);
    }
    Ok(SyntheticSession { frames, rq, scenes, sizes: SizeTrace { factors } })
}

/// Congestion-control bitrate per frame: a mean-reverting random walk in log
/// space confined to `[low, high]` Mbps.
pub fn generate_cc_trace(n_frames: usize, seed: u64, low: f64, high: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (low.ln(), high.ln());
    let mid = 0.5 * (a + b);
    let mut x = rng.random_range(a..=b);
    let mut out = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        out.push(round_to(x.exp(), 1e-6).clamp(low, high));
        x += 0.03 * gauss(&mut rng) - 0.001 * (x - mid);
        // reflect at the bounds
        if x > b {
            x = 2.0 * b - x;
        }
        if x < a {
            x = 2.0 * a - x;
        }
        x = x.clamp(a, b);
    }
    out
}
