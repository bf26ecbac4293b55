//! Ladder comparison: per-scene BD metrics, frame-drop delta and per-bitrate
//! significance of a test policy against a reference policy.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::bd::{bd_quality, bd_rate, RdCurve};
use super::stats::{cohens_d, wilcoxon_signed_rank, Alternative, EffectSize};
use super::EvalError;
use crate::domain::Resolution;
use crate::ingest::{find_point, Metric, RqTable, SceneKey};
use crate::ladder::enforce_convexity;

/// Resolution a policy uses for one scene at one target bitrate.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDecision {
    pub scene: SceneKey,
    pub target: f64,
    pub resolution: Resolution,
    pub probability: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct DecisionRow {
    clip_id: String,
    scene_id: String,
    target_bitrate_mbps: f64,
    resolution: Resolution,
    probability: Option<f64>,
}

/// CSV columns: `clip_id, scene_id, target_bitrate_mbps, resolution, probability`.
pub fn parse_decisions<R: Read>(reader: R) -> Result<Vec<SceneDecision>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<DecisionRow>()
        .enumerate()
        .map(|(i, row)| {
            let r = row.map_err(|e| EvalError::MalformedRow { row: i + 2, reason: e.to_string() })?;
            if !(r.target_bitrate_mbps > 0.0) {
                return Err(EvalError::MalformedRow { row: i + 2, reason: "target bitrate must be positive".into() });
            }
            Ok(SceneDecision {
                scene: SceneKey::new(r.clip_id, r.scene_id),
                target: r.target_bitrate_mbps,
                resolution: r.resolution,
                probability: r.probability,
            })
        })
        .collect()
}

pub fn write_decisions<W: Write>(writer: W, decisions: &[SceneDecision]) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for d in decisions {
        wtr.serialize(DecisionRow {
            clip_id: d.scene.clip_id.clone(),
            scene_id: d.scene.scene_id.clone(),
            target_bitrate_mbps: d.target,
            resolution: d.resolution,
            probability: d.probability,
        })
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| EvalError::Csv(e.to_string()))
}

/// Per-session drop percentages of both policies.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FrameDropStats {
    pub reference: Vec<f64>,
    pub test: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BdSummary {
    pub metric: Metric,
    /// Mean over scenes; `None` when no scene had overlapping curves.
    pub bd_rate: Option<f64>,
    pub bd_quality: Option<f64>,
    pub rate_scenes: usize,
    pub quality_scenes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceRow {
    pub metric: Metric,
    pub target: f64,
    /// Mean quality of test minus reference.
    pub mean_delta: f64,
    pub p_value: f64,
    pub cohens_d: Option<f64>,
    pub effect: Option<EffectSize>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub reference: String,
    pub test: String,
    pub scenes: usize,
    pub bd: Vec<BdSummary>,
    pub delta_framedrops: Option<f64>,
    pub significance: Vec<SignificanceRow>,
}

impl ComparisonReport {
    pub fn bd_for(&self, metric: Metric) -> Option<&BdSummary> {
        self.bd.iter().find(|b| b.metric == metric)
    }
}

fn target_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

type Grid = BTreeMap<SceneKey, BTreeMap<i64, (f64, Resolution)>>;

fn grid(decisions: &[SceneDecision], name: &str) -> Result<Grid, EvalError> {
    let mut g = Grid::new();
    for d in decisions {
        let slot = g.entry(d.scene.clone()).or_default();
        if slot.insert(target_key(d.target), (d.target, d.resolution)).is_some() {
            return Err(EvalError::GridMismatch(format!(
                "{name} decides {} at {} Mbps twice",
                d.scene, d.target
            )));
        }
    }
    Ok(g)
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<(), EvalError> {
    for (scene, targets) in a {
        let Some(other) = b.get(scene) else {
            return Err(EvalError::GridMismatch(format!("scene {scene} only in reference")));
        };
        if targets.keys().ne(other.keys()) {
            return Err(EvalError::GridMismatch(format!("targets of scene {scene} differ")));
        }
    }
    if let Some(scene) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(EvalError::GridMismatch(format!("scene {scene} only in test")));
    }
    Ok(())
}

/// (target, measured rate, quality) per target of one scene, target ascending.
fn scene_curve(
    rq: &RqTable,
    scene: &SceneKey,
    choices: &BTreeMap<i64, (f64, Resolution)>,
    metric: Metric,
) -> Result<Vec<(f64, f64, f64)>, EvalError> {
    let points = rq.get(scene).ok_or_else(|| EvalError::MissingMeasurement(format!("scene {scene}")))?;
    choices
        .values()
        .map(|&(target, res)| {
            find_point(points, res, target)
                .map(|p| (target, p.measured_bitrate, p.quality(metric)))
                .ok_or_else(|| EvalError::MissingMeasurement(format!("{scene} at {res} / {target} Mbps")))
        })
        .collect()
}

fn filtered(curve: &[(f64, f64, f64)]) -> Option<RdCurve> {
    let pts: Vec<(f64, f64)> = curve.iter().map(|c| (c.1, c.2)).collect();
    RdCurve::new(enforce_convexity(&pts).ok()?).ok()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Compares `test` against `reference` on an identical (scene, target) grid.
pub fn evaluate_ladders(
    rq: &RqTable,
    reference: (&str, &[SceneDecision]),
    test: (&str, &[SceneDecision]),
    framedrops: Option<&FrameDropStats>,
    metrics: &[Metric],
) -> Result<ComparisonReport, EvalError> {
    let ref_grid = grid(reference.1, reference.0)?;
    let test_grid = grid(test.1, test.0)?;
    check_same_grid(&ref_grid, &test_grid)?;

    let mut bd = Vec::new();
    let mut significance = Vec::new();
    for &metric in metrics {
        let (mut rates, mut quals) = (Vec::new(), Vec::new());
        let mut per_target: BTreeMap<i64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (scene, choices) in &ref_grid {
            let rc = scene_curve(rq, scene, choices, metric)?;
            let tc = scene_curve(rq, scene, &test_grid[scene], metric)?;
            for (r, t) in rc.iter().zip(&tc) {
                let e = per_target.entry(target_key(r.0)).or_insert_with(|| (r.0, Vec::new(), Vec::new()));
                e.1.push(t.2);
                e.2.push(r.2);
            }
            if let (Some(a), Some(b)) = (filtered(&rc), filtered(&tc)) {
                if let Ok(v) = bd_rate(&a, &b) {
                    rates.push(v);
                }
                if let Ok(v) = bd_quality(&a, &b) {
                    quals.push(v);
                }
            }
        }
        bd.push(BdSummary {
            metric,
            bd_rate: mean(&rates),
            bd_quality: mean(&quals),
            rate_scenes: rates.len(),
            quality_scenes: quals.len(),
        });
        for (target, x, y) in per_target.into_values() {
            let w = wilcoxon_signed_rank(&x, &y, Alternative::Greater)?;
            let d = cohens_d(&x, &y).ok();
            let deltas: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            significance.push(SignificanceRow {
                metric,
                target,
                mean_delta: mean(&deltas).unwrap_or(0.0),
                p_value: w.p_value,
                cohens_d: d,
                effect: d.map(EffectSize::classify),
                n: x.len(),
            });
        }
    }

    let delta_framedrops = framedrops.and_then(|f| Some(mean(&f.test)? - mean(&f.reference)?));
    Ok(ComparisonReport {
        reference: reference.0.to_string(),
        test: test.0.to_string(),
        scenes: ref_grid.len(),
        bd,
        delta_framedrops,
        significance,
    })
}

/// Fixed six-decimal formatting with negative zero folded to zero.
fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), num)
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} vs {} over {} scenes", self.test, self.reference, self.scenes)?;
        writeln!(f)?;
        writeln!(f, "{:<8} {:>14} {:>14} {:>8} {:>8}", "metric", "BD-rate (%)", "BD-quality", "n_rate", "n_qual")?;
        for b in &self.bd {
            writeln!(
                f,
                "{:<8} {:>14} {:>14} {:>8} {:>8}",
                b.metric.column(),
                opt(b.bd_rate),
                opt(b.bd_quality),
                b.rate_scenes,
                b.quality_scenes
            )?;
        }
        writeln!(f)?;
        writeln!(f, "delta framedrops (%): {}", opt(self.delta_framedrops))?;
        writeln!(f)?;
        writeln!(
            f,
            "{:<8} {:>8} {:>12} {:>10} {:>10} {:>7} {:>5}",
            "metric", "Mbps", "mean delta", "p", "d", "effect", "n"
        )?;
        for s in &self.significance {
            writeln!(
                f,
                "{:<8} {:>8} {:>12} {:>10} {:>10} {:>7} {:>5}",
                s.metric.column(),
                s.target,
                num(s.mean_delta),
                num(s.p_value),
                opt(s.cohens_d),
                s.effect.map_or_else(|| "-".to_string(), |e| e.to_string()),
                s.n
            )?;
        }
        Ok(())
    }
}

/// Machine-readable form: one row per BD summary, frame-drop delta and
/// significance entry.
pub fn write_report_csv<W: Write>(writer: W, report: &ComparisonReport) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
    wtr.write_record(["section", "metric", "target_mbps", "value", "p_value", "cohens_d", "effect", "n"])
        .map_err(csv_err)?;
    for b in &report.bd {
        let m = b.metric.column();
        let n_rate = b.rate_scenes.to_string();
        let n_qual = b.quality_scenes.to_string();
        wtr.write_record(["bd_rate", m, "", &opt(b.bd_rate), "", "", "", &n_rate]).map_err(csv_err)?;
        wtr.write_record(["bd_quality", m, "", &opt(b.bd_quality), "", "", "", &n_qual]).map_err(csv_err)?;
    }
    wtr.write_record(["delta_framedrops", "", "", &opt(report.delta_framedrops), "", "", "", ""])
        .map_err(csv_err)?;
    for s in &report.significance {
        wtr.write_record([
            "significance",
            s.metric.column(),
            &s.target.to_string(),
            &num(s.mean_delta),
            &num(s.p_value),
            &opt(s.cohens_d),
            &s.effect.map_or_else(String::new, |e| e.to_string()),
            &s.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| EvalError::Csv(e.to_string()))
}
