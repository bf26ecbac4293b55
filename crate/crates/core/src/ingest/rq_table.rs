//! Rate–quality measurement tables (CSV).
//!
//! Columns: `clip_id, scene_id, resolution, target_bitrate_mbps,
//! measured_bitrate_mbps, vmaf, psnr_y, ssim_yb`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Resolution;

/// Quality metric a hull or BD computation is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "vmaf")]
    Vmaf,
    #[serde(rename = "psnr_y")]
    PsnrY,
    #[serde(rename = "ssim_yb")]
    SsimYb,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Vmaf, Metric::PsnrY, Metric::SsimYb];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Vmaf => "vmaf",
            Metric::PsnrY => "psnr_y",
            Metric::SsimYb => "ssim_yb",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.column().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown metric `{s}` (expected vmaf, psnr_y or ssim_yb)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub vmaf: f64,
    pub psnr_y: f64,
    pub ssim_yb: f64,
}

impl Quality {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Vmaf => self.vmaf,
            Metric::PsnrY => self.psnr_y,
            Metric::SsimYb => self.ssim_yb,
        }
    }
}

/// One encode of one scene at one (resolution, target bitrate).
#[derive(Clone, Debug, PartialEq)]
pub struct RQPoint {
    pub clip_id: String,
    pub scene_id: String,
    pub resolution: Resolution,
    pub target_bitrate: f64,
    pub measured_bitrate: f64,
    pub quality: Quality,
}

impl RQPoint {
    pub fn quality(&self, metric: Metric) -> f64 {
        self.quality.get(metric)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SceneKey {
    pub clip_id: String,
    pub scene_id: String,
}

impl SceneKey {
    pub fn new(clip_id: impl Into<String>, scene_id: impl Into<String>) -> Self {
        SceneKey { clip_id: clip_id.into(), scene_id: scene_id.into() }
    }
}

impl fmt::Display for SceneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.clip_id, self.scene_id)
    }
}

/// Points grouped by scene; each group sorted by (resolution, target bitrate).
pub type RqTable = BTreeMap<SceneKey, Vec<RQPoint>>;

#[derive(Debug, Error)]
pub enum RqTableError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: duplicate point for {scene} at {resolution} / {target} Mbps")]
    DuplicatePoint { row: usize, scene: SceneKey, resolution: Resolution, target: f64 },
    #[error("missing quality column `{0}`")]
    MissingQualityColumn(&'static str),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Serialize)]
struct Row<'a> {
    clip_id: &'a str,
    scene_id: &'a str,
    resolution: Resolution,
    target_bitrate_mbps: f64,
    measured_bitrate_mbps: f64,
    vmaf: f64,
    psnr_y: f64,
    ssim_yb: f64,
}

const ID_COLUMNS: [&str; 5] =
    ["clip_id", "scene_id", "resolution", "target_bitrate_mbps", "measured_bitrate_mbps"];

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_number(record: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<f64, RqTableError> {
    let raw = record.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| RqTableError::MalformedRow {
        row,
        reason: format!("{name}: `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(RqTableError::MalformedRow { row, reason: format!("{name} is not finite") });
    }
    Ok(v)
}

/// Reads an RQ table. Row numbers in errors count the header as row 1.
pub fn parse_rq_table<R: Read>(reader: R) -> Result<RqTable, RqTableError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(ID_COLUMNS) {
        *slot = column_index(&headers, name).ok_or(RqTableError::MissingColumn(name))?;
    }
    let mut q_idx = [0usize; 3];
    for (slot, m) in q_idx.iter_mut().zip(Metric::ALL) {
        *slot = column_index(&headers, m.column()).ok_or(RqTableError::MissingQualityColumn(m.column()))?;
    }

    let mut table = RqTable::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let text = |k: usize| record.get(idx[k]).unwrap_or("").trim().to_string();
        let clip_id = text(0);
        let scene_id = text(1);
        if clip_id.is_empty() || scene_id.is_empty() {
            return Err(RqTableError::MalformedRow { row, reason: "empty clip or scene id".into() });
        }
        let resolution: Resolution = text(2)
            .parse()
            .map_err(|e: crate::domain::ParseResolutionError| RqTableError::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
        let target_bitrate = parse_number(&record, idx[3], "target_bitrate_mbps", row)?;
        let measured_bitrate = parse_number(&record, idx[4], "measured_bitrate_mbps", row)?;
        let quality = Quality {
            vmaf: parse_number(&record, q_idx[0], "vmaf", row)?,
            psnr_y: parse_number(&record, q_idx[1], "psnr_y", row)?,
            ssim_yb: parse_number(&record, q_idx[2], "ssim_yb", row)?,
        };
        if target_bitrate <= 0.0 || measured_bitrate <= 0.0 {
            return Err(RqTableError::MalformedRow { row, reason: "bitrates must be positive".into() });
        }
        if !(0.0..=100.0).contains(&quality.vmaf) {
            return Err(RqTableError::MalformedRow {
                row,
                reason: format!("vmaf {} outside [0, 100]", quality.vmaf),
            });
        }
        if !(0.0..=1.0).contains(&quality.ssim_yb) {
            return Err(RqTableError::MalformedRow {
                row,
                reason: format!("ssim_yb {} outside [0, 1]", quality.ssim_yb),
            });
        }
        let key = SceneKey::new(clip_id.clone(), scene_id.clone());
        let group = table.entry(key.clone()).or_default();
        if group
            .iter()
            .any(|p| p.resolution == resolution && p.target_bitrate == target_bitrate)
        {
            return Err(RqTableError::DuplicatePoint {
                row,
                scene: key,
                resolution,
                target: target_bitrate,
            });
        }
        group.push(RQPoint { clip_id, scene_id, resolution, target_bitrate, measured_bitrate, quality });
    }
    for group in table.values_mut() {
        group.sort_by(|a, b| {
            a.resolution
                .cmp(&b.resolution)
                .then(a.target_bitrate.total_cmp(&b.target_bitrate))
        });
    }
    Ok(table)
}

pub fn write_rq_table<W: Write>(writer: W, table: &RqTable) -> Result<(), RqTableError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in table.values().flatten() {
        wtr.serialize(Row {
            clip_id: &p.clip_id,
            scene_id: &p.scene_id,
            resolution: p.resolution,
            target_bitrate_mbps: p.target_bitrate,
            measured_bitrate_mbps: p.measured_bitrate,
            vmaf: p.quality.vmaf,
            psnr_y: p.quality.psnr_y,
            ssim_yb: p.quality.ssim_yb,
        })?;
    }
    wtr.flush().map_err(|e| RqTableError::Csv(e.into()))?;
    Ok(())
}

/// Looks up the point for `(resolution, target)` in one scene's group.
pub fn find_point(points: &[RQPoint], resolution: Resolution, target: f64) -> Option<&RQPoint> {
    points
        .iter()
        .find(|p| p.resolution == resolution && (p.target_bitrate - target).abs() <= 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "clip_id,scene_id,resolution,target_bitrate_mbps,measured_bitrate_mbps,vmaf,psnr_y,ssim_yb\n";

    fn grid_csv() -> String {
        let mut s = HEADER.to_string();
        for (ri, r) in ["1080p", "360p", "720p", "540p"].iter().enumerate() {
            for (bi, b) in [17.5, 2.0, 12.5, 3.5, 7.5].iter().enumerate() {
                s.push_str(&format!(
                    "clipA,s1,{r},{b},{},{},{},{}\n",
                    b * 1.01,
                    40.0 + ri as f64 + bi as f64,
                    35.0,
                    0.9
                ));
            }
        }
        s
    }

    #[test]
    fn groups_and_sorts_grid() {
        let table = parse_rq_table(grid_csv().as_bytes()).unwrap();
        assert_eq!(table.len(), 1);
        let group = &table[&SceneKey::new("clipA", "s1")];
        assert_eq!(group.len(), 20);
        assert_eq!(group[0].resolution, Resolution::P360);
        assert_eq!(group[0].target_bitrate, 2.0);
        assert_eq!(group[4].target_bitrate, 17.5);
        assert_eq!(group[19].resolution, Resolution::P1080);
        assert!(find_point(group, Resolution::P720, 7.5).is_some());
        assert!(find_point(group, Resolution::P720, 8.0).is_none());
    }

    #[test]
    fn vmaf_out_of_range_is_malformed() {
        let csv = format!("{HEADER}c,s,720p,5,5.1,105,40,0.95\n");
        let err = parse_rq_table(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, RqTableError::MalformedRow { row: 2, .. }), "{err}");
        let csv = format!("{HEADER}c,s,720p,5,5.1,80,40,1.2\n");
        assert!(matches!(parse_rq_table(csv.as_bytes()), Err(RqTableError::MalformedRow { .. })));
        let csv = format!("{HEADER}c,s,720p,0,5.1,80,40,0.9\n");
        assert!(matches!(parse_rq_table(csv.as_bytes()), Err(RqTableError::MalformedRow { .. })));
        let csv = format!("{HEADER}c,s,480p,5,5.1,80,40,0.9\n");
        assert!(matches!(parse_rq_table(csv.as_bytes()), Err(RqTableError::MalformedRow { .. })));
    }

    #[test]
    fn duplicate_point_is_rejected() {
        let csv = format!("{HEADER}c,s,720p,5,5.1,80,40,0.95\nc,s,720p,5,4.9,81,40,0.95\n");
        let err = parse_rq_table(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, RqTableError::DuplicatePoint { row: 3, .. }), "{err}");
        // same point in a different scene is fine
        let csv = format!("{HEADER}c,s,720p,5,5.1,80,40,0.95\nc,t,720p,5,4.9,81,40,0.95\n");
        assert_eq!(parse_rq_table(csv.as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn missing_quality_column() {
        let csv = "clip_id,scene_id,resolution,target_bitrate_mbps,measured_bitrate_mbps,vmaf,psnr_y\n";
        assert!(matches!(
            parse_rq_table(csv.as_bytes()),
            Err(RqTableError::MissingQualityColumn("ssim_yb"))
        ));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let table = parse_rq_table(grid_csv().as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_rq_table(&mut buf, &table).unwrap();
        assert_eq!(parse_rq_table(&buf[..]).unwrap(), table);
    }

    #[test]
    fn metric_parse() {
        assert_eq!("VMAF".parse::<Metric>().unwrap(), Metric::Vmaf);
        assert_eq!("ssim_yb".parse::<Metric>().unwrap(), Metric::SsimYb);
        assert!("ssim".parse::<Metric>().is_err());
    }
}
