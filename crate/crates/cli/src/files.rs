use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cae_core::cnn::WeightBundle;
use cae_core::domain::ZoneTable;
use cae_core::eval::{parse_decisions, SceneDecision};
use cae_core::ingest::{
    load_weights, parse_cc_trace, parse_rq_table, parse_scene_map, parse_size_trace, parse_stats_log, save_weights,
    FrameStats, RqTable, SceneSpan, SizeTrace,
};
use cae_core::pipeline::{parse_labels, LabelRow};
use tempfile::NamedTempFile;

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {what} {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Writes through a temp file in the destination directory, then renames it
/// into place so readers never see a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot create a temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("cannot move output into {}", path.display()))?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}

pub fn zones(path: Option<&Path>) -> Result<ZoneTable> {
    match path {
        None => Ok(ZoneTable::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read zone table {}", p.display()))?;
            ZoneTable::from_toml_str(&text).with_context(|| format!("zone table {}", p.display()))
        }
    }
}

pub fn stats(path: &Path) -> Result<Vec<FrameStats>> {
    let frames = parse_stats_log(open(path, "stats log")?).with_context(|| format!("stats log {}", path.display()))?;
    if frames.is_empty() {
        bail!("stats log {} has no frames", path.display());
    }
    Ok(frames)
}

pub fn rq(path: &Path) -> Result<RqTable> {
    parse_rq_table(open(path, "rate-quality table")?).with_context(|| format!("rate-quality table {}", path.display()))
}

pub fn scenes(path: &Path) -> Result<Vec<SceneSpan>> {
    parse_scene_map(open(path, "scene map")?).with_context(|| format!("scene map {}", path.display()))
}

pub fn labels(path: &Path) -> Result<Vec<LabelRow>> {
    parse_labels(open(path, "labels file")?).with_context(|| format!("labels file {}", path.display()))
}

pub fn decisions(path: &Path) -> Result<Vec<SceneDecision>> {
    parse_decisions(open(path, "decisions file")?).with_context(|| format!("decisions file {}", path.display()))
}

pub fn sizes(path: &Path) -> Result<SizeTrace> {
    parse_size_trace(open(path, "size trace")?).with_context(|| format!("size trace {}", path.display()))
}

pub fn cc(path: &Path) -> Result<Vec<f64>> {
    parse_cc_trace(open(path, "cc trace")?).with_context(|| format!("cc trace {}", path.display()))
}

pub fn bundle_path(dir: &Path, zone_id: u8) -> PathBuf {
    dir.join(format!("zone-{zone_id}.caew"))
}

pub fn save_bundle(dir: &Path, bundle: &WeightBundle) -> Result<()> {
    let bytes = save_weights(bundle)?;
    write_atomic(&bundle_path(dir, bundle.zone_id), |w| Ok(w.write_all(&bytes)?))
}

/// Loads one bundle per zone of `zones` from `dir`.
pub fn bundles(dir: &Path, zones: &ZoneTable) -> Result<Vec<WeightBundle>> {
    zones
        .zones()
        .iter()
        .map(|z| {
            let path = bundle_path(dir, z.id);
            let bytes = fs::read(&path).with_context(|| format!("cannot read weight bundle {}", path.display()))?;
            let b = load_weights(&bytes).with_context(|| format!("weight bundle {}", path.display()))?;
            if b.zone_id != z.id {
                bail!("weight bundle {} is for zone {}, expected {}", path.display(), b.zone_id, z.id);
            }
            Ok(b)
        })
        .collect()
}

/// Session drop percentage from the `total` row of a simulate summary.
pub fn summary_drop_percent(path: &Path) -> Result<f64> {
    let mut rdr = csv::Reader::from_reader(open(path, "session summary")?);
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("session summary {}", path.display()))?;
        if rec.get(0) == Some("total") {
            let v = rec.get(7).unwrap_or_default();
            return v
                .parse()
                .with_context(|| format!("session summary {}: bad drop_percent {v:?}", path.display()));
        }
    }
    bail!("session summary {} has no total row", path.display())
}

/// Two numeric columns (test, reference) with a header row.
pub fn pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path, "pairs file")?);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("pairs file {}", path.display()))?;
        let row = i + 2;
        let num = |k: usize| -> Result<f64> {
            let v = rec.get(k).unwrap_or_default();
            match v.parse::<f64>() {
                Ok(n) if n.is_finite() => Ok(n),
                _ => bail!("pairs file {}: row {row}: {v:?} is not a number", path.display()),
            }
        };
        x.push(num(0)?);
        y.push(num(1)?);
    }
    Ok((x, y))
}
