//! Resolutions, bitrate zones and the zone ladder table.
//!
//! A [`ZoneTable`] partitions the congestion-control bitrate range into zones.
//! Each zone carries the resolution the content-agnostic (static) ladder uses
//! and the pair of adjacent resolutions the adaptive engine may choose from.
//! Zone ranges are half-open `[low, high)` except the last, which is closed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default coding tree block edge in pixels (HEVC).
pub const DEFAULT_CTB_SIZE: u32 = 64;

/// 16:9 output resolutions, ordered by height.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "360p")]
    P360,
    #[serde(rename = "540p")]
    P540,
    #[serde(rename = "720p")]
    P720,
    #[serde(rename = "1080p")]
    P1080,
    #[serde(rename = "2160p")]
    P2160,
}

impl Resolution {
    pub const ALL: [Resolution; 5] = [
        Resolution::P360,
        Resolution::P540,
        Resolution::P720,
        Resolution::P1080,
        Resolution::P2160,
    ];

    /// Resolutions a stream may be encoded at (2160p is source-only).
    pub const STREAMED: [Resolution; 4] = [
        Resolution::P360,
        Resolution::P540,
        Resolution::P720,
        Resolution::P1080,
    ];

    pub fn height(self) -> u32 {
        match self {
            Resolution::P360 => 360,
            Resolution::P540 => 540,
            Resolution::P720 => 720,
            Resolution::P1080 => 1080,
            Resolution::P2160 => 2160,
        }
    }

    pub fn width(self) -> u32 {
        self.height() * 16 / 9
    }

    pub fn from_height(height: u32) -> Option<Resolution> {
        Resolution::ALL.into_iter().find(|r| r.height() == height)
    }

    pub fn name(self) -> &'static str {
        match self {
            Resolution::P360 => "360p",
            Resolution::P540 => "540p",
            Resolution::P720 => "720p",
            Resolution::P1080 => "1080p",
            Resolution::P2160 => "2160p",
        }
    }

    /// Position in the total order, 0 for 360p.
    pub fn rank(self) -> usize {
        self as usize
    }

    /// Whether `other` is exactly one step away in the resolution order.
    pub fn is_adjacent(self, other: Resolution) -> bool {
        self.rank().abs_diff(other.rank()) == 1
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown resolution `{0}` (expected one of 360p, 540p, 720p, 1080p, 2160p)")]
pub struct ParseResolutionError(pub String);

impl FromStr for Resolution {
    type Err = ParseResolutionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Resolution::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| ParseResolutionError(t.to_string()))
    }
}

/// Number of CTB rows covering the frame height, `ceil(height / ctb_size)`.
///
/// # Panics
///
/// Panics if `ctb_size` is zero.
pub fn ctb_rows(resolution: Resolution, ctb_size: u32) -> usize {
    assert!(ctb_size > 0, "ctb_size must be positive");
    resolution.height().div_ceil(ctb_size) as usize
}

/// Number of CTB columns covering the frame width.
pub fn ctb_cols(resolution: Resolution, ctb_size: u32) -> usize {
    assert!(ctb_size > 0, "ctb_size must be positive");
    resolution.width().div_ceil(ctb_size) as usize
}

/// A bitrate interval with its static resolution and one-step candidate pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: u8,
    pub low_mbps: f64,
    pub high_mbps: f64,
    #[serde(rename = "static")]
    pub static_resolution: Resolution,
    pub candidate_low: Resolution,
    pub candidate_high: Resolution,
}

impl Zone {
    pub fn candidates(&self) -> [Resolution; 2] {
        [self.candidate_low, self.candidate_high]
    }

    /// Resolution for a binary classifier label (0 low, 1 high).
    pub fn resolution_for_label(&self, label: u8) -> Resolution {
        if label == 0 {
            self.candidate_low
        } else {
            self.candidate_high
        }
    }

    /// Label of the static resolution within the candidate pair.
    pub fn static_label(&self) -> u8 {
        u8::from(self.static_resolution == self.candidate_high)
    }
}

/// Result of a zone lookup. `clamped` is set when the bitrate fell outside the
/// table's overall range and was assigned to the nearest end zone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneLookup<'a> {
    pub zone: &'a Zone,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZoneError {
    #[error("bitrate must be positive, got {0} Mbps")]
    NonPositiveBitrate(f64),
    #[error("zone table is empty")]
    EmptyTable,
    #[error("invalid zone table: {0}")]
    Invalid(String),
    #[error("zone table config: {0}")]
    Config(String),
}

/// A single broken invariant found by [`validate_zone_table`].
#[derive(Clone, Debug, PartialEq)]
pub enum ZoneViolation {
    Empty,
    /// Ids must be 0..n in table order.
    BadId { position: usize, id: u8 },
    EmptyRange { zone: u8 },
    NonContiguous { zone: u8, previous_high: f64, low: f64 },
    CandidateOrder { zone: u8 },
    NotAdjacent { zone: u8 },
    StaticNotCandidate { zone: u8 },
    StaticDecreasing { zone: u8 },
}

impl fmt::Display for ZoneViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZoneViolation::Empty => write!(f, "empty: table has no zones"),
            ZoneViolation::BadId { position, id } => {
                write!(f, "bad id: zone at position {position} has id {id}")
            }
            ZoneViolation::EmptyRange { zone } => {
                write!(f, "empty range: zone {zone} has low >= high")
            }
            ZoneViolation::NonContiguous { zone, previous_high, low } => write!(
                f,
                "non-contiguous: zone {zone} starts at {low} but previous zone ends at {previous_high}"
            ),
            ZoneViolation::CandidateOrder { zone } => {
                write!(f, "candidate order: zone {zone} candidate_low is not below candidate_high")
            }
            ZoneViolation::NotAdjacent { zone } => {
                write!(f, "not adjacent: zone {zone} candidates are more than one step apart")
            }
            ZoneViolation::StaticNotCandidate { zone } => {
                write!(f, "static not candidate: zone {zone} static resolution is outside its pair")
            }
            ZoneViolation::StaticDecreasing { zone } => {
                write!(f, "static decreasing: zone {zone} static resolution is below the previous zone's")
            }
        }
    }
}

/// Ordered, contiguous bitrate zones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneTable {
    zones: Vec<Zone>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneTableFile {
    zone: Vec<Zone>,
}

impl Default for ZoneTable {
    fn default() -> Self {
        use Resolution::*;
        let z = |id, low_mbps, high_mbps, s, lo, hi| Zone {
            id,
            low_mbps,
            high_mbps,
            static_resolution: s,
            candidate_low: lo,
            candidate_high: hi,
        };
        ZoneTable {
            zones: vec![
                z(0, 1.0, 2.0, P360, P360, P540),
                z(1, 2.0, 5.0, P540, P540, P720),
                z(2, 5.0, 10.0, P720, P720, P1080),
                z(3, 10.0, 20.0, P1080, P720, P1080),
            ],
        }
    }
}

impl ZoneTable {
    /// Builds a table, rejecting it if any invariant fails.
    pub fn new(zones: Vec<Zone>) -> Result<Self, ZoneError> {
        let table = ZoneTable { zones };
        let report = validate_zone_table(&table);
        if report.is_empty() {
            Ok(table)
        } else {
            let msgs: Vec<String> = report.iter().map(ToString::to_string).collect();
            Err(ZoneError::Invalid(msgs.join("; ")))
        }
    }

    /// Builds a table without checking invariants. Use [`validate_zone_table`]
    /// to inspect it.
    pub fn new_unchecked(zones: Vec<Zone>) -> Self {
        ZoneTable { zones }
    }

    /// Parses the TOML zone table format (one `[[zone]]` table per zone).
    pub fn from_toml_str(text: &str) -> Result<Self, ZoneError> {
        let file: ZoneTableFile =
            toml::from_str(text).map_err(|e| ZoneError::Config(e.to_string()))?;
        ZoneTable::new(file.zone)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for z in &self.zones {
            out.push_str("[[zone]]\n");
            out.push_str(&format!("id = {}\n", z.id));
            out.push_str(&format!("low_mbps = {:?}\n", z.low_mbps));
            out.push_str(&format!("high_mbps = {:?}\n", z.high_mbps));
            out.push_str(&format!("static = \"{}\"\n", z.static_resolution));
            out.push_str(&format!("candidate_low = \"{}\"\n", z.candidate_low));
            out.push_str(&format!("candidate_high = \"{}\"\n\n", z.candidate_high));
        }
        out
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn zone(&self, id: u8) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// `[min_mbps, max_mbps]` covered by the table.
    pub fn overall_range(&self) -> Option<(f64, f64)> {
        Some((self.zones.first()?.low_mbps, self.zones.last()?.high_mbps))
    }

    /// Finds the zone owning `bitrate`, clamping out-of-range values.
    pub fn zone_for_bitrate(&self, bitrate: f64) -> Result<ZoneLookup<'_>, ZoneError> {
        zone_for_bitrate(self, bitrate)
    }
}

/// Finds the zone whose `[low, high)` range holds `bitrate` (last zone closed).
/// Bitrates outside the table clamp to the first or last zone with `clamped`
/// set.
pub fn zone_for_bitrate(table: &ZoneTable, bitrate: f64) -> Result<ZoneLookup<'_>, ZoneError> {
    if bitrate.is_nan() || bitrate <= 0.0 {
        return Err(ZoneError::NonPositiveBitrate(bitrate));
    }
    let first = table.zones.first().ok_or(ZoneError::EmptyTable)?;
    let last = table.zones.last().ok_or(ZoneError::EmptyTable)?;
    if bitrate < first.low_mbps {
        return Ok(ZoneLookup { zone: first, clamped: true });
    }
    if bitrate > last.high_mbps {
        return Ok(ZoneLookup { zone: last, clamped: true });
    }
    let zone = table
        .zones
        .iter()
        .find(|z| bitrate >= z.low_mbps && bitrate < z.high_mbps)
        .unwrap_or(last);
    Ok(ZoneLookup { zone, clamped: false })
}

/// Lists every broken [`ZoneTable`] invariant; empty means the table is valid.
pub fn validate_zone_table(table: &ZoneTable) -> Vec<ZoneViolation> {
    let mut report = Vec::new();
    if table.zones.is_empty() {
        report.push(ZoneViolation::Empty);
        return report;
    }
    let mut prev: Option<&Zone> = None;
    for (position, z) in table.zones.iter().enumerate() {
        if usize::from(z.id) != position {
            report.push(ZoneViolation::BadId { position, id: z.id });
        }
        if !(z.low_mbps < z.high_mbps) {
            report.push(ZoneViolation::EmptyRange { zone: z.id });
        }
        if z.candidate_low >= z.candidate_high {
            report.push(ZoneViolation::CandidateOrder { zone: z.id });
        } else if !z.candidate_low.is_adjacent(z.candidate_high) {
            report.push(ZoneViolation::NotAdjacent { zone: z.id });
        }
        if z.static_resolution != z.candidate_low && z.static_resolution != z.candidate_high {
            report.push(ZoneViolation::StaticNotCandidate { zone: z.id });
        }
        if let Some(p) = prev {
            if p.high_mbps != z.low_mbps {
                report.push(ZoneViolation::NonContiguous {
                    zone: z.id,
                    previous_high: p.high_mbps,
                    low: z.low_mbps,
                });
            }
            if z.static_resolution < p.static_resolution {
                report.push(ZoneViolation::StaticDecreasing { zone: z.id });
            }
        }
        prev = Some(z);
    }
    report
}
