//! Per-frame side traces used by the channel simulation: encoded size
//! factors and the congestion-control bitrate.

use std::io::{Read, Write};

use thiserror::Error;

use super::synthetic::SizeTrace;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

const SIZE_HEADER: [&str; 5] = ["frame_index", "size_360p", "size_540p", "size_720p", "size_1080p"];

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

/// Rows must be numbered 0, 1, 2, ... in order.
fn check_index(row: usize, got: &str) -> Result<(), TraceError> {
    let want = row - 2;
    match got.parse::<usize>() {
        Ok(i) if i == want => Ok(()),
        _ => Err(TraceError::MalformedRow { row, reason: format!("frame_index {got:?}, expected {want}") }),
    }
}

fn positive(row: usize, name: &str, text: &str) -> Result<f64, TraceError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(TraceError::MalformedRow { row, reason: format!("{name} {text:?} is not a positive number") }),
    }
}

pub fn write_size_trace<W: Write>(writer: W, trace: &SizeTrace) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SIZE_HEADER)?;
    for (i, f) in trace.factors.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(f.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn parse_size_trace<R: Read>(r: R) -> Result<SizeTrace, TraceError> {
    let mut rdr = reader(r);
    let mut factors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != SIZE_HEADER.len() {
            return Err(TraceError::MalformedRow { row, reason: format!("{} fields, expected 5", rec.len()) });
        }
        check_index(row, &rec[0])?;
        let mut f = [0.0; 4];
        for (k, v) in f.iter_mut().enumerate() {
            *v = positive(row, SIZE_HEADER[k + 1], &rec[k + 1])?;
        }
        factors.push(f);
    }
    Ok(SizeTrace { factors })
}

pub fn write_cc_trace<W: Write>(writer: W, cc: &[f64]) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["frame_index", "cc_mbps"])?;
    for (i, v) in cc.iter().enumerate() {
        wtr.write_record([i.to_string(), v.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn parse_cc_trace<R: Read>(r: R) -> Result<Vec<f64>, TraceError> {
    let mut rdr = reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 2 {
            return Err(TraceError::MalformedRow { row, reason: format!("{} fields, expected 2", rec.len()) });
        }
        check_index(row, &rec[0])?;
        out.push(positive(row, "cc_mbps", &rec[1])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_trace_round_trips() {
        let t = SizeTrace { factors: vec![[0.7, 0.8, 0.9, 1.1], [1.2, 1.3, 1.4, 1.6]] };
        let mut buf = Vec::new();
        write_size_trace(&mut buf, &t).unwrap();
        assert_eq!(parse_size_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn cc_trace_round_trips() {
        let cc = vec![1.0, 2.345678, 19.999999];
        let mut buf = Vec::new();
        write_cc_trace(&mut buf, &cc).unwrap();
        assert_eq!(parse_cc_trace(buf.as_slice()).unwrap(), cc);
    }

    #[test]
    fn gaps_and_bad_values_are_reported_with_row() {
        let gap = "frame_index,cc_mbps\n0,5\n2,5\n";
        assert!(matches!(parse_cc_trace(gap.as_bytes()), Err(TraceError::MalformedRow { row: 3, .. })));
        let neg = "frame_index,cc_mbps\n0,-1\n";
        assert!(matches!(parse_cc_trace(neg.as_bytes()), Err(TraceError::MalformedRow { row: 2, .. })));
        let short = "frame_index,size_360p,size_540p,size_720p,size_1080p\n0,1,1,1\n";
        assert!(parse_size_trace(short.as_bytes()).is_err());
    }
}
