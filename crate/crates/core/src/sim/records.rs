//! Detection records and their JSON-lines serialization.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_NAME: &str = "atomlink.detections";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    H,
    V,
    /// Fluorescence mode: a single detector per channel.
    #[serde(rename = "none")]
    None,
}

/// Simulation-side provenance of a click. Analysis code never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Atom,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub sequence_id: u64,
    pub trial_id: u32,
    pub channel: u16,
    pub detector: Detector,
    /// Time after the start of the trial's excitation pulse.
    pub timestamp_ns: f64,
    pub origin: Origin,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("missing or unsupported schema header: {0}")]
    Schema(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

pub fn write_records<W: Write>(mut w: W, records: &[DetectionRecord]) -> Result<(), RecordError> {
    let header = Header { schema: SCHEMA_NAME.into(), version: SCHEMA_VERSION };
    serde_json::to_writer(&mut w, &header).map_err(io::Error::from)?;
    writeln!(w)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<DetectionRecord>, RecordError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| RecordError::Schema("empty input".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| RecordError::Schema(e.to_string()))?;
    if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
        return Err(RecordError::Schema(format!("{} v{}", header.schema, header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| RecordError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            DetectionRecord {
                sequence_id: 7,
                trial_id: 3,
                channel: 2,
                detector: Detector::H,
                timestamp_ns: 12.5,
                origin: Origin::Atom,
            },
            DetectionRecord {
                sequence_id: 8,
                trial_id: 0,
                channel: 9,
                detector: Detector::None,
                timestamp_ns: 4321.0,
                origin: Origin::Background,
            },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"schema":"atomlink.detections","version":1}"#));
        assert!(text.contains(r#""detector":"none""#));
        assert_eq!(read_records(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(read_records(&b"{\"schema\":\"x\",\"version\":1}\n"[..]), Err(RecordError::Schema(_))));
        assert!(matches!(read_records(&b""[..]), Err(RecordError::Schema(_))));
        let bad = b"{\"schema\":\"atomlink.detections\",\"version\":1}\n{\"sequence_id\":1}\n";
        assert!(matches!(read_records(&bad[..]), Err(RecordError::Parse { line: 2, .. })));
    }
}
