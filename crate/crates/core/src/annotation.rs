//! Speaker segments and their RTTM serialization.
//!
//! RTTM lines follow `SPEAKER <recid> <chan> <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>`
//! with times printed to three decimals. The channel field carries `stream + 1`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream id used for annotations of the unseparated recording.
pub const MIXTURE: usize = 0;

/// Rounds a time in seconds to the millisecond grid.
pub fn to_millis(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

pub fn from_millis(ms: i64) -> f64 {
    ms as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub stream: usize,
    pub speaker: String,
    pub start: f64,
    pub end: f64,
}

impl SegmentAnnotation {
    pub fn new(stream: usize, speaker: impl Into<String>, start: f64, end: f64) -> Result<Self> {
        let start = from_millis(to_millis(start));
        let end = from_millis(to_millis(end));
        if !(start >= 0.0 && start < end) {
            return Err(Error::Bounds(format!(
                "segment [{start}, {end}] is not a positive interval"
            )));
        }
        Ok(Self {
            stream,
            speaker: speaker.into(),
            start,
            end,
        })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn start_ms(&self) -> i64 {
        to_millis(self.start)
    }

    pub fn end_ms(&self) -> i64 {
        to_millis(self.end)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Orders segments by (start, end, stream, speaker).
pub fn sort_segments(segments: &mut [SegmentAnnotation]) {
    segments.sort_by(|a, b| {
        a.start_ms()
            .cmp(&b.start_ms())
            .then(a.end_ms().cmp(&b.end_ms()))
            .then(a.stream.cmp(&b.stream))
            .then(a.speaker.cmp(&b.speaker))
    });
}

pub fn format_rttm(recording: &str, segments: &[SegmentAnnotation]) -> String {
    let mut out = String::new();
    for seg in segments {
        let beg = seg.start_ms();
        let dur = seg.end_ms() - beg;
        writeln!(
            out,
            "SPEAKER {recording} {} {}.{:03} {}.{:03} <NA> <NA> {} <NA> <NA>",
            seg.stream + 1,
            beg / 1000,
            beg % 1000,
            dur / 1000,
            dur % 1000,
            seg.speaker
        )
        .expect("writing to a String");
    }
    out
}

/// Parses RTTM text; `source` names the input in error messages.
pub fn parse_rttm(text: &str, source: &str) -> Result<Vec<(String, SegmentAnnotation)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 {
            return Err(err(format!(
                "expected at least 8 fields, found {}",
                fields.len()
            )));
        }
        if fields[0] != "SPEAKER" {
            continue;
        }
        let channel: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("bad channel {:?}", fields[2])))?;
        let beg: f64 = fields[3]
            .parse()
            .map_err(|_| err(format!("bad onset {:?}", fields[3])))?;
        let dur: f64 = fields[4]
            .parse()
            .map_err(|_| err(format!("bad duration {:?}", fields[4])))?;
        if !(beg.is_finite() && dur.is_finite()) || beg < 0.0 || dur <= 0.0 {
            return Err(err(format!("invalid interval onset={beg} dur={dur}")));
        }
        let beg_ms = to_millis(beg);
        let seg = SegmentAnnotation::new(
            channel.saturating_sub(1),
            fields[7],
            from_millis(beg_ms),
            from_millis(beg_ms + to_millis(dur)),
        )
        .map_err(|e| err(e.to_string()))?;
        out.push((fields[1].to_string(), seg));
    }
    Ok(out)
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Vec<SegmentAnnotation>> {
    let path = path.as_ref();
    let text = crate::fsutil::read_to_string(path)?;
    Ok(parse_rttm(&text, &path.display().to_string())?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

pub fn write_rttm(
    path: impl AsRef<Path>,
    recording: &str,
    segments: &[SegmentAnnotation],
) -> Result<()> {
    crate::fsutil::write_atomic(path, format_rttm(recording, segments))
}
