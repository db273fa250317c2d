use std::collections::BTreeMap;

use crate::annotation::SegmentAnnotation;
use crate::error::{Error, Result};

/// Per-speaker unions of segment intervals on the millisecond grid.
pub(crate) fn speaker_intervals(
    segments: &[SegmentAnnotation],
) -> BTreeMap<String, Vec<(i64, i64)>> {
    let mut map: BTreeMap<String, Vec<(i64, i64)>> = BTreeMap::new();
    for s in segments {
        map.entry(s.speaker.clone())
            .or_default()
            .push((s.start_ms(), s.end_ms()));
    }
    for list in map.values_mut() {
        *list = merge_intervals(std::mem::take(list));
    }
    map
}

pub(crate) fn merge_intervals(mut list: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    list.retain(|(a, b)| b > a);
    list.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(list.len());
    for (a, b) in list {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Duration with at least two simultaneous speakers over duration with at least one.
pub fn overlap_ratio(segments: &[SegmentAnnotation]) -> Result<f64> {
    let mut events: Vec<(i64, i32)> = Vec::new();
    for list in speaker_intervals(segments).values() {
        for &(a, b) in list {
            events.push((a, 1));
            events.push((b, -1));
        }
    }
    events.sort_unstable();
    let mut active = 0;
    let mut last = 0;
    let mut speech = 0i64;
    let mut overlap = 0i64;
    for (t, delta) in events {
        let dt = t - last;
        if active >= 1 {
            speech += dt;
        }
        if active >= 2 {
            overlap += dt;
        }
        active += delta;
        last = t;
    }
    if speech == 0 {
        return Err(Error::UndefinedMetric("overlap ratio without speech".into()));
    }
    Ok(overlap as f64 / speech as f64)
}
