//! Diarization error rate on a millisecond grid.
//!
//! The timeline is cut at every reference/hypothesis boundary. Reference and
//! hypothesis speakers are paired once for the whole recording by maximizing
//! jointly active time, then each region is scored against that mapping.

use serde::{Deserialize, Serialize};

use super::assignment::solve_assignment;
use super::overlap::{merge_intervals, speaker_intervals};
use crate::annotation::{to_millis, SegmentAnnotation};
use crate::error::{Error, Result};

/// DER components in integer milliseconds; `total` is reference speaker time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerBreakdown {
    pub missed_ms: i64,
    pub false_alarm_ms: i64,
    pub confusion_ms: i64,
    pub total_speech_ms: i64,
}

impl DerBreakdown {
    pub fn missed(&self) -> f64 {
        self.missed_ms as f64 / 1000.0
    }

    pub fn false_alarm(&self) -> f64 {
        self.false_alarm_ms as f64 / 1000.0
    }

    pub fn confusion(&self) -> f64 {
        self.confusion_ms as f64 / 1000.0
    }

    pub fn total_speech(&self) -> f64 {
        self.total_speech_ms as f64 / 1000.0
    }

    pub fn errors_ms(&self) -> i64 {
        self.missed_ms + self.false_alarm_ms + self.confusion_ms
    }

    pub fn der(&self) -> f64 {
        if self.total_speech_ms == 0 {
            f64::NAN
        } else {
            self.errors_ms() as f64 / self.total_speech_ms as f64
        }
    }

    /// Component-wise sum; the ratio of sums is the duration-weighted DER.
    pub fn accumulate(&mut self, other: &DerBreakdown) {
        self.missed_ms += other.missed_ms;
        self.false_alarm_ms += other.false_alarm_ms;
        self.confusion_ms += other.confusion_ms;
        self.total_speech_ms += other.total_speech_ms;
    }
}

struct Region {
    dur: i64,
    refs: Vec<usize>,
    hyps: Vec<usize>,
}

fn regions(
    reference: &[Vec<(i64, i64)>],
    hypothesis: &[Vec<(i64, i64)>],
    excluded: &[(i64, i64)],
) -> Vec<Region> {
    // (time, kind, index, delta); kind 0 = ref, 1 = hyp, 2 = collar
    let mut events: Vec<(i64, u8, usize, i32)> = Vec::new();
    for (kind, lists) in [(0u8, reference), (1u8, hypothesis)] {
        for (idx, list) in lists.iter().enumerate() {
            for &(a, b) in list {
                events.push((a, kind, idx, 1));
                events.push((b, kind, idx, -1));
            }
        }
    }
    for &(a, b) in excluded {
        events.push((a, 2, 0, 1));
        events.push((b, 2, 0, -1));
    }
    events.sort_unstable();

    let mut ref_on = vec![0i32; reference.len()];
    let mut hyp_on = vec![0i32; hypothesis.len()];
    let mut collar_on = 0i32;
    let mut out = Vec::new();
    let mut last = events.first().map_or(0, |e| e.0);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        if t > last && collar_on == 0 {
            let refs: Vec<usize> = (0..ref_on.len()).filter(|&k| ref_on[k] > 0).collect();
            let hyps: Vec<usize> = (0..hyp_on.len()).filter(|&k| hyp_on[k] > 0).collect();
            if !refs.is_empty() || !hyps.is_empty() {
                out.push(Region {
                    dur: t - last,
                    refs,
                    hyps,
                });
            }
        }
        while i < events.len() && events[i].0 == t {
            let (_, kind, idx, delta) = events[i];
            match kind {
                0 => ref_on[idx] += delta,
                1 => hyp_on[idx] += delta,
                _ => collar_on += delta,
            }
            i += 1;
        }
        last = t;
    }
    out
}

/// Scores `hypothesis` against `reference`; stream ids are ignored.
///
/// `collar` seconds are excised on both sides of every reference boundary.
pub fn der(
    reference: &[SegmentAnnotation],
    hypothesis: &[SegmentAnnotation],
    collar: f64,
) -> Result<DerBreakdown> {
    let ref_map = speaker_intervals(reference);
    let hyp_map = speaker_intervals(hypothesis);
    let ref_lists: Vec<Vec<(i64, i64)>> = ref_map.into_values().collect();
    let hyp_lists: Vec<Vec<(i64, i64)>> = hyp_map.into_values().collect();

    let collar_ms = to_millis(collar.max(0.0));
    let excluded = if collar_ms > 0 {
        merge_intervals(
            reference
                .iter()
                .flat_map(|s| [s.start_ms(), s.end_ms()])
                .map(|b| (b - collar_ms, b + collar_ms))
                .collect(),
        )
    } else {
        Vec::new()
    };

    let regions = regions(&ref_lists, &hyp_lists, &excluded);

    let mut joint = vec![vec![0i64; hyp_lists.len()]; ref_lists.len()];
    for r in &regions {
        for &a in &r.refs {
            for &b in &r.hyps {
                joint[a][b] += r.dur;
            }
        }
    }
    let cost: Vec<Vec<f64>> = joint
        .iter()
        .map(|row| row.iter().map(|&v| -(v as f64)).collect())
        .collect();
    let mapping = solve_assignment(&cost);
    let mut ref_to_hyp = vec![None; ref_lists.len()];
    for &(r, h) in &mapping.mapping {
        ref_to_hyp[r] = Some(h);
    }

    let mut out = DerBreakdown::default();
    for r in &regions {
        let n_ref = r.refs.len() as i64;
        let n_hyp = r.hyps.len() as i64;
        let correct = r
            .refs
            .iter()
            .filter(|&&a| ref_to_hyp[a].is_some_and(|h| r.hyps.contains(&h)))
            .count() as i64;
        out.total_speech_ms += n_ref * r.dur;
        out.missed_ms += (n_ref - n_hyp).max(0) * r.dur;
        out.false_alarm_ms += (n_hyp - n_ref).max(0) * r.dur;
        out.confusion_ms += (n_ref.min(n_hyp) - correct) * r.dur;
    }
    if out.total_speech_ms == 0 {
        return Err(Error::UndefinedMetric("DER without reference speech".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(spk: &str, a: f64, b: f64) -> SegmentAnnotation {
        SegmentAnnotation::new(0, spk, a, b).unwrap()
    }

    #[test]
    fn perfect_hypothesis() {
        let r = vec![seg("A", 0.0, 4.0), seg("B", 3.0, 9.0)];
        let h = vec![seg("x", 0.0, 4.0), seg("y", 3.0, 9.0)];
        for collar in [0.0, 0.25] {
            assert_eq!(der(&r, &h, collar).unwrap().der(), 0.0);
        }
    }

    #[test]
    fn missed_tail() {
        let d = der(&[seg("A", 0.0, 10.0)], &[seg("X", 0.0, 9.0)], 0.0).unwrap();
        assert_eq!(d.missed_ms, 1000);
        assert_eq!(d.false_alarm_ms, 0);
        assert_eq!(d.confusion_ms, 0);
        assert_eq!(d.der(), 0.1);
    }

    #[test]
    fn split_speaker_is_half_confusion() {
        let d = der(
            &[seg("A", 0.0, 10.0)],
            &[seg("X", 0.0, 5.0), seg("Y", 5.0, 10.0)],
            0.0,
        )
        .unwrap();
        assert_eq!(d.confusion_ms, 5000);
        assert_eq!(d.der(), 0.5);
    }

    #[test]
    fn overlap_is_scored() {
        // hypothesis misses the second speaker in the overlap
        let r = vec![seg("A", 0.0, 6.0), seg("B", 4.0, 10.0)];
        let h = vec![seg("x", 0.0, 6.0), seg("y", 6.0, 10.0)];
        let d = der(&r, &h, 0.0).unwrap();
        assert_eq!(d.total_speech_ms, 12_000);
        assert_eq!(d.missed_ms, 2000);
    }

    #[test]
    fn false_alarm_and_collar() {
        let r = vec![seg("A", 1.0, 5.0)];
        let h = vec![seg("x", 0.8, 5.0)];
        assert_eq!(der(&r, &h, 0.0).unwrap().false_alarm_ms, 200);
        assert_eq!(der(&r, &h, 0.25).unwrap().errors_ms(), 0);
    }

    #[test]
    fn empty_reference_is_undefined() {
        assert!(der(&[], &[seg("x", 0.0, 1.0)], 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn bounded_and_label_free(
            segs in proptest::collection::vec((0u8..3, 0u32..200, 1u32..40), 1..10),
            hyp in proptest::collection::vec((0u8..3, 0u32..200, 1u32..40), 0..10),
        ) {
            let build = |v: &[(u8, u32, u32)], prefix: &str| -> Vec<SegmentAnnotation> {
                v.iter()
                    .map(|&(s, a, l)| seg(&format!("{prefix}{s}"), a as f64 * 0.1, (a + l) as f64 * 0.1))
                    .collect()
            };
            let r = build(&segs, "r");
            let self_score = der(&r, &r, 0.0).unwrap();
            proptest::prop_assert_eq!(self_score.errors_ms(), 0);
            let h = build(&hyp, "h");
            let renamed = build(&hyp, "other");
            let a = der(&r, &h, 0.0).unwrap();
            let b = der(&r, &renamed, 0.0).unwrap();
            proptest::prop_assert_eq!(a.errors_ms(), b.errors_ms());
            proptest::prop_assert!(a.missed_ms + a.confusion_ms <= a.total_speech_ms);
        }
    }
}
