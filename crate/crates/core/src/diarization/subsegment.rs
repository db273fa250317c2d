use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

/// Sliding windows over each speech segment. Full windows are emitted while
/// they fit; a leftover tail gets one final window ending at the segment end
/// and at least half a window long (or the whole segment if shorter).
pub fn subsegment(segments: &[(f64, f64)], window: f64, stride: f64) -> Result<Vec<(f64, f64)>> {
    if !(stride > 0.0 && window >= stride) {
        return Err(Error::Config(format!(
            "subsegment window {window} must be >= stride {stride} > 0"
        )));
    }
    let round = |t: f64| (t * 1000.0).round() / 1000.0;
    let mut out = Vec::new();
    for &(start, end) in segments {
        if end <= start {
            continue;
        }
        if end - start <= window + EPS {
            out.push((start, end));
            continue;
        }
        let mut k = 0usize;
        let mut last_end = start;
        loop {
            let s = round(start + k as f64 * stride);
            if s + window > end + EPS {
                break;
            }
            last_end = round(s + window).min(end);
            out.push((s, last_end));
            k += 1;
        }
        if last_end < end - EPS {
            let next = round(start + k as f64 * stride);
            let s = next.min(round(end - 0.5 * window)).max(start);
            out.push((s, end));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_second_segment() {
        let s = subsegment(&[(0.0, 3.0)], 1.5, 0.75).unwrap();
        assert_eq!(s, vec![(0.0, 1.5), (0.75, 2.25), (1.5, 3.0)]);
    }

    #[test]
    fn never_ends_past_the_segment() {
        let end = 10.1488125;
        let s = subsegment(&[(0.0, end)], 1.5, 0.75).unwrap();
        assert!(s.iter().all(|&(_, e)| e <= end), "{s:?}");
        assert_eq!(s.last().unwrap().1, end);
    }

    #[test]
    fn short_segment_is_kept_whole() {
        assert_eq!(subsegment(&[(2.0, 2.7)], 1.5, 0.75).unwrap(), vec![(2.0, 2.7)]);
    }

    #[test]
    fn empty_input() {
        assert!(subsegment(&[], 1.5, 0.75).unwrap().is_empty());
    }

    #[test]
    fn tail_window_is_at_least_half() {
        let s = subsegment(&[(0.0, 3.3)], 1.5, 0.75).unwrap();
        let last = *s.last().unwrap();
        assert_eq!(last.1, 3.3);
        assert!(last.1 - last.0 >= 0.75 - 1e-9);
        assert!(s.iter().all(|(a, b)| *a >= 0.0 && *b <= 3.3));
    }

    #[test]
    fn bad_config() {
        assert!(subsegment(&[(0.0, 1.0)], 0.5, 0.75).is_err());
    }
}
