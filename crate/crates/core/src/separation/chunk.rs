use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform overlapping segmentation of a recording, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_len: f64,
    pub hop: f64,
    pub overlap: f64,
    pub boundaries: Vec<(f64, f64)>,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Chunk boundaries as STFT frame ranges `[start, end)`. The last chunk
    /// always ends at `total_frames`.
    pub fn frame_bounds(&self, sample_rate: u32, stft_hop: usize, total_frames: usize) -> Vec<(usize, usize)> {
        let to_frame = |t: f64| ((t * sample_rate as f64 / stft_hop as f64).round() as usize).min(total_frames);
        let last = self.boundaries.len().saturating_sub(1);
        self.boundaries
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| {
                let end = if i == last { total_frames } else { to_frame(e) };
                (to_frame(s).min(end), end)
            })
            .collect()
    }

    /// Chunk boundaries as sample ranges `[start, end)`.
    pub fn sample_bounds(&self, sample_rate: u32, total_samples: usize) -> Vec<(usize, usize)> {
        let to_sample = |t: f64| ((t * sample_rate as f64).round() as usize).min(total_samples);
        let last = self.boundaries.len().saturating_sub(1);
        self.boundaries
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| {
                let end = if i == last { total_samples } else { to_sample(e) };
                (to_sample(s).min(end), end)
            })
            .collect()
    }
}

/// Chunks start at multiples of `hop` until one reaches the end of the
/// recording; that last chunk is clamped. Recordings shorter than one chunk
/// get a single chunk covering everything.
pub fn plan_chunks(recording_len: f64, chunk_len: f64, hop: f64) -> Result<ChunkPlan> {
    if !(hop > 0.0 && hop <= chunk_len) || !chunk_len.is_finite() {
        return Err(Error::Config(format!(
            "chunk hop {hop} must lie in (0, chunk length {chunk_len}]"
        )));
    }
    if !(recording_len >= 0.0) {
        return Err(Error::Config(format!("invalid recording length {recording_len}")));
    }
    const EPS: f64 = 1e-9;
    let mut boundaries = Vec::new();
    if recording_len <= chunk_len + EPS {
        boundaries.push((0.0, recording_len));
    } else {
        let mut k = 0usize;
        loop {
            let start = k as f64 * hop;
            let end = (start + chunk_len).min(recording_len);
            boundaries.push((start, end));
            if start + chunk_len >= recording_len - EPS {
                break;
            }
            k += 1;
        }
    }
    Ok(ChunkPlan {
        chunk_len,
        hop,
        overlap: chunk_len - hop,
        boundaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn css_chunking() {
        let plan = plan_chunks(10.0, 2.4, 0.8).unwrap();
        assert!((plan.overlap - 1.6).abs() < 1e-12);
        let starts: Vec<f64> = plan.boundaries.iter().map(|b| b.0).collect();
        assert!((starts[1] - 0.8).abs() < 1e-12 && (starts[2] - 1.6).abs() < 1e-12);
        assert_eq!(plan.boundaries.last().unwrap().1, 10.0);
        assert_eq!(plan.len(), 11);
        for w in plan.boundaries.windows(2) {
            assert!(w[1].0 < w[0].1);
        }
    }

    #[test]
    fn block_chunking() {
        let plan = plan_chunks(30.0, 8.0, 4.0).unwrap();
        assert_eq!(plan.overlap, 4.0);
        assert_eq!(plan.boundaries.last().unwrap(), &(24.0, 30.0));
    }

    #[test]
    fn short_recording_single_chunk() {
        let plan = plan_chunks(1.0, 2.4, 0.8).unwrap();
        assert_eq!(plan.boundaries, vec![(0.0, 1.0)]);
    }

    #[test]
    fn bad_hop_rejected() {
        assert!(plan_chunks(10.0, 2.0, 3.0).is_err());
        assert!(plan_chunks(10.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn frame_bounds_cover_recording() {
        let plan = plan_chunks(10.0, 2.4, 0.8).unwrap();
        let fb = plan.frame_bounds(16_000, 256, 627);
        assert_eq!(fb[0], (0, 150));
        assert_eq!(fb[1], (50, 200));
        assert_eq!(fb.last().unwrap().1, 627);
    }
}
