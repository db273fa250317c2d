use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{Spectrogram, TfMask};

/// Where a chunk sits inside the meeting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkContext {
    pub index: usize,
    pub frame_start: usize,
    pub frame_end: usize,
}

/// Masks for one chunk: `num_streams` speech masks followed by the noise mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkMasks {
    pub chunk_index: usize,
    pub masks: Vec<TfMask>,
}

impl ChunkMasks {
    pub fn num_streams(&self) -> usize {
        self.masks.len().saturating_sub(1)
    }

    pub fn speech(&self) -> &[TfMask] {
        &self.masks[..self.num_streams()]
    }

    pub fn noise(&self) -> &TfMask {
        self.masks.last().expect("chunk masks include noise")
    }

    pub fn frames(&self) -> usize {
        self.masks.first().map_or(0, TfMask::frames)
    }
}

/// Pluggable chunk-level separator. Output order of the speech masks is
/// arbitrary; the stitcher resolves it.
pub trait MaskEstimator: Send + Sync {
    fn num_streams(&self) -> usize;

    /// Returns `num_streams()` speech masks and then one noise mask.
    fn estimate(&self, chunk: &Spectrogram, ctx: &ChunkContext) -> Result<Vec<TfMask>>;
}

/// Runs `estimator` on one chunk and checks its output against the interface.
pub fn estimate_masks(
    chunk: &Spectrogram,
    estimator: &dyn MaskEstimator,
    ctx: &ChunkContext,
) -> Result<ChunkMasks> {
    let wrap = |e: Error| Error::Estimator {
        chunk: ctx.index,
        source: Box::new(e),
    };
    let masks = estimator.estimate(chunk, ctx).map_err(wrap)?;
    let expected = estimator.num_streams() + 1;
    if masks.len() != expected {
        return Err(wrap(Error::Shape(format!(
            "estimator returned {} masks, expected {expected}",
            masks.len()
        ))));
    }
    for m in &masks {
        m.check_shape(chunk).map_err(wrap)?;
        if m.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(wrap(Error::Bounds("mask value outside [0, 1]".into())));
        }
    }
    Ok(ChunkMasks {
        chunk_index: ctx.index,
        masks,
    })
}

/// Emits a fixed value for every stream and for noise.
#[derive(Debug, Clone)]
pub struct ConstantEstimator {
    pub num_streams: usize,
    pub value: f64,
}

impl MaskEstimator for ConstantEstimator {
    fn num_streams(&self) -> usize {
        self.num_streams
    }

    fn estimate(&self, chunk: &Spectrogram, _ctx: &ChunkContext) -> Result<Vec<TfMask>> {
        let v = self.value.clamp(0.0, 1.0);
        Ok((0..=self.num_streams)
            .map(|_| TfMask::constant(chunk.frames(), chunk.freq_bins(), v))
            .collect())
    }
}

/// Cuts meeting-wide oracle masks into chunks. With more speakers than
/// streams, each chunk keeps the speakers carrying the most mask mass.
/// Optionally scrambles the stream order per chunk with a seeded permutation.
#[derive(Debug, Clone)]
pub struct OracleEstimator {
    speech: Vec<TfMask>,
    noise: TfMask,
    num_streams: usize,
    scramble_seed: Option<u64>,
}

impl OracleEstimator {
    pub fn new(speech: Vec<TfMask>, noise: TfMask, num_streams: usize) -> Result<Self> {
        if num_streams == 0 {
            return Err(Error::Config("oracle estimator needs at least one stream".into()));
        }
        if speech.iter().any(|m| m.values().dim() != noise.values().dim()) {
            return Err(Error::Shape("oracle masks differ in shape".into()));
        }
        Ok(Self {
            speech,
            noise,
            num_streams,
            scramble_seed: None,
        })
    }

    pub fn with_scramble(mut self, seed: u64) -> Self {
        self.scramble_seed = Some(seed);
        self
    }

    /// `p[j]` is the unscrambled stream emitted at output `j` of chunk `index`.
    pub fn scramble(&self, index: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.num_streams).collect();
        if let Some(seed) = self.scramble_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            p.shuffle(&mut rng);
        }
        p
    }

    /// Speaker indices feeding the unscrambled streams of a chunk; `None`
    /// marks an empty stream.
    pub fn selected_speakers(&self, ctx: &ChunkContext) -> Vec<Option<usize>> {
        let mut chosen: Vec<usize> = (0..self.speech.len()).collect();
        if chosen.len() > self.num_streams {
            let mass: Vec<f64> = self
                .speech
                .iter()
                .map(|m| m.frame_range(ctx.frame_start, ctx.frame_end).sum())
                .collect();
            chosen.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
            chosen.truncate(self.num_streams);
            chosen.sort_unstable();
        }
        (0..self.num_streams).map(|k| chosen.get(k).copied()).collect()
    }
}

impl MaskEstimator for OracleEstimator {
    fn num_streams(&self) -> usize {
        self.num_streams
    }

    fn estimate(&self, chunk: &Spectrogram, ctx: &ChunkContext) -> Result<Vec<TfMask>> {
        if ctx.frame_end > self.noise.frames() || ctx.frame_end - ctx.frame_start != chunk.frames() {
            return Err(Error::OracleUnavailable(format!(
                "chunk frames {}..{} outside oracle masks",
                ctx.frame_start, ctx.frame_end
            )));
        }
        let streams: Vec<TfMask> = self
            .selected_speakers(ctx)
            .into_iter()
            .map(|s| match s {
                Some(k) => self.speech[k].frame_range(ctx.frame_start, ctx.frame_end),
                None => TfMask::constant(chunk.frames(), chunk.freq_bins(), 0.0),
            })
            .collect();
        let mut out: Vec<TfMask> = self.scramble(ctx.index).into_iter().map(|j| streams[j].clone()).collect();
        out.push(self.noise.frame_range(ctx.frame_start, ctx.frame_end));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, AudioClip};
    use ndarray::Array2;

    fn chunk(frames_secs: f64) -> Spectrogram {
        let clip = AudioClip::mono(vec![0.1; (frames_secs * 16_000.0) as usize], 16_000).unwrap();
        stft(&clip, 512, 256).unwrap()
    }

    #[test]
    fn constant_estimator_is_accepted() {
        let spec = chunk(0.5);
        let est = ConstantEstimator { num_streams: 2, value: 0.5 };
        let ctx = ChunkContext { index: 0, frame_start: 0, frame_end: spec.frames() };
        let m = estimate_masks(&spec, &est, &ctx).unwrap();
        assert_eq!(m.masks.len(), 3);
        assert_eq!(m.num_streams(), 2);
    }

    struct Broken;
    impl MaskEstimator for Broken {
        fn num_streams(&self) -> usize {
            2
        }
        fn estimate(&self, _: &Spectrogram, _: &ChunkContext) -> Result<Vec<TfMask>> {
            Err(Error::Numerical("nan".into()))
        }
    }

    #[test]
    fn failure_carries_chunk_index() {
        let spec = chunk(0.5);
        let ctx = ChunkContext { index: 7, frame_start: 0, frame_end: spec.frames() };
        match estimate_masks(&spec, &Broken, &ctx) {
            Err(Error::Estimator { chunk, .. }) => assert_eq!(chunk, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_single_speaker_chunk() {
        let spec = chunk(0.5);
        let (f, b) = (spec.frames(), spec.freq_bins());
        let a = TfMask::constant(f, b, 1.0);
        let z = TfMask::constant(f, b, 0.0);
        let est = OracleEstimator::new(vec![a, z.clone()], z, 2).unwrap();
        let ctx = ChunkContext { index: 0, frame_start: 0, frame_end: f };
        let m = est.estimate(&spec, &ctx).unwrap();
        assert_eq!(m[0].sum(), (f * b) as f64);
        assert_eq!(m[1].sum(), 0.0);
    }

    #[test]
    fn scramble_is_a_seeded_permutation() {
        let z = TfMask::new(Array2::zeros((4, 257))).unwrap();
        let est = OracleEstimator::new(vec![z.clone(), z.clone(), z.clone()], z, 3)
            .unwrap()
            .with_scramble(3);
        let mut seen_non_identity = false;
        for c in 0..20 {
            let mut p = est.scramble(c);
            assert_eq!(p, est.scramble(c));
            seen_non_identity |= p != vec![0, 1, 2];
            p.sort();
            assert_eq!(p, vec![0, 1, 2]);
        }
        assert!(seen_non_identity);
    }
}
