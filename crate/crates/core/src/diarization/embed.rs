//! Subsegment embeddings: a log-mel statistics baseline and a reader for
//! externally computed vectors.

use std::collections::BTreeMap;
use std::path::Path;

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::annotation::to_millis;
use crate::error::{Error, Result};
use crate::signal::{AudioClip, Window};

/// Fixed-dimension vector for one subsegment.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub stream: usize,
    pub start: f64,
    pub end: f64,
}

impl Embedding {
    pub fn describe(&self) -> String {
        format!("stream {} [{:.3}, {:.3}]", self.stream, self.start, self.end)
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Embeds `clip[start..end]` (seconds) of stream `stream`.
    fn embed(&self, clip: &AudioClip, stream: usize, start: f64, end: f64) -> Result<Vec<f64>>;
}

/// Mean and standard deviation of level-normalized log-mel frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogMelEmbedder {
    pub num_bands: usize,
    /// Seconds.
    pub frame_len: f64,
    /// Seconds.
    pub frame_hop: f64,
    /// Frames quieter than the loudest one by more than this are skipped (dB).
    pub active_range_db: f64,
    /// Scale applied to the standard-deviation half before normalization.
    pub std_weight: f64,
}

impl Default for LogMelEmbedder {
    fn default() -> Self {
        Self {
            num_bands: 23,
            frame_len: 0.025,
            frame_hop: 0.010,
            active_range_db: 30.0,
            std_weight: 3.0,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale, `[bands][fft_bins]`.
pub fn mel_filterbank(num_bands: usize, fft_len: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let bins = fft_len / 2 + 1;
    let lo = hz_to_mel(20.0);
    let hi = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..num_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (num_bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_len as f64;
    (0..num_bands)
        .map(|b| {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

impl LogMelEmbedder {
    fn log_mel_frames(&self, x: &[f64], sample_rate: u32) -> Vec<(f64, Vec<f64>)> {
        let fs = sample_rate as f64;
        let win = ((self.frame_len * fs).round() as usize).max(2);
        let hop = ((self.frame_hop * fs).round() as usize).max(1);
        let fft_len = win.next_power_of_two();
        let window = Window::SqrtHann.coefficients(win).iter().map(|w| w * w).collect::<Vec<_>>();
        let bank = mel_filterbank(self.num_bands, fft_len, sample_rate);
        let mut planner = RealFftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(fft_len);
        let mut input = fft.make_input_vec();
        let mut spectrum = fft.make_output_vec();
        let frames = if x.len() >= win { (x.len() - win) / hop + 1 } else { 1 };
        (0..frames)
            .map(|t| {
                input.iter_mut().for_each(|v| *v = 0.0);
                for (i, w) in window.iter().enumerate() {
                    input[i] = x.get(t * hop + i).copied().unwrap_or(0.0) * w;
                }
                fft.process(&mut input, &mut spectrum).expect("fft sizes match");
                let power: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();
                let energy: f64 = power.iter().sum();
                let mel: Vec<f64> = bank
                    .iter()
                    .map(|f| (f.iter().zip(&power).map(|(a, b)| a * b).sum::<f64>() + 1e-10).ln())
                    .collect();
                (10.0 * (energy + 1e-20).log10(), mel)
            })
            .collect()
    }
}

impl Embedder for LogMelEmbedder {
    fn dim(&self) -> usize {
        2 * self.num_bands
    }

    fn embed(&self, clip: &AudioClip, _stream: usize, start: f64, end: f64) -> Result<Vec<f64>> {
        let (s, e) = sample_range(clip, start, end)?;
        let x: Vec<f64> = clip.mix_down().channel(0).slice(ndarray::s![s..e]).to_vec();
        let frames = self.log_mel_frames(&x, clip.sample_rate());
        let loudest = frames.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
        let active: Vec<Vec<f64>> = frames
            .into_iter()
            .filter(|f| f.0 >= loudest - self.active_range_db)
            .map(|(_, mut mel)| {
                // remove the frame level so the statistics describe spectral shape
                let mean = mel.iter().sum::<f64>() / mel.len() as f64;
                mel.iter_mut().for_each(|v| *v -= mean);
                mel
            })
            .collect();
        let n = active.len().max(1) as f64;
        let bands = self.num_bands;
        let mut mean = vec![0.0; bands];
        for f in &active {
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n);
        }
        let mut std = vec![0.0; bands];
        for f in &active {
            std.iter_mut().zip(f).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        std.iter_mut().for_each(|s| *s = self.std_weight * s.sqrt());
        let mut v: Vec<f64> = mean.into_iter().chain(std).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

fn sample_range(clip: &AudioClip, start: f64, end: f64) -> Result<(usize, usize)> {
    let tol = 1.0 / clip.sample_rate() as f64;
    if !(start >= 0.0 && end > start && end <= clip.duration() + tol) {
        return Err(Error::Bounds(format!(
            "subsegment [{start:.3}, {end:.3}] outside clip of {:.3} s",
            clip.duration()
        )));
    }
    let s = clip.seconds_to_samples(start).min(clip.len());
    let e = clip.seconds_to_samples(end).min(clip.len());
    if e <= s {
        return Err(Error::Bounds(format!("subsegment [{start:.3}, {end:.3}] is empty")));
    }
    Ok((s, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalIndexEntry {
    pub stream: usize,
    pub start: f64,
    pub end: f64,
    /// Position of the vector in the binary file, in vectors.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalIndex {
    pub dim: usize,
    pub entries: Vec<ExternalIndexEntry>,
}

/// Precomputed embeddings keyed by `(stream, start, end)` at millisecond
/// resolution. Vectors are stored as little-endian f32.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    dim: usize,
    vectors: BTreeMap<(usize, i64, i64), Vec<f64>>,
}

impl ExternalEmbedder {
    pub fn load(vectors_path: impl AsRef<Path>, index_path: impl AsRef<Path>) -> Result<Self> {
        let index: ExternalIndex = serde_json::from_str(&crate::fsutil::read_to_string(index_path.as_ref())?)?;
        let path = vectors_path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_parts(&bytes, index)
    }

    pub fn from_parts(bytes: &[u8], index: ExternalIndex) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::Shape("embedding file length is not a multiple of 4".into()));
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut vectors = BTreeMap::new();
        for e in &index.entries {
            let lo = e.offset * index.dim;
            let hi = lo + index.dim;
            if hi > floats.len() {
                return Err(Error::Bounds(format!("embedding offset {} past end of file", e.offset)));
            }
            vectors.insert(
                (e.stream, to_millis(e.start), to_millis(e.end)),
                floats[lo..hi].iter().map(|&v| v as f64).collect(),
            );
        }
        Ok(Self { dim: index.dim, vectors })
    }

    /// Serializes vectors and their index in the on-disk layout.
    pub fn to_parts(embeddings: &[Embedding]) -> Result<(Vec<u8>, ExternalIndex)> {
        let dim = embeddings.first().map_or(0, |e| e.vector.len());
        let mut bytes = Vec::with_capacity(embeddings.len() * dim * 4);
        let mut entries = Vec::with_capacity(embeddings.len());
        for (i, e) in embeddings.iter().enumerate() {
            if e.vector.len() != dim {
                return Err(Error::Shape("embeddings differ in dimension".into()));
            }
            bytes.extend(e.vector.iter().flat_map(|&v| (v as f32).to_le_bytes()));
            entries.push(ExternalIndexEntry {
                stream: e.stream,
                start: e.start,
                end: e.end,
                offset: i,
            });
        }
        Ok((bytes, ExternalIndex { dim, entries }))
    }
}

impl Embedder for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _clip: &AudioClip, stream: usize, start: f64, end: f64) -> Result<Vec<f64>> {
        self.vectors
            .get(&(stream, to_millis(start), to_millis(end)))
            .cloned()
            .ok_or_else(|| Error::Bounds(format!("no external embedding for stream {stream} [{start:.3}, {end:.3}]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_utterance, TalkerProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn voice(i: usize) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        AudioClip::mono(synthesize_utterance(&TalkerProfile::indexed(i), 6, 16_000, &mut rng), 16_000).unwrap()
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let e = LogMelEmbedder::default();
        let c = voice(0);
        let a = e.embed(&c, 0, 0.0, 1.0).unwrap();
        let b = e.embed(&c, 0, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 46);
        assert!((cos(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_invariant() {
        let e = LogMelEmbedder::default();
        let c = voice(1);
        let a = e.embed(&c, 0, 0.0, 1.5).unwrap();
        let b = e.embed(&c.scaled(2.0), 0, 0.0, 1.5).unwrap();
        assert!(cos(&a, &b) >= 0.99);
    }

    #[test]
    fn talkers_are_distinguishable() {
        let e = LogMelEmbedder::default();
        let a1 = e.embed(&voice(0), 0, 0.0, 1.0).unwrap();
        let a2 = e.embed(&voice(0), 0, 1.0, 2.0).unwrap();
        let b = e.embed(&voice(1), 0, 0.0, 1.0).unwrap();
        assert!(cos(&a1, &a2) > cos(&a1, &b));
    }

    #[test]
    fn out_of_range_is_bounds_error() {
        let e = LogMelEmbedder::default();
        let c = AudioClip::silence(1, 16_000, 16_000);
        assert!(matches!(e.embed(&c, 0, 0.5, 1.5), Err(Error::Bounds(_))));
    }

    #[test]
    fn external_vectors_pass_through() {
        let embs = vec![
            Embedding { vector: vec![0.25, -1.5, 3.0], stream: 0, start: 0.0, end: 1.5 },
            Embedding { vector: vec![1.0, 0.0, 0.5], stream: 1, start: 0.75, end: 2.25 },
        ];
        let (bytes, index) = ExternalEmbedder::to_parts(&embs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("v.bin"), &bytes).unwrap();
        std::fs::write(dir.path().join("v.json"), serde_json::to_string(&index).unwrap()).unwrap();
        let ext = ExternalEmbedder::load(dir.path().join("v.bin"), dir.path().join("v.json")).unwrap();
        let c = AudioClip::silence(1, 10, 16_000);
        assert_eq!(ext.embed(&c, 1, 0.75, 2.25).unwrap(), vec![1.0, 0.0, 0.5]);
        assert_eq!(ext.dim(), 3);
        assert!(ext.embed(&c, 0, 0.75, 2.25).is_err());
    }
}
