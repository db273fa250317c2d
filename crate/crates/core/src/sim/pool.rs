//! Utterance pools: loaded from a directory of WAV files with sidecar
//! transcripts, or synthesized from parametric talkers for tests and demos.
//!
//! Directory pools follow LibriSpeech-style naming: `<speaker>-<rest>.wav` with
//! the transcript in `<speaker>-<rest>.txt`; the speaker id is the file-name
//! prefix up to the first `-`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{wav::read_wav, AudioClip};
use crate::transcript::normalize_words;

#[derive(Debug, Clone)]
pub struct PoolUtterance {
    pub speaker: String,
    pub clip: AudioClip,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct UtterancePool {
    pub utterances: Vec<PoolUtterance>,
}

impl UtterancePool {
    pub fn speakers(&self) -> Vec<String> {
        self.utterances
            .iter()
            .map(|u| u.speaker.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn sample_rate(&self) -> Option<u32> {
        self.utterances.first().map(|u| u.clip.sample_rate())
    }

    pub fn total_duration(&self) -> f64 {
        self.utterances.iter().map(|u| u.clip.duration()).sum()
    }

    /// Distinct words across the pool, sorted.
    pub fn vocabulary(&self) -> Vec<String> {
        self.utterances
            .iter()
            .flat_map(|u| u.words.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "wav"))
            .collect();
        entries.sort();
        let mut utterances = Vec::with_capacity(entries.len());
        for wav in entries {
            let stem = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let speaker = stem.split('-').next().unwrap_or(&stem).to_string();
            let txt = wav.with_extension("txt");
            let text = crate::fsutil::read_to_string(&txt)?;
            let clip = read_wav(&wav)?;
            let clip = if clip.channels() > 1 {
                clip.select_channel(0)?
            } else {
                clip
            };
            utterances.push(PoolUtterance {
                speaker,
                clip,
                words: normalize_words(&text),
            });
        }
        if utterances.is_empty() {
            return Err(Error::Pool(format!("no WAV files in {}", dir.display())));
        }
        let rate = utterances[0].clip.sample_rate();
        if utterances.iter().any(|u| u.clip.sample_rate() != rate) {
            return Err(Error::Pool("pool mixes sample rates".into()));
        }
        Ok(Self { utterances })
    }
}

/// Spectral identity of a synthetic talker.
#[derive(Debug, Clone, PartialEq)]
pub struct TalkerProfile {
    pub f0: f64,
    pub formants: [f64; 3],
    pub bandwidth: f64,
    pub tilt_db_per_khz: f64,
}

impl TalkerProfile {
    /// Deterministic, well-separated talkers indexed from 0.
    pub fn indexed(index: usize) -> Self {
        const F0: [f64; 8] = [105.0, 210.0, 140.0, 250.0, 120.0, 180.0, 95.0, 230.0];
        const FORMANTS: [[f64; 3]; 8] = [
            [500.0, 1500.0, 2500.0],
            [850.0, 2200.0, 3300.0],
            [350.0, 1000.0, 2900.0],
            [700.0, 1800.0, 3600.0],
            [600.0, 1200.0, 2200.0],
            [420.0, 2500.0, 3100.0],
            [750.0, 1100.0, 2600.0],
            [300.0, 1900.0, 3400.0],
        ];
        let i = index % F0.len();
        let cycle = (index / F0.len()) as f64;
        Self {
            f0: F0[i] * (1.0 + 0.07 * cycle),
            formants: FORMANTS[i].map(|f| f * (1.0 + 0.05 * cycle)),
            bandwidth: 180.0 + 20.0 * (i % 3) as f64,
            tilt_db_per_khz: -3.0 - (i % 4) as f64,
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ren", "to", "sa", "vel", "di", "nor", "pa", "gu", "shi", "be", "an", "ol",
    "ju",
];

fn vocabulary_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

/// Voiced harmonic signal shaped by the talker's formants, with a word-rate
/// amplitude envelope that dips between words but never reaches silence.
pub fn synthesize_utterance(
    profile: &TalkerProfile,
    num_words: usize,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let fs = sample_rate as f64;
    let word_lens: Vec<usize> = (0..num_words)
        .map(|_| (rng.random_range(0.25..0.5) * fs) as usize)
        .collect();
    let total: usize = word_lens.iter().sum();
    let mut envelope = Vec::with_capacity(total);
    for &len in &word_lens {
        let peak = rng.random_range(0.7..1.0);
        for n in 0..len {
            let phase = n as f64 / len as f64;
            envelope.push(peak * (0.35 + 0.65 * (PI * phase).sin()));
        }
    }
    // 20 ms fades at the edges
    let fade = (0.02 * fs) as usize;
    for n in 0..fade.min(total / 2) {
        let g = n as f64 / fade as f64;
        envelope[n] *= g;
        envelope[total - 1 - n] *= g;
    }

    let nyquist = 0.45 * fs;
    let num_harmonics = (nyquist.min(5000.0) / profile.f0).floor() as usize;
    let word_shift: Vec<f64> = (0..num_words).map(|_| rng.random_range(0.93..1.07)).collect();
    let vibrato_rate = rng.random_range(3.0..6.0);

    let amplitudes = |shift: f64| -> Vec<f64> {
        (1..=num_harmonics)
            .map(|h| {
                let f = h as f64 * profile.f0;
                let env: f64 = profile
                    .formants
                    .iter()
                    .enumerate()
                    .map(|(k, &fc)| {
                        let fc = fc * shift;
                        let w = 1.0 / (1.0 + k as f64);
                        w * (-((f - fc) / profile.bandwidth).powi(2)).exp()
                    })
                    .sum::<f64>()
                    + 0.02;
                env * 10f64.powf(profile.tilt_db_per_khz * f / 1000.0 / 20.0)
            })
            .collect()
    };

    let mut out = Vec::with_capacity(total);
    let mut word = 0;
    let mut word_end = word_lens.first().copied().unwrap_or(0);
    let mut amps = amplitudes(word_shift.first().copied().unwrap_or(1.0));
    let mut theta = 0.0f64;
    for n in 0..total {
        if n >= word_end && word + 1 < num_words {
            word += 1;
            word_end += word_lens[word];
            amps = amplitudes(word_shift[word]);
        }
        let t = n as f64 / fs;
        let f0 = profile.f0 * (1.0 + 0.03 * (2.0 * PI * vibrato_rate * t).sin());
        theta = (theta + 2.0 * PI * f0 / fs) % (2.0 * PI);
        // sin(h*theta) by the Chebyshev recurrence
        let (s1, c1) = theta.sin_cos();
        let (mut prev, mut cur) = (0.0, s1);
        let mut v = 0.0;
        for &a in &amps {
            v += a * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        out.push(v * envelope[n]);
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    out
}

/// Builds a pool of `utterances_per_speaker` synthetic utterances for each of
/// `num_speakers` talkers, each utterance 3 to 12 words long.
pub fn synthetic_pool(
    num_speakers: usize,
    utterances_per_speaker: usize,
    sample_rate: u32,
    seed: u64,
) -> UtterancePool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..300).map(|_| vocabulary_word(&mut rng)).collect();
    let mut utterances = Vec::with_capacity(num_speakers * utterances_per_speaker);
    for s in 0..num_speakers {
        let profile = TalkerProfile::indexed(s);
        let speaker = format!("{}", 100 + s);
        for _ in 0..utterances_per_speaker {
            let n = rng.random_range(3..=12);
            let words: Vec<String> = (0..n)
                .map(|_| vocab.choose(&mut rng).expect("non-empty").clone())
                .collect();
            let samples = synthesize_utterance(&profile, n, sample_rate, &mut rng);
            utterances.push(PoolUtterance {
                speaker: speaker.clone(),
                clip: AudioClip::mono(samples, sample_rate).expect("finite synthesis"),
                words,
            });
        }
    }
    UtterancePool { utterances }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::wav::{write_wav, WavFormat};

    #[test]
    fn synthetic_pool_is_deterministic() {
        let a = synthetic_pool(2, 3, 16_000, 9);
        let b = synthetic_pool(2, 3, 16_000, 9);
        assert_eq!(a.utterances.len(), 6);
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(x.clip, y.clip);
            assert_eq!(x.words, y.words);
        }
        assert_eq!(a.speakers(), vec!["100", "101"]);
    }

    #[test]
    fn utterances_have_no_internal_silence() {
        let pool = synthetic_pool(1, 2, 16_000, 1);
        for u in &pool.utterances {
            let x = u.clip.channel(0);
            let frame = 400;
            let n = x.len() / frame;
            // skip the fades at both ends
            for k in 1..n - 1 {
                let e: f64 = x.iter().skip(k * frame).take(frame).map(|v| v * v).sum();
                assert!(e / frame as f64 > 1e-4, "frame {k} too quiet");
            }
        }
    }

    #[test]
    fn loads_librispeech_style_directory() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::mono(vec![0.1; 1600], 16_000).unwrap();
        write_wav(dir.path().join("1089-134686-0000.wav"), &clip, WavFormat::Pcm16).unwrap();
        std::fs::write(dir.path().join("1089-134686-0000.txt"), "HE HOPED, THERE").unwrap();
        let pool = UtterancePool::load_dir(dir.path()).unwrap();
        assert_eq!(pool.speakers(), vec!["1089"]);
        assert_eq!(pool.utterances[0].words, vec!["he", "hoped", "there"]);
    }
}
