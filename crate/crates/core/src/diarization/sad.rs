//! Energy-based speech activity detection with Viterbi smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioClip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SadConfig {
    /// Seconds.
    pub frame_len: f64,
    /// Seconds.
    pub frame_hop: f64,
    /// Cost of switching state between frames, in score units.
    pub transition_penalty: f64,
    /// Segments shorter than this are dropped (seconds).
    pub min_speech: f64,
    /// Gaps shorter than this are bridged (seconds).
    pub min_gap: f64,
    /// Threshold never sits more than this far below the loud percentile (dB).
    pub dynamic_range_db: f64,
    /// Weight of the spectral-flatness penalty.
    pub flatness_weight: f64,
}

impl Default for SadConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.025,
            frame_hop: 0.010,
            transition_penalty: 4.0,
            min_speech: 0.1,
            min_gap: 0.1,
            dynamic_range_db: 15.0,
            flatness_weight: 0.5,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

const FLATNESS_BINS: usize = 16;

/// Cosine and sine tables for a coarse `FLATNESS_BINS`-point spectrum.
fn flatness_tables(win: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..FLATNESS_BINS)
        .map(|k| {
            let w = std::f64::consts::PI * (k as f64 + 0.5) / FLATNESS_BINS as f64;
            ((0..win).map(|i| (w * i as f64).cos()).collect(), (0..win).map(|i| (w * i as f64).sin()).collect())
        })
        .collect()
}

/// Geometric over arithmetic mean of a coarse power spectrum.
fn flatness(frame: &[f64], tables: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let power: Vec<f64> = tables
        .iter()
        .map(|(c, s)| {
            let re: f64 = frame.iter().zip(c).map(|(x, c)| x * c).sum();
            let im: f64 = frame.iter().zip(s).map(|(x, s)| x * s).sum();
            re * re + im * im + 1e-20
        })
        .collect();
    let n = power.len() as f64;
    let geo = (power.iter().map(|p| p.ln()).sum::<f64>() / n).exp();
    let arith = power.iter().sum::<f64>() / n;
    (geo / arith).clamp(0.0, 1.0)
}

fn viterbi(scores: &[f64], penalty: f64) -> Vec<bool> {
    // state 0 = non-speech, 1 = speech; emission is +-score/2
    let n = scores.len();
    let mut acc = [0.0f64, f64::NEG_INFINITY];
    acc[1] = scores.first().map_or(0.0, |s| s / 2.0);
    acc[0] = -scores.first().map_or(0.0, |s| s / 2.0);
    let mut back = vec![[0u8; 2]; n];
    for t in 1..n {
        let e = [-scores[t] / 2.0, scores[t] / 2.0];
        let mut next = [0.0; 2];
        for s in 0..2 {
            let stay = acc[s];
            let switch = acc[1 - s] - penalty;
            if stay >= switch {
                next[s] = stay + e[s];
                back[t][s] = s as u8;
            } else {
                next[s] = switch + e[s];
                back[t][s] = (1 - s) as u8;
            }
        }
        acc = next;
    }
    let mut path = vec![false; n];
    let mut s = if acc[1] > acc[0] { 1 } else { 0 };
    for t in (0..n).rev() {
        path[t] = s == 1;
        s = back[t][s] as usize;
    }
    path
}

/// Speech regions `(start, end)` in seconds of a mono clip.
pub fn detect_speech(clip: &AudioClip, cfg: &SadConfig) -> Result<Vec<(f64, f64)>> {
    if clip.channels() != 1 {
        return Err(Error::Shape(format!("speech detection needs mono audio, got {} channels", clip.channels())));
    }
    let fs = clip.sample_rate() as f64;
    let win = ((cfg.frame_len * fs).round() as usize).max(1);
    let hop = ((cfg.frame_hop * fs).round() as usize).max(1);
    let x = clip.channel(0);
    let x = x.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| x.to_vec());
    if x.len() < win || x.iter().all(|v| *v == 0.0) {
        return Ok(Vec::new());
    }
    let frames = (x.len() - win) / hop + 1;
    let mut log_e = Vec::with_capacity(frames);
    let mut flat = Vec::with_capacity(frames);
    let tables = flatness_tables(win);
    for t in 0..frames {
        let f = &x[t * hop..t * hop + win];
        let e = f.iter().map(|v| v * v).sum::<f64>() / win as f64;
        log_e.push(10.0 * (e + 1e-12).log10());
        flat.push(flatness(f, &tables));
    }
    let mut sorted = log_e.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = percentile(&sorted, 0.05);
    let loud = percentile(&sorted, 0.95);
    let threshold = (floor + 0.5 * (loud - floor)).min(loud - cfg.dynamic_range_db).max(floor + 3.0);
    let scores: Vec<f64> = log_e
        .iter()
        .zip(&flat)
        .map(|(e, f)| (e - threshold) / 3.0 - cfg.flatness_weight * f)
        .collect();
    let path = viterbi(&scores, cfg.transition_penalty);

    let duration = x.len() as f64 / fs;
    let half = hop as f64 / fs / 2.0;
    let centre = |t: usize| (t * hop) as f64 / fs + win as f64 / fs / 2.0;
    let mut segs: Vec<(f64, f64)> = Vec::new();
    let mut t = 0;
    while t < frames {
        if path[t] {
            let s = t;
            while t < frames && path[t] {
                t += 1;
            }
            let start = if s == 0 { 0.0 } else { (centre(s) - half).max(0.0) };
            let end = if t == frames { duration } else { (centre(t - 1) + half).min(duration) };
            segs.push((start, end));
        } else {
            t += 1;
        }
    }
    let mut bridged: Vec<(f64, f64)> = Vec::with_capacity(segs.len());
    for (s, e) in segs {
        match bridged.last_mut() {
            Some(last) if s - last.1 < cfg.min_gap => last.1 = e,
            _ => bridged.push((s, e)),
        }
    }
    bridged.retain(|(s, e)| e - s >= cfg.min_speech);
    // millisecond grid, like every other annotation, but never past the clip
    Ok(bridged
        .into_iter()
        .map(|(s, e)| ((s * 1000.0).round() / 1000.0, ((e * 1000.0).round() / 1000.0).min(duration)))
        .filter(|(s, e)| e > s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn with_bursts(bursts: &[(f64, f64)], total: f64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = Normal::new(0.0, 1.0).unwrap();
        let floor = Normal::new(0.0, 1e-4).unwrap();
        let len = (total * 16_000.0) as usize;
        let x = (0..len)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                if bursts.iter().any(|(s, e)| t >= *s && t < *e) {
                    n.sample(&mut rng)
                } else {
                    floor.sample(&mut rng)
                }
            })
            .collect();
        AudioClip::mono(x, 16_000).unwrap()
    }

    #[test]
    fn silence_gives_nothing() {
        let clip = AudioClip::silence(1, 16_000, 16_000);
        assert!(detect_speech(&clip, &SadConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn speech_to_the_end_stays_inside_the_clip() {
        let total = 10.1488125;
        let clip = with_bursts(&[(1.0, 11.0)], total);
        let segs = detect_speech(&clip, &SadConfig::default()).unwrap();
        assert!(segs.last().unwrap().1 <= clip.duration(), "{segs:?}");
    }

    #[test]
    fn noise_burst_is_found() {
        let segs = detect_speech(&with_bursts(&[(1.0, 2.0)], 3.0), &SadConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        let (s, e) = segs[0];
        assert!((0.95..=1.05).contains(&s) && (1.95..=2.05).contains(&e), "{s} {e}");
    }

    #[test]
    fn short_gap_is_bridged() {
        let clip = with_bursts(&[(1.0, 1.5), (1.55, 2.0)], 3.0);
        let segs = detect_speech(&clip, &SadConfig::default()).unwrap();
        assert_eq!(segs.len(), 1, "{segs:?}");
    }

    #[test]
    fn long_gap_splits() {
        let clip = with_bursts(&[(0.5, 1.0), (1.6, 2.0)], 3.0);
        let segs = detect_speech(&clip, &SadConfig::default()).unwrap();
        assert_eq!(segs.len(), 2, "{segs:?}");
    }

    #[test]
    fn multichannel_rejected() {
        let clip = AudioClip::silence(2, 100, 16_000);
        assert!(detect_speech(&clip, &SadConfig::default()).is_err());
    }
}
