//! Meeting-style mixtures with controlled overlap.
//!
//! Utterances are placed one after another. Each new utterance either overlaps
//! the tail of the previous one (never the one before that, so at most two
//! talkers are active) or follows it after a silence gap. The overlap length is
//! chosen by feedback so the running ratio of overlapped time to total speech
//! time tracks the target.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pool::UtterancePool;
use super::room::{compute_rir, distance, ArrayGeometry, Point3, RoomSpec};
use crate::annotation::{SegmentAnnotation, MIXTURE};
use crate::error::{Error, Result};
use crate::metrics::overlap_ratio;
use crate::signal::{fft_convolve, AudioClip};
use crate::transcript::{SpeakerTranscript, Utterance};

/// Allowed gap between realized and target overlap ratio.
pub const OVERLAP_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SilenceMode {
    /// Gaps drawn from 0.1 to 0.5 s.
    Short,
    /// Gaps drawn from 2.9 to 3.0 s.
    Long,
}

impl SilenceMode {
    fn range(self) -> (f64, f64) {
        match self {
            SilenceMode::Short => (0.1, 0.5),
            SilenceMode::Long => (2.9, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingSpec {
    pub num_speakers: usize,
    /// Overlapped speech time over total speech time, in `[0, 0.5]`.
    pub target_overlap_ratio: f64,
    /// Seconds.
    pub session_length: f64,
    pub silence_mode: SilenceMode,
    pub seed: u64,
    pub noise_snr_db: f64,
}

impl Default for MeetingSpec {
    fn default() -> Self {
        Self {
            num_speakers: 2,
            target_overlap_ratio: 0.2,
            session_length: 60.0,
            silence_mode: SilenceMode::Short,
            seed: 0,
            noise_snr_db: 40.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub segments: Vec<SegmentAnnotation>,
    /// Speaker ids in the order of `per_source_images`.
    pub speakers: Vec<String>,
    /// Reverberant image of each speaker at every microphone.
    pub per_source_images: Vec<AudioClip>,
    pub noise: AudioClip,
    pub transcripts: SpeakerTranscript,
    pub speaker_positions: Vec<Point3>,
}

impl GroundTruth {
    pub fn speaker_index(&self, speaker: &str) -> Option<usize> {
        self.speakers.iter().position(|s| s == speaker)
    }

    /// Source images at one microphone, mono.
    pub fn references(&self, channel: usize) -> Result<Vec<AudioClip>> {
        self.per_source_images
            .iter()
            .map(|img| img.select_channel(channel))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Placement {
    speaker: usize,
    utterance: usize,
    start_ms: i64,
    end_ms: i64,
}

fn ms_to_samples(ms: i64, fs: u32) -> usize {
    (ms as i128 * fs as i128 / 1000) as usize
}

fn samples_to_ms(n: usize, fs: u32) -> i64 {
    (n as f64 * 1000.0 / fs as f64).round() as i64
}

fn place_speakers(
    room: &RoomSpec,
    mics: &ArrayGeometry,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point3>> {
    let center = mics.centroid();
    let margin = 0.5;
    let azimuth = |p: &Point3| (p[1] - center[1]).atan2(p[0] - center[0]);
    let mut placed: Vec<Point3> = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count {
        attempts += 1;
        if attempts > 20_000 {
            return Err(Error::Geometry(
                "could not place talkers inside the room".into(),
            ));
        }
        let p = [
            rng.random_range(margin..(room.dimensions[0] - margin).max(margin + 1e-3)),
            rng.random_range(margin..(room.dimensions[1] - margin).max(margin + 1e-3)),
            rng.random_range(1.2f64.min(room.dimensions[2] * 0.4)..1.8f64.min(room.dimensions[2] * 0.9)),
        ];
        if !room.contains(&p) {
            continue;
        }
        let d = distance(&p, &center);
        let strict = attempts < 10_000;
        if strict && !(0.8..=2.5).contains(&d) {
            continue;
        }
        if mics.positions().iter().any(|m| distance(m, &p) < 0.3) {
            continue;
        }
        let separated = placed.iter().all(|q| {
            let mut diff = (azimuth(q) - azimuth(&p)).abs();
            if diff > std::f64::consts::PI {
                diff = 2.0 * std::f64::consts::PI - diff;
            }
            diff > 30f64.to_radians()
        });
        if strict && !separated {
            continue;
        }
        placed.push(p);
    }
    Ok(placed)
}

fn schedule(
    spec: &MeetingSpec,
    lengths_ms: &[Vec<i64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Placement> {
    let session_ms = (spec.session_length * 1000.0).round() as i64;
    let tail_ms = 200;
    let (gap_lo, gap_hi) = spec.silence_mode.range();
    let draw_gap = |rng: &mut ChaCha8Rng| (rng.random_range(gap_lo..=gap_hi) * 1000.0).round() as i64;
    let ratio = spec.target_overlap_ratio;

    let mut queues: Vec<Vec<usize>> = lengths_ms
        .iter()
        .map(|l| {
            let mut idx: Vec<usize> = (0..l.len()).collect();
            idx.shuffle(rng);
            idx
        })
        .collect();

    let mut placed: Vec<Placement> = Vec::new();
    let mut union_ms = 0i64;
    let mut overlap_ms = 0i64;
    loop {
        let prev = placed.last().copied();
        let mut candidates: Vec<usize> = (0..queues.len())
            .filter(|&s| !queues[s].is_empty())
            .filter(|&s| queues.len() == 1 || prev.is_none_or(|p| p.speaker != s))
            .collect();
        if candidates.is_empty() {
            break;
        }
        candidates.shuffle(rng);
        let speaker = candidates[0];
        let utterance = *queues[speaker].last().expect("non-empty queue");
        let len = lengths_ms[speaker][utterance];

        let start = match prev {
            None => draw_gap(rng).min(500),
            Some(p) => {
                let before_prev_end = placed
                    .len()
                    .checked_sub(2)
                    .map_or(0, |i| placed[i].end_ms);
                let free = p.end_ms - p.start_ms.max(before_prev_end);
                let max_overlap = (len - 1).min(free).max(0);
                let wanted =
                    (ratio * (union_ms + len) as f64 - overlap_ms as f64) / (1.0 + ratio);
                let o = if ratio > 0.0 && p.speaker != speaker && wanted >= 1.0 {
                    (wanted.round() as i64).min(max_overlap)
                } else {
                    0
                };
                if o > 0 {
                    p.end_ms - o
                } else {
                    p.end_ms + draw_gap(rng)
                }
            }
        };
        let end = start + len;
        if end > session_ms - tail_ms {
            break;
        }
        queues[speaker].pop();
        let o = prev.map_or(0, |p| (p.end_ms - start).max(0));
        overlap_ms += o;
        union_ms += len - o;
        placed.push(Placement {
            speaker,
            utterance,
            start_ms: start,
            end_ms: end,
        });
    }
    placed
}

/// Simulates one meeting. Returns the multichannel mixture and its ground truth.
pub fn simulate_meeting(
    room: &RoomSpec,
    mics: &ArrayGeometry,
    spec: &MeetingSpec,
    pool: &UtterancePool,
) -> Result<(AudioClip, GroundTruth)> {
    room.validate()?;
    if spec.num_speakers == 0 {
        return Err(Error::Config("meeting needs at least one speaker".into()));
    }
    if !(0.0..=0.5).contains(&spec.target_overlap_ratio) {
        return Err(Error::Config(format!(
            "overlap target {} outside [0, 0.5]",
            spec.target_overlap_ratio
        )));
    }
    let fs = room.sample_rate;
    if pool.sample_rate().is_some_and(|r| r != fs) {
        return Err(Error::Pool(format!(
            "pool sample rate differs from room rate {fs}"
        )));
    }
    let all_speakers = pool.speakers();
    if all_speakers.len() < spec.num_speakers {
        return Err(Error::Pool(format!(
            "pool has {} speakers, meeting needs {}",
            all_speakers.len(),
            spec.num_speakers
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen = all_speakers;
    chosen.shuffle(&mut rng);
    chosen.truncate(spec.num_speakers);
    chosen.sort();

    let by_speaker: Vec<Vec<usize>> = chosen
        .iter()
        .map(|s| {
            pool.utterances
                .iter()
                .enumerate()
                .filter(|(_, u)| &u.speaker == s)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let lengths_ms: Vec<Vec<i64>> = by_speaker
        .iter()
        .map(|idx| {
            idx.iter()
                .map(|&i| samples_to_ms(pool.utterances[i].clip.len(), fs))
                .collect()
        })
        .collect();

    let positions = place_speakers(room, mics, spec.num_speakers, &mut rng)?;
    let placements = schedule(spec, &lengths_ms, &mut rng);
    if placements.is_empty() {
        return Err(Error::Pool("no utterance fits in the session".into()));
    }

    let mut segments = Vec::with_capacity(placements.len());
    let mut transcripts = SpeakerTranscript::new();
    for p in &placements {
        let utt = &pool.utterances[by_speaker[p.speaker][p.utterance]];
        let start = p.start_ms as f64 / 1000.0;
        let end = p.end_ms as f64 / 1000.0;
        segments.push(SegmentAnnotation::new(MIXTURE, &chosen[p.speaker], start, end)?);
        transcripts.push(
            chosen[p.speaker].clone(),
            Utterance {
                start,
                end,
                words: utt.words.clone(),
            },
        );
    }
    let achieved = overlap_ratio(&segments)?;
    if (achieved - spec.target_overlap_ratio).abs() > OVERLAP_TOLERANCE {
        return Err(Error::Scheduling {
            target: spec.target_overlap_ratio,
            achieved,
        });
    }
    let session_ms = (spec.session_length * 1000.0).round() as i64;
    let covered_ms = placements.iter().map(|p| p.end_ms).max().unwrap_or(0);
    if covered_ms < session_ms / 2 {
        return Err(Error::Pool(format!(
            "pool covers only {:.1} s of a {:.1} s session",
            covered_ms as f64 / 1000.0,
            spec.session_length
        )));
    }

    let rirs: Vec<Vec<Vec<f64>>> = positions
        .par_iter()
        .map(|p| compute_rir(room, p, mics))
        .collect::<Result<_>>()?;

    let total = ms_to_samples(session_ms, fs);
    let channels = mics.len();
    let rendered: Vec<Vec<Vec<f64>>> = placements
        .par_iter()
        .map(|p| {
            let dry = pool.utterances[by_speaker[p.speaker][p.utterance]]
                .clip
                .channel(0)
                .to_vec();
            rirs[p.speaker]
                .iter()
                .map(|h| fft_convolve(&dry, h))
                .collect()
        })
        .collect();

    let mut images: Vec<AudioClip> = (0..spec.num_speakers)
        .map(|_| AudioClip::silence(channels, total, fs))
        .collect();
    for (p, wet) in placements.iter().zip(&rendered) {
        let offset = ms_to_samples(p.start_ms, fs);
        let img = images[p.speaker].samples_mut();
        for (c, sig) in wet.iter().enumerate() {
            for (n, &v) in sig.iter().enumerate() {
                let idx = offset + n;
                if idx >= total {
                    break;
                }
                img[[c, idx]] += v;
            }
        }
    }

    let mut mixture = AudioClip::silence(channels, total, fs);
    for img in &images {
        mixture.add_assign(img)?;
    }
    let speech_power = mixture.power();
    let sigma = (speech_power / 10f64.powf(spec.noise_snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut noise = AudioClip::silence(channels, total, fs);
    noise
        .samples_mut()
        .iter_mut()
        .for_each(|x| *x = normal.sample(&mut rng));
    mixture.add_assign(&noise)?;

    let truth = GroundTruth {
        segments,
        speakers: chosen,
        per_source_images: images,
        noise,
        transcripts,
        speaker_positions: positions,
    };
    Ok((mixture, truth))
}

/// Counts per speaker of scheduled utterances; handy for reports.
pub fn utterances_per_speaker(truth: &GroundTruth) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in &truth.segments {
        *out.entry(s.speaker.clone()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pool::synthetic_pool;

    fn setup(target: f64, mode: SilenceMode, seed: u64) -> Result<(AudioClip, GroundTruth)> {
        let room = RoomSpec::default();
        let mics = ArrayGeometry::default_circular([3.0, 2.5, 1.0]);
        let pool = synthetic_pool(3, 30, 16_000, 5);
        let spec = MeetingSpec {
            num_speakers: 2,
            target_overlap_ratio: target,
            session_length: 30.0,
            silence_mode: mode,
            seed,
            noise_snr_db: 40.0,
        };
        simulate_meeting(&room, &mics, &spec, &pool)
    }

    fn max_concurrency(segments: &[SegmentAnnotation]) -> i32 {
        let mut ev: Vec<(i64, i32)> = segments
            .iter()
            .flat_map(|s| [(s.start_ms(), 1), (s.end_ms(), -1)])
            .collect();
        ev.sort();
        let mut cur = 0;
        let mut best = 0;
        for (_, d) in ev {
            cur += d;
            best = best.max(cur);
        }
        best
    }

    #[test]
    fn zero_overlap_is_sequential() {
        for mode in [SilenceMode::Short, SilenceMode::Long] {
            let (_, gt) = setup(0.0, mode, 3).unwrap();
            assert_eq!(overlap_ratio(&gt.segments).unwrap(), 0.0);
            let mut segs = gt.segments.clone();
            segs.sort_by_key(|s| s.start_ms());
            let (lo, hi) = mode.range();
            for w in segs.windows(2) {
                let gap = w[1].start - w[0].end;
                assert!(gap >= lo - 1e-9 && gap <= hi + 1e-9, "gap {gap}");
            }
        }
    }

    #[test]
    fn overlap_target_is_met() {
        let (_, gt) = setup(0.2, SilenceMode::Short, 11).unwrap();
        let r = overlap_ratio(&gt.segments).unwrap();
        assert!((0.18..=0.22).contains(&r), "ratio {r}");
        assert!(max_concurrency(&gt.segments) <= 2);
    }

    #[test]
    fn mixture_is_sum_of_images_and_noise() {
        let (mix, gt) = setup(0.3, SilenceMode::Short, 2).unwrap();
        let mut sum = gt.noise.clone();
        for img in &gt.per_source_images {
            sum.add_assign(img).unwrap();
        }
        let err: f64 = (mix.samples() - sum.samples()).iter().map(|x| x * x).sum();
        assert!(err.sqrt() / mix.energy().sqrt() < 1e-6);
        for s in &gt.segments {
            assert!(gt.transcripts.utterances(&s.speaker).len() > 0);
        }
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let (a, ga) = setup(0.1, SilenceMode::Short, 42).unwrap();
        let (b, gb) = setup(0.1, SilenceMode::Short, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga.segments, gb.segments);
        assert_eq!(ga.transcripts, gb.transcripts);
    }

    #[test]
    fn too_small_pool_is_rejected() {
        let room = RoomSpec::default();
        let mics = ArrayGeometry::default_circular([3.0, 2.5, 1.0]);
        let pool = synthetic_pool(1, 2, 16_000, 5);
        let spec = MeetingSpec::default();
        assert!(matches!(
            simulate_meeting(&room, &mics, &spec, &pool),
            Err(Error::Pool(_))
        ));
    }
}
