use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beamform::{mvdr_beamform, select_reference_channel, spatial_covariance, SpatialCovariance};
use super::chunk::plan_chunks;
use super::estimator::{estimate_masks, ChunkContext, ChunkMasks, MaskEstimator};
use super::stitch::{stitch_masks, stitch_signals};
use crate::error::{Error, Result};
use crate::signal::{istft, stft, AudioClip, Spectrogram, TfMask, DEFAULT_FRAME_LEN, DEFAULT_HOP};

/// What the MVDR beamformer for one stream treats as interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interference {
    /// Only the meeting-wide noise mask.
    Noise,
    /// Noise plus the masks of every other stream.
    NoiseAndOtherStreams,
}

/// How chunk outputs become meeting-wide streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StitchMode {
    /// Stitch masks, then beamform once with meeting-wide covariances.
    Masks,
    /// Beamform every chunk with its own covariances, then stitch waveforms.
    Signals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationConfig {
    /// Seconds.
    pub chunk_len: f64,
    /// Seconds.
    pub chunk_hop: f64,
    pub num_streams: usize,
    pub frame_len: usize,
    pub stft_hop: usize,
    pub ref_channel: usize,
    /// Pick the reference channel per stream by posterior SNR instead.
    pub auto_ref_channel: bool,
    pub interference: Interference,
    pub stitch: StitchMode,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            chunk_len: 2.4,
            chunk_hop: 0.8,
            num_streams: 2,
            frame_len: DEFAULT_FRAME_LEN,
            stft_hop: DEFAULT_HOP,
            ref_channel: 0,
            auto_ref_channel: false,
            interference: Interference::NoiseAndOtherStreams,
            stitch: StitchMode::Masks,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.num_streams) {
            return Err(Error::Config(format!("num_streams must be 2 or 3, got {}", self.num_streams)));
        }
        if !(self.chunk_hop > 0.0 && self.chunk_hop <= self.chunk_len) {
            return Err(Error::Config("chunk hop must lie in (0, chunk_len]".into()));
        }
        crate::signal::StftConfig {
            frame_len: self.frame_len,
            hop: self.stft_hop,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedStreams {
    /// Mono, full recording length.
    pub streams: Vec<AudioClip>,
    /// Meeting-wide stitched speech masks, one per stream.
    pub stream_masks: Vec<TfMask>,
    pub noise_mask: TfMask,
    /// `permutations[c][k]`: chunk-local output placed on stream `k`.
    pub permutations: Vec<Vec<usize>>,
    /// Reference channel used for each stream.
    pub ref_channels: Vec<usize>,
}

fn interference_mask(masks: &[TfMask], noise: &TfMask, k: usize, mode: Interference) -> TfMask {
    match mode {
        Interference::Noise => noise.clone(),
        Interference::NoiseAndOtherStreams => {
            let mut v = noise.values().clone();
            for (j, m) in masks.iter().enumerate() {
                if j != k {
                    v += m.values();
                }
            }
            TfMask::clamped(v)
        }
    }
}

/// Beamforms every stream of `spec` given its masks.
fn beamform_streams(
    spec: &Spectrogram,
    speech: &[TfMask],
    noise: &TfMask,
    cfg: &SeparationConfig,
    out_len: usize,
) -> Result<(Vec<AudioClip>, Vec<usize>)> {
    let noise_only: Option<SpatialCovariance> = match cfg.interference {
        Interference::Noise => Some(spatial_covariance(spec, noise)?),
        Interference::NoiseAndOtherStreams => None,
    };
    let mut streams = Vec::with_capacity(speech.len());
    let mut refs = Vec::with_capacity(speech.len());
    for (k, mask) in speech.iter().enumerate() {
        let phi_s = spatial_covariance(spec, mask)?;
        let phi_i = match &noise_only {
            Some(phi) => phi.clone(),
            None => spatial_covariance(spec, &interference_mask(speech, noise, k, cfg.interference))?,
        };
        let r = if cfg.auto_ref_channel {
            select_reference_channel(&phi_s, &phi_i)?
        } else {
            cfg.ref_channel
        };
        let mut out = mvdr_beamform(&phi_s, &phi_i, spec, r)?;
        // a stream with no mask support at a frequency carries nothing there;
        // the covariance fallback would otherwise pass the mixture through
        for (f, col) in mask.values().columns().into_iter().enumerate() {
            if col.sum() <= 0.0 {
                out.bins_mut().slice_mut(ndarray::s![.., .., f]).fill(num_complex::Complex64::new(0.0, 0.0));
            }
        }
        streams.push(istft(&out, out_len)?);
        refs.push(r);
    }
    Ok((streams, refs))
}

/// Chunking, mask estimation, stitching and MVDR beamforming over a whole
/// multichannel recording.
pub fn separate(
    recording: &AudioClip,
    estimator: &dyn MaskEstimator,
    cfg: &SeparationConfig,
) -> Result<SeparatedStreams> {
    cfg.validate()?;
    if estimator.num_streams() != cfg.num_streams {
        return Err(Error::Config(format!(
            "estimator produces {} streams, configuration asks for {}",
            estimator.num_streams(),
            cfg.num_streams
        )));
    }
    if cfg.ref_channel >= recording.channels() {
        return Err(Error::Config(format!(
            "reference channel {} but recording has {} channels",
            cfg.ref_channel,
            recording.channels()
        )));
    }
    let fs = recording.sample_rate();
    let spec = stft(recording, cfg.frame_len, cfg.stft_hop).map_err(|e| e.in_stage("stft"))?;
    let plan = plan_chunks(recording.duration(), cfg.chunk_len, cfg.chunk_hop)?;
    let frame_bounds = plan.frame_bounds(fs, cfg.stft_hop, spec.frames());

    let chunks: Vec<ChunkMasks> = frame_bounds
        .par_iter()
        .enumerate()
        .map(|(index, &(s, e))| {
            let ctx = ChunkContext {
                index,
                frame_start: s,
                frame_end: e,
            };
            estimate_masks(&spec.frame_range(s, e), estimator, &ctx)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("mask estimation"))?;

    let stitched = stitch_masks(&chunks, &frame_bounds, spec.frames()).map_err(|e| e.in_stage("stitching"))?;

    match cfg.stitch {
        StitchMode::Masks => {
            let (streams, ref_channels) =
                beamform_streams(&spec, &stitched.speech, &stitched.noise, cfg, recording.len())
                    .map_err(|e| e.in_stage("beamforming"))?;
            Ok(SeparatedStreams {
                streams,
                stream_masks: stitched.speech,
                noise_mask: stitched.noise,
                permutations: stitched.permutations,
                ref_channels,
            })
        }
        StitchMode::Signals => {
            let total = recording.len();
            let last = frame_bounds.len() - 1;
            let sample_bounds: Vec<(usize, usize)> = frame_bounds
                .iter()
                .enumerate()
                .map(|(c, &(s, e))| {
                    let end = if c == last { total } else { (e * cfg.stft_hop).min(total) };
                    ((s * cfg.stft_hop).min(end), end)
                })
                .collect();
            let per_chunk: Vec<(Vec<AudioClip>, Vec<usize>)> = chunks
                .par_iter()
                .zip(&frame_bounds)
                .zip(&sample_bounds)
                .map(|((ch, &(fs_, fe)), &(ss, se))| {
                    beamform_streams(&spec.frame_range(fs_, fe), ch.speech(), ch.noise(), cfg, se - ss)
                })
                .collect::<Result<_>>()
                .map_err(|e| e.in_stage("beamforming"))?;
            let ref_channels = per_chunk[0].1.clone();
            let signals: Vec<Vec<AudioClip>> = per_chunk.into_iter().map(|(s, _)| s).collect();
            let glued = stitch_signals(&signals, &sample_bounds, total).map_err(|e| e.in_stage("stitching"))?;
            Ok(SeparatedStreams {
                streams: glued.streams,
                stream_masks: stitched.speech,
                noise_mask: stitched.noise,
                permutations: glued.permutations,
                ref_channels,
            })
        }
    }
}

/// Writes the chunk index to permutation table as JSON.
pub fn write_permutation_log(path: impl AsRef<Path>, permutations: &[Vec<usize>]) -> Result<()> {
    let table: BTreeMap<usize, &Vec<usize>> = permutations.iter().enumerate().collect();
    let text = serde_json::to_string_pretty(&table)?;
    crate::fsutil::write_atomic(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separation::{ConstantEstimator, OracleEstimator};
    use crate::sim::{oracle_masks, simulate_meeting, synthetic_pool, ArrayGeometry, MeetingSpec, RoomSpec};
    use crate::metrics::si_sdr_clips;

    fn meeting(num_speakers: usize, overlap: f64, seed: u64) -> (AudioClip, crate::sim::GroundTruth) {
        let room = RoomSpec::default();
        let mics = ArrayGeometry::default_circular([3.0, 2.5, 1.0]);
        let pool = synthetic_pool(num_speakers.max(2), 12, 16_000, 1);
        let spec = MeetingSpec {
            num_speakers,
            target_overlap_ratio: overlap,
            session_length: 12.0,
            seed,
            ..MeetingSpec::default()
        };
        simulate_meeting(&room, &mics, &spec, &pool).unwrap()
    }

    fn oracle(mix: &AudioClip, gt: &crate::sim::GroundTruth, streams: usize) -> OracleEstimator {
        let spec = stft(mix, 512, 256).unwrap();
        let (speech, noise) = oracle_masks(gt, &spec, 0).unwrap();
        OracleEstimator::new(speech, noise, streams).unwrap()
    }

    #[test]
    fn single_speaker_stream_is_clean() {
        let (mix, gt) = meeting(1, 0.0, 4);
        let est = oracle(&mix, &gt, 2);
        let out = separate(&mix, &est, &SeparationConfig::default()).unwrap();
        let reference = gt.per_source_images[0].select_channel(0).unwrap();
        let sdr = si_sdr_clips(&out.streams[0], &reference).unwrap();
        assert!(sdr >= 10.0, "{sdr}");
    }

    #[test]
    fn three_streams_on_two_speakers() {
        let (mix, gt) = meeting(2, 0.2, 5);
        let est = oracle(&mix, &gt, 3);
        let cfg = SeparationConfig {
            num_streams: 3,
            ..SeparationConfig::default()
        };
        let out = separate(&mix, &est, &cfg).unwrap();
        assert_eq!(out.streams.len(), 3);
        let mix0 = mix.select_channel(0).unwrap();
        assert!(out.streams[2].energy() < 0.01 * mix0.energy());
    }

    #[test]
    fn deterministic_and_constant_estimator_accepted() {
        let (mix, _) = meeting(2, 0.1, 6);
        let est = ConstantEstimator { num_streams: 2, value: 0.5 };
        let a = separate(&mix, &est, &SeparationConfig::default()).unwrap();
        let b = separate(&mix, &est, &SeparationConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.streams.iter().all(|s| s.len() == mix.len()));
    }

    #[test]
    fn signal_stitching_variant_runs() {
        let (mix, gt) = meeting(2, 0.2, 7);
        let est = oracle(&mix, &gt, 2).with_scramble(1);
        let cfg = SeparationConfig {
            chunk_len: 8.0,
            chunk_hop: 4.0,
            stitch: StitchMode::Signals,
            ..SeparationConfig::default()
        };
        let out = separate(&mix, &est, &cfg).unwrap();
        assert_eq!(out.permutations.len(), 2);
        assert_eq!(out.streams[0].len(), mix.len());
    }

    #[test]
    fn stream_count_mismatch_is_config_error() {
        let (mix, _) = meeting(2, 0.1, 6);
        let est = ConstantEstimator { num_streams: 3, value: 0.5 };
        assert!(matches!(separate(&mix, &est, &SeparationConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn permutation_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("perm.json");
        write_permutation_log(&p, &[vec![0, 1], vec![1, 0]]).unwrap();
        let v: BTreeMap<String, Vec<usize>> = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["1"], vec![1, 0]);
    }
}
