//! Session orchestration: separation, diarization, ASR and scoring, each
//! stage reading the previous stage's artifacts back from disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::asr::simulate_asr;
use super::config::{stage_seed, DiarizationSource, EstimatorKind, PipelineConfig};
use super::manifest::{Manifest, SessionManifest};
use super::report::{score_session, PipelineReport, SessionOutcome, SessionReport, SessionScores, StageTiming};
use crate::annotation::{read_rttm, write_rttm, SegmentAnnotation};
use crate::diarization::{diarize, filter_enclosed, DiarizationResult};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, write_atomic};
use crate::metrics::meeting_sdr;
use crate::separation::{oracle_track_map, separate, write_permutation_log, OracleEstimator, SeparatedStreams};
use crate::signal::wav::{read_wav, write_wav};
use crate::signal::{stft, AudioClip, TfMask};
use crate::sim::oracle_masks;
use crate::transcript::{read_transcript_json, write_transcript_json, SpeakerTranscript};

#[derive(Serialize)]
struct MaskIndex<'a> {
    frames: usize,
    freq_bins: usize,
    /// Little-endian f32, frame-major.
    files: Vec<String>,
    permutations: &'a [Vec<usize>],
    ref_channels: &'a [usize],
}

fn mask_bytes(mask: &TfMask) -> Vec<u8> {
    mask.values().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn write_separation(root: &Path, sep: &SeparatedStreams, cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let streams_dir = root.join("streams");
    let masks_dir = root.join("masks");
    create_dir_all(&streams_dir)?;
    create_dir_all(&masks_dir)?;
    let mut paths = Vec::with_capacity(sep.streams.len());
    let mut files = Vec::new();
    for (k, (clip, mask)) in sep.streams.iter().zip(&sep.stream_masks).enumerate() {
        let p = streams_dir.join(format!("stream{k}.wav"));
        write_wav(&p, clip, cfg.output.wav_format)?;
        paths.push(p);
        let name = format!("stream{k}.f32");
        write_atomic(masks_dir.join(&name), mask_bytes(mask))?;
        files.push(name);
    }
    write_atomic(masks_dir.join("noise.f32"), mask_bytes(&sep.noise_mask))?;
    files.push("noise.f32".into());
    let index = MaskIndex {
        frames: sep.noise_mask.frames(),
        freq_bins: sep.noise_mask.freq_bins(),
        files,
        permutations: &sep.permutations,
        ref_channels: &sep.ref_channels,
    };
    write_atomic(masks_dir.join("index.json"), serde_json::to_string_pretty(&index)? + "\n")?;
    write_permutation_log(masks_dir.join("permutations.json"), &sep.permutations)?;
    Ok(paths)
}

fn oracle_diarization(reference: &[SegmentAnnotation]) -> DiarizationResult {
    let segments: Vec<SegmentAnnotation> = reference
        .iter()
        .map(|s| SegmentAnnotation { stream: 0, ..s.clone() })
        .collect();
    let mut speakers: Vec<&str> = segments.iter().map(|s| s.speaker.as_str()).collect();
    speakers.sort_unstable();
    speakers.dedup();
    DiarizationResult {
        num_speakers: speakers.len(),
        segments,
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    *slot = t.elapsed().as_secs_f64();
    out
}

fn session_root(outdir: &Path, session: &SessionManifest) -> Result<PathBuf> {
    let root = outdir.join(&session.name);
    create_dir_all(&root)?;
    Ok(root)
}

fn stream_paths(root: &Path, cfg: &PipelineConfig) -> Vec<PathBuf> {
    (0..cfg.separation.num_streams)
        .map(|k| root.join("streams").join(format!("stream{k}.wav")))
        .collect()
}

/// Separation stage: writes `streams/` and `masks/`. Returns the stream
/// paths, or `None` when separation is switched off.
pub fn separate_session(cfg: &PipelineConfig, session: &SessionManifest, outdir: &Path) -> Result<Option<Vec<PathBuf>>> {
    if !cfg.stages.separation {
        return Ok(None);
    }
    let root = session_root(outdir, session)?;
    let mixture = read_wav(&session.recording)?;
    let truth = session.load_sources()?;
    let sep_cfg = &cfg.separation;
    let spec = stft(&mixture, sep_cfg.frame_len, sep_cfg.stft_hop)?;
    let (speech, noise) = oracle_masks(&truth, &spec, sep_cfg.ref_channel)?;
    let estimator = match cfg.estimator.kind {
        EstimatorKind::Oracle => {
            let est = OracleEstimator::new(speech, noise, sep_cfg.num_streams)?;
            if cfg.estimator.scramble {
                est.with_scramble(stage_seed(cfg.seed, &session.name, "estimator"))
            } else {
                est
            }
        }
    };
    let sep = separate(&mixture, &estimator, sep_cfg)?;
    write_separation(&root, &sep, cfg).map(Some)
}

/// Diarization stage: reads the separated streams (or channel 0 of the
/// mixture) and writes `diarization.rttm`.
pub fn diarize_session(cfg: &PipelineConfig, session: &SessionManifest, outdir: &Path) -> Result<PathBuf> {
    let root = session_root(outdir, session)?;
    let name = session.name.as_str();
    let streams: Vec<AudioClip> = if cfg.stages.separation {
        stream_paths(&root, cfg).iter().map(read_wav).collect::<Result<_>>()?
    } else {
        vec![read_wav(&session.recording)?.select_channel(0)?]
    };
    let raw = match cfg.stages.diarization {
        DiarizationSource::System => {
            let mut dcfg = cfg.diarization.clone();
            dcfg.seed ^= stage_seed(cfg.seed, name, "diarization");
            diarize(&streams, &dcfg, &cfg.embedder)?
        }
        DiarizationSource::Oracle => oracle_diarization(&read_rttm(&session.rttm)?),
    };
    let result = if cfg.stages.separation && cfg.stages.enclosed_filter {
        if cfg.output.keep_unfiltered {
            write_rttm(root.join("diarization_unfiltered.rttm"), name, &raw.segments)?;
        }
        filter_enclosed(&raw)
    } else {
        raw
    };
    let path = root.join("diarization.rttm");
    write_rttm(&path, name, &result.segments)?;
    Ok(path)
}

/// ASR stage: routes the reference transcript through `diarization.rttm`
/// and writes `hypothesis.json`.
pub fn transcribe_session(cfg: &PipelineConfig, session: &SessionManifest, outdir: &Path) -> Result<PathBuf> {
    let root = session_root(outdir, session)?;
    let reference = SpeakerTranscript::from_records(&read_transcript_json(&session.transcript)?);
    let segments = read_rttm(root.join("diarization.rttm"))?;
    let hyp = simulate_asr(&reference, &segments, &cfg.asr, stage_seed(cfg.seed, &session.name, "asr"))?;
    let path = root.join("hypothesis.json");
    write_transcript_json(&path, &hyp.to_records(&session.name))?;
    Ok(path)
}

/// Scoring stage: DER, cpWER and, for separated runs, SI-SDR after oracle
/// track mapping. Writes `scores.json`.
pub fn score_pipeline_session(cfg: &PipelineConfig, session: &SessionManifest, outdir: &Path) -> Result<SessionScores> {
    let root = session_root(outdir, session)?;
    let (ref_segments, ref_transcript) = session.load_reference()?;
    let hyp_segments = read_rttm(root.join("diarization.rttm"))?;
    let hyp = SpeakerTranscript::from_records(&read_transcript_json(root.join("hypothesis.json"))?);
    let mut scores = score_session(&ref_segments, &ref_transcript, &hyp_segments, &hyp, cfg.metrics.collar)?;
    if cfg.stages.separation {
        let streams: Vec<AudioClip> = stream_paths(&root, cfg).iter().map(read_wav).collect::<Result<_>>()?;
        let references = session.load_sources()?.references(cfg.separation.ref_channel)?;
        let map = oracle_track_map(&streams, &references, cfg.metrics.track_block)?;
        let tracks: Vec<Option<AudioClip>> = map.tracks.into_iter().map(Some).collect();
        scores.sdr = Some(meeting_sdr(&tracks, &references)?);
    }
    write_atomic(root.join("scores.json"), serde_json::to_string_pretty(&scores)? + "\n")?;
    Ok(scores)
}

fn run_session(cfg: &PipelineConfig, session: &SessionManifest, outdir: &Path, timing: &mut StageTiming) -> Result<SessionScores> {
    // fail fast on unreadable references before any audio work
    session.load_reference().map_err(|e| e.in_stage("load"))?;
    timed(&mut timing.separation, || separate_session(cfg, session, outdir)).map_err(|e| e.in_stage("separation"))?;
    timed(&mut timing.diarization, || diarize_session(cfg, session, outdir)).map_err(|e| e.in_stage("diarization"))?;
    timed(&mut timing.asr, || transcribe_session(cfg, session, outdir)).map_err(|e| e.in_stage("asr"))?;
    timed(&mut timing.scoring, || score_pipeline_session(cfg, session, outdir)).map_err(|e| e.in_stage("scoring"))
}

/// One stage that can be run on its own over a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStage {
    Separation,
    Diarization,
    Asr,
    Scoring,
}

/// Runs a single stage over every session on `cfg.workers` threads,
/// returning each session's error, if any, in manifest order.
pub fn run_stage(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    outdir: impl AsRef<Path>,
    stage: PipelineStage,
) -> Result<Vec<(String, Option<Error>)>> {
    cfg.validate()?;
    manifest.validate()?;
    let outdir = outdir.as_ref();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        manifest
            .sessions
            .par_iter()
            .map(|s| {
                let res = match stage {
                    PipelineStage::Separation => separate_session(cfg, s, outdir).map(drop),
                    PipelineStage::Diarization => diarize_session(cfg, s, outdir).map(drop),
                    PipelineStage::Asr => transcribe_session(cfg, s, outdir).map(drop),
                    PipelineStage::Scoring => score_pipeline_session(cfg, s, outdir).map(drop),
                };
                if let Err(e) = &res {
                    log::error!("session {}: {e}", s.name);
                }
                (s.name.clone(), res.err())
            })
            .collect()
    }))
}

/// Runs every session in `manifest`, writing artifacts under
/// `<outdir>/<session>/` and the report under `outdir`.
///
/// A failing session is logged and marked in the report; the others still
/// run. Only configuration problems return an error.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &Manifest, outdir: impl AsRef<Path>) -> Result<PipelineReport> {
    cfg.validate()?;
    manifest.validate()?;
    let outdir = outdir.as_ref();
    create_dir_all(outdir)?;
    write_atomic(outdir.join("config.toml"), cfg.to_toml_string()?)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<(SessionReport, StageTiming)> = pool.install(|| {
        manifest
            .sessions
            .par_iter()
            .map(|session| {
                let mut timing = StageTiming {
                    session: session.name.clone(),
                    ..Default::default()
                };
                let outcome = match run_session(cfg, session, outdir, &mut timing) {
                    Ok(scores) => SessionOutcome::Ok { scores },
                    Err(e) => {
                        log::error!("session {} failed: {e}", session.name);
                        SessionOutcome::Failed { error: e.to_string() }
                    }
                };
                if let Ok(text) = serde_json::to_string_pretty(&timing) {
                    let _ = write_atomic(outdir.join(&session.name).join("timing.json"), text + "\n");
                }
                let report = SessionReport {
                    name: session.name.clone(),
                    condition: session.condition,
                    outcome,
                };
                (report, timing)
            })
            .collect()
    });
    let (sessions, timing): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let input = if cfg.stages.separation { "separated" } else { "mixture" };
    let report = PipelineReport::new(input, sessions, timing);
    report.write(outdir)?;
    Ok(report)
}
