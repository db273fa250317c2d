use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cluster::{ahc_cluster, cosine_affinity, spectral_cluster, SpectralConfig, MERGE_RATIO};
use super::embed::{Embedder, Embedding};
use super::sad::{detect_speech, SadConfig};
use super::subsegment::subsegment;
use crate::annotation::{sort_segments, SegmentAnnotation};
use crate::error::{Error, Result};
use crate::signal::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    Spectral,
    Ahc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiarizationConfig {
    pub sad: SadConfig,
    /// Subsegment window, seconds.
    pub window: f64,
    /// Subsegment stride, seconds.
    pub stride: f64,
    pub clusterer: Clusterer,
    pub max_speakers: usize,
    /// Fraction of each affinity row kept by spectral clustering.
    pub p_keep: f64,
    /// Spectral clusters separated by less than this multiple of their own
    /// spread are merged; 0 disables.
    pub merge_ratio: f64,
    /// Linkage similarity below which AHC stops merging.
    pub ahc_threshold: f64,
    /// Same-speaker pieces closer than this are merged (seconds). Merging
    /// never crosses a non-speech region.
    pub merge_gap: f64,
    pub seed: u64,
}

impl Default for DiarizationConfig {
    fn default() -> Self {
        Self {
            sad: SadConfig::default(),
            window: 1.5,
            stride: 0.75,
            clusterer: Clusterer::Spectral,
            max_speakers: 8,
            p_keep: 0.3,
            merge_ratio: MERGE_RATIO,
            ahc_threshold: 0.5,
            merge_gap: 0.25,
            seed: 0,
        }
    }
}

impl DiarizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_speakers == 0 {
            return Err(Error::Config("max_speakers must be at least 1".into()));
        }
        if !(self.stride > 0.0 && self.window >= self.stride) {
            return Err(Error::Config("subsegment window must be >= stride > 0".into()));
        }
        if !(self.p_keep > 0.0 && self.p_keep <= 1.0) {
            return Err(Error::Config(format!("p_keep {} outside (0, 1]", self.p_keep)));
        }
        if !(self.merge_ratio >= 0.0 && self.merge_ratio.is_finite()) {
            return Err(Error::Config(format!("merge_ratio {} must be finite and >= 0", self.merge_ratio)));
        }
        if !(-1.0..=1.0).contains(&self.ahc_threshold) {
            return Err(Error::Config(format!("AHC threshold {} outside [-1, 1]", self.ahc_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiarizationResult {
    pub segments: Vec<SegmentAnnotation>,
    pub num_speakers: usize,
}

/// Label used for cluster `k`.
pub fn speaker_label(k: usize) -> String {
    format!("spk{k}")
}

struct StreamWork {
    speech: Vec<(f64, f64)>,
    subsegments: Vec<(f64, f64)>,
    embeddings: Vec<Embedding>,
}

/// Splits a speech region among its subsegments at the midpoints of their
/// overlaps, so each instant belongs to exactly one subsegment.
fn tile(region: (f64, f64), subs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(subs.len());
    for (i, &(s, e)) in subs.iter().enumerate() {
        let start = if i == 0 { region.0 } else { (subs[i - 1].1 + s) / 2.0 };
        let end = if i + 1 == subs.len() { region.1 } else { (e + subs[i + 1].0) / 2.0 };
        out.push(((start * 1000.0).round() / 1000.0, (end * 1000.0).round() / 1000.0));
    }
    out
}

/// Diarizes one or more streams jointly: embeddings from all streams are
/// pooled into one clustering, so a talker keeps one label across streams.
pub fn diarize(streams: &[AudioClip], cfg: &DiarizationConfig, embedder: &dyn Embedder) -> Result<DiarizationResult> {
    cfg.validate()?;
    if streams.is_empty() {
        return Err(Error::Config("diarization needs at least one stream".into()));
    }
    let work: Vec<StreamWork> = streams
        .par_iter()
        .enumerate()
        .map(|(k, clip)| {
            let mono = if clip.channels() == 1 { clip.clone() } else { clip.select_channel(0)? };
            let speech = detect_speech(&mono, &cfg.sad)?;
            let subsegments = subsegment(&speech, cfg.window, cfg.stride)?;
            let embeddings = subsegments
                .iter()
                .map(|&(s, e)| {
                    Ok(Embedding {
                        vector: embedder.embed(&mono, k, s, e)?,
                        stream: k,
                        start: s,
                        end: e,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(StreamWork {
                speech,
                subsegments,
                embeddings,
            })
        })
        .collect::<Result<_>>()?;

    let pooled: Vec<Embedding> = work.iter().flat_map(|w| w.embeddings.iter().cloned()).collect();
    if pooled.is_empty() {
        return Ok(DiarizationResult {
            segments: Vec::new(),
            num_speakers: 0,
        });
    }
    let labels = if pooled.len() == 1 {
        vec![0]
    } else {
        let affinity = cosine_affinity(&pooled)?;
        match cfg.clusterer {
            Clusterer::Spectral => {
                let sc = SpectralConfig {
                    max_speakers: cfg.max_speakers,
                    p_keep: cfg.p_keep,
                    seed: cfg.seed,
                    restarts: 10,
                    merge_ratio: cfg.merge_ratio,
                };
                spectral_cluster(&affinity, &sc)?.0
            }
            Clusterer::Ahc => ahc_cluster(&affinity, cfg.ahc_threshold)?,
        }
    };

    let mut segments = Vec::new();
    let mut offset = 0;
    for (k, w) in work.iter().enumerate() {
        let stream_labels = &labels[offset..offset + w.subsegments.len()];
        offset += w.subsegments.len();
        let mut cursor = 0;
        for &region in &w.speech {
            let members: Vec<usize> = (cursor..w.subsegments.len())
                .take_while(|&i| w.subsegments[i].0 < region.1 && w.subsegments[i].1 <= region.1 + 1e-9)
                .collect();
            cursor += members.len();
            let subs: Vec<(f64, f64)> = members.iter().map(|&i| w.subsegments[i]).collect();
            let pieces = tile(region, &subs);
            let mut merged: Vec<(f64, f64, usize)> = Vec::new();
            for (&(s, e), &i) in pieces.iter().zip(&members) {
                let label = stream_labels[i];
                match merged.last_mut() {
                    Some(last) if last.2 == label && s - last.1 <= cfg.merge_gap => last.1 = e,
                    _ => merged.push((s, e, label)),
                }
            }
            for (s, e, label) in merged {
                if e > s {
                    segments.push(SegmentAnnotation::new(k, speaker_label(label), s, e)?);
                }
            }
        }
    }
    sort_segments(&mut segments);
    let num_speakers = segments
        .iter()
        .map(|s| s.speaker.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(DiarizationResult { segments, num_speakers })
}

/// Drops a segment when a same-speaker segment on another stream fully
/// contains it. Of two identical intervals, the higher stream's copy goes.
pub fn filter_enclosed(result: &DiarizationResult) -> DiarizationResult {
    let segs = &result.segments;
    let keep: Vec<SegmentAnnotation> = segs
        .iter()
        .filter(|s| {
            !segs.iter().any(|t| {
                t.stream != s.stream
                    && t.speaker == s.speaker
                    && t.start_ms() <= s.start_ms()
                    && s.end_ms() <= t.end_ms()
                    && !(t.start_ms() == s.start_ms() && t.end_ms() == s.end_ms() && t.stream > s.stream)
            })
        })
        .cloned()
        .collect();
    let num_speakers = keep
        .iter()
        .map(|s| s.speaker.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    DiarizationResult {
        segments: keep,
        num_speakers,
    }
}
