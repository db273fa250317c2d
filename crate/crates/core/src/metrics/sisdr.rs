use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioClip;

pub const SDR_CLAMP_DB: f64 = 100.0;

/// Scale-invariant SDR in dB without clamping. A zero projection or zero
/// residual yields an infinite value.
pub fn si_sdr_unclamped(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::UndefinedMetric("SI-SDR with a zero reference".into()));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    Ok(10.0 * (target / residual).log10())
}

/// SI-SDR clamped to `[-100, 100]` dB. A silent estimate scores the floor.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    let v = si_sdr_unclamped(estimate, reference)?;
    Ok(if v.is_nan() {
        -SDR_CLAMP_DB
    } else {
        v.clamp(-SDR_CLAMP_DB, SDR_CLAMP_DB)
    })
}

/// SI-SDR of two mono clips.
pub fn si_sdr_clips(estimate: &AudioClip, reference: &AudioClip) -> Result<f64> {
    if estimate.channels() != 1 || reference.channels() != 1 {
        return Err(Error::Shape("SI-SDR expects mono clips".into()));
    }
    let e = estimate.channel(0).to_vec();
    let r = reference.channel(0).to_vec();
    si_sdr(&e, &r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSdr {
    pub sdr_db: f64,
    /// Set when the track was missing or silent.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingSdr {
    pub per_speaker: Vec<SpeakerSdr>,
    pub mean_db: f64,
}

/// Per-speaker SI-SDR over the whole meeting and its arithmetic mean.
pub fn meeting_sdr(tracks: &[Option<AudioClip>], references: &[AudioClip]) -> Result<MeetingSdr> {
    if tracks.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} tracks for {} references",
            tracks.len(),
            references.len()
        )));
    }
    let mut per_speaker = Vec::with_capacity(tracks.len());
    for (track, reference) in tracks.iter().zip(references) {
        let entry = match track {
            None => SpeakerSdr {
                sdr_db: -SDR_CLAMP_DB,
                flagged: true,
            },
            Some(t) => {
                if t.len() != reference.len() {
                    return Err(Error::Shape("track and reference lengths differ".into()));
                }
                SpeakerSdr {
                    sdr_db: si_sdr_clips(t, reference)?,
                    flagged: t.energy() == 0.0,
                }
            }
        };
        per_speaker.push(entry);
    }
    let mean_db = if per_speaker.is_empty() {
        0.0
    } else {
        per_speaker.iter().map(|s| s.sdr_db).sum::<f64>() / per_speaker.len() as f64
    };
    Ok(MeetingSdr {
        per_speaker,
        mean_db,
    })
}
