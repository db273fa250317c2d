//! Simulated evaluation corpora: sessions per overlap condition plus a manifest.

use std::path::Path;

use super::config::stage_seed;
use super::manifest::{write_session, Condition, Manifest};
use crate::error::{Error, Result};
use crate::signal::wav::WavFormat;
use crate::sim::{simulate_meeting, ArrayGeometry, MeetingSpec, RoomSpec, UtterancePool};

/// Scheduling attempts per session before giving up.
const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub conditions: Vec<Condition>,
    pub sessions_per_condition: usize,
    /// Template for every session; overlap target, silence mode and seed
    /// are set per session.
    pub meeting: MeetingSpec,
    pub seed: u64,
}

/// Simulates the corpus under `dir` and writes `dir/manifest.toml`.
///
/// Sessions are named `<condition>_<index>`. A session whose schedule
/// misses the overlap tolerance is redrawn with the next derived seed.
pub fn simulate_corpus(
    dir: impl AsRef<Path>,
    spec: &CorpusSpec,
    room: &RoomSpec,
    mics: &ArrayGeometry,
    pool: &UtterancePool,
    format: WavFormat,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    crate::fsutil::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    for &condition in &spec.conditions {
        let (overlap, silence) = condition.target();
        for i in 0..spec.sessions_per_condition {
            let name = format!("{}_{i}", condition.label());
            let base = stage_seed(spec.seed, &name, "meeting");
            let mut last_err = None;
            let mut done = None;
            for attempt in 0..MAX_ATTEMPTS {
                let meeting = MeetingSpec {
                    target_overlap_ratio: overlap,
                    silence_mode: silence,
                    seed: base.wrapping_add(attempt),
                    ..spec.meeting.clone()
                };
                match simulate_meeting(room, mics, &meeting, pool) {
                    Ok(sim) => {
                        done = Some(sim);
                        break;
                    }
                    Err(e @ Error::Scheduling { .. }) => {
                        log::warn!("session {name}: {e}; redrawing");
                        last_err = Some(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            let (mixture, truth) = match done {
                Some(sim) => sim,
                None => return Err(last_err.expect("at least one attempt")),
            };
            manifest
                .sessions
                .push(write_session(dir, &name, condition, &mixture, &truth, format)?);
        }
    }
    manifest.save(dir.join("manifest.toml"))?;
    Manifest::load(dir.join("manifest.toml"))
}
