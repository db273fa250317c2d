//! Simulated ASR: routes reference words through a diarization and corrupts
//! them at fixed rates.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::SegmentAnnotation;
use crate::error::{Error, Result};
use crate::transcript::{SpeakerTranscript, Utterance};

/// Per-word error probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrConfig {
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
}

impl AsrConfig {
    pub fn new(substitution: f64, deletion: f64, insertion: f64) -> Result<Self> {
        let cfg = Self {
            substitution,
            deletion,
            insertion,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("substitution", self.substitution),
            ("deletion", self.deletion),
            ("insertion", self.insertion),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

fn contains(seg: &SegmentAnnotation, t: f64) -> bool {
    seg.start <= t && t < seg.end
}

/// Builds a hypothesis transcript from `reference`.
///
/// Each reference utterance goes to every stream whose segment contains the
/// utterance midpoint, labelled with that segment's speaker; an utterance
/// no segment contains is lost. Routed words are then deleted, substituted
/// or followed by an inserted word independently, drawing replacement words
/// from the reference vocabulary.
pub fn simulate_asr(
    reference: &SpeakerTranscript,
    segments: &[SegmentAnnotation],
    rates: &AsrConfig,
    seed: u64,
) -> Result<SpeakerTranscript> {
    rates.validate()?;
    let vocabulary: Vec<&str> = reference
        .iter()
        .flat_map(|(_, utts)| utts.iter().flat_map(|u| u.words.iter().map(String::as_str)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut utterances: Vec<(&str, &Utterance)> = reference
        .iter()
        .flat_map(|(spk, utts)| utts.iter().map(move |u| (spk, u)))
        .collect();
    utterances.sort_by(|a, b| a.1.start.total_cmp(&b.1.start).then(a.0.cmp(b.0)));

    let mut streams: Vec<usize> = segments.iter().map(|s| s.stream).collect();
    streams.sort_unstable();
    streams.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpeakerTranscript::new();
    for (_, utt) in utterances {
        let mid = 0.5 * (utt.start + utt.end);
        for &stream in &streams {
            let Some(seg) = segments
                .iter()
                .find(|s| s.stream == stream && contains(s, mid))
            else {
                continue;
            };
            let words = corrupt(&utt.words, rates, &vocabulary, &mut rng);
            out.push(
                seg.speaker.clone(),
                Utterance {
                    start: utt.start,
                    end: utt.end,
                    words,
                },
            );
        }
    }
    Ok(out)
}

fn corrupt(words: &[String], rates: &AsrConfig, vocabulary: &[&str], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        // fixed draw order keeps runs reproducible whatever the rates
        let (d, s, i) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        if d >= rates.deletion {
            if s < rates.substitution {
                out.push(substitute(w, vocabulary, rng));
            } else {
                out.push(w.clone());
            }
        }
        if i < rates.insertion && !vocabulary.is_empty() {
            out.push(vocabulary[rng.random_range(0..vocabulary.len())].to_string());
        }
    }
    out
}

fn substitute(word: &str, vocabulary: &[&str], rng: &mut ChaCha8Rng) -> String {
    let others: Vec<&str> = vocabulary.iter().copied().filter(|v| *v != word).collect();
    if others.is_empty() {
        return word.to_string();
    }
    others[rng.random_range(0..others.len())].to_string()
}
