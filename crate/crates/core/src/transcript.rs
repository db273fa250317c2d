//! Word transcripts: per-utterance JSON records and per-speaker grouping.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One utterance as stored on disk: `{recording, speaker, start, end, words[]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub recording: String,
    pub speaker: String,
    pub start: f64,
    pub end: f64,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub start: f64,
    pub end: f64,
    pub words: Vec<String>,
}

/// Utterances grouped by speaker, each speaker's list sorted by start time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeakerTranscript {
    speakers: BTreeMap<String, Vec<Utterance>>,
}

impl SpeakerTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, speaker: impl Into<String>, utterance: Utterance) {
        let list = self.speakers.entry(speaker.into()).or_default();
        // stable insertion keeps equal start times in arrival order
        let pos = list.partition_point(|u| u.start <= utterance.start);
        list.insert(pos, utterance);
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.speakers.keys().map(String::as_str)
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn utterances(&self, speaker: &str) -> &[Utterance] {
        self.speakers.get(speaker).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Utterance])> {
        self.speakers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// All of a speaker's words concatenated in start-time order.
    pub fn concatenated(&self, speaker: &str) -> Vec<String> {
        self.utterances(speaker)
            .iter()
            .flat_map(|u| u.words.iter().cloned())
            .collect()
    }

    pub fn word_count(&self) -> usize {
        self.speakers
            .values()
            .flat_map(|v| v.iter())
            .map(|u| u.words.len())
            .sum()
    }

    pub fn from_records(records: &[UtteranceRecord]) -> Self {
        let mut out = Self::new();
        for r in records {
            out.push(
                r.speaker.clone(),
                Utterance {
                    start: r.start,
                    end: r.end,
                    words: r.words.clone(),
                },
            );
        }
        out
    }

    pub fn to_records(&self, recording: &str) -> Vec<UtteranceRecord> {
        let mut out: Vec<UtteranceRecord> = self
            .iter()
            .flat_map(|(spk, utts)| {
                utts.iter().map(move |u| UtteranceRecord {
                    recording: recording.to_string(),
                    speaker: spk.to_string(),
                    start: u.start,
                    end: u.end,
                    words: u.words.clone(),
                })
            })
            .collect();
        out.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.speaker.cmp(&b.speaker)));
        out
    }

    /// Renames speakers through `f`; speakers mapped to the same name are merged.
    pub fn relabel(&self, mut f: impl FnMut(&str) -> String) -> Self {
        let mut out = Self::new();
        for (spk, utts) in self.iter() {
            let name = f(spk);
            for u in utts {
                out.push(name.clone(), u.clone());
            }
        }
        out
    }
}

/// Lowercases and strips punctuation, splitting on whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn read_transcript_json(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let text = crate::fsutil::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_transcript_json(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)?;
    crate::fsutil::write_atomic(path, text + "\n")
}
