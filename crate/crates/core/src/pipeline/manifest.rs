//! Session manifests and the on-disk layout of simulated sessions.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{read_rttm, write_rttm};
use crate::error::{Error, Result};
use crate::signal::wav::{read_wav, write_wav, WavFormat};
use crate::signal::AudioClip;
use crate::sim::{GroundTruth, SilenceMode};
use crate::transcript::{read_transcript_json, write_transcript_json, SpeakerTranscript};

/// The six overlap conditions of the evaluation corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "0L")]
    ZeroLong,
    #[serde(rename = "0S")]
    ZeroShort,
    #[serde(rename = "OV10")]
    Ov10,
    #[serde(rename = "OV20")]
    Ov20,
    #[serde(rename = "OV30")]
    Ov30,
    #[serde(rename = "OV40")]
    Ov40,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::ZeroLong,
        Condition::ZeroShort,
        Condition::Ov10,
        Condition::Ov20,
        Condition::Ov30,
        Condition::Ov40,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Condition::ZeroLong => "0L",
            Condition::ZeroShort => "0S",
            Condition::Ov10 => "OV10",
            Condition::Ov20 => "OV20",
            Condition::Ov30 => "OV30",
            Condition::Ov40 => "OV40",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(label))
            .ok_or_else(|| Error::Config(format!("unknown condition {label:?}; expected 0L, 0S or OV10..OV40")))
    }

    /// Condition for a target overlap ratio; zero overlap is split by silence length.
    pub fn for_target(overlap: f64, silence: SilenceMode) -> Result<Self> {
        let pct = (overlap * 100.0).round() as i64;
        if (overlap * 100.0 - pct as f64).abs() > 1e-6 {
            return Err(Error::Config(format!("overlap {overlap} is not a corpus condition")));
        }
        Ok(match pct {
            0 => match silence {
                SilenceMode::Long => Condition::ZeroLong,
                SilenceMode::Short => Condition::ZeroShort,
            },
            10 => Condition::Ov10,
            20 => Condition::Ov20,
            30 => Condition::Ov30,
            40 => Condition::Ov40,
            _ => return Err(Error::Config(format!("overlap {overlap} is not a corpus condition"))),
        })
    }

    /// Target overlap ratio and silence mode that generate this condition.
    pub fn target(&self) -> (f64, SilenceMode) {
        match self {
            Condition::ZeroLong => (0.0, SilenceMode::Long),
            Condition::ZeroShort => (0.0, SilenceMode::Short),
            Condition::Ov10 => (0.1, SilenceMode::Short),
            Condition::Ov20 => (0.2, SilenceMode::Short),
            Condition::Ov30 => (0.3, SilenceMode::Short),
            Condition::Ov40 => (0.4, SilenceMode::Short),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One session to process. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub name: String,
    pub condition: Condition,
    pub recording: PathBuf,
    pub rttm: PathBuf,
    pub transcript: PathBuf,
    /// Directory of per-speaker source images plus `noise.wav`; needed by
    /// the oracle estimator and for SI-SDR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<PathBuf>,
}

impl SessionManifest {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.recording, &mut self.rttm, &mut self.transcript] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = self.sources.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }

    fn check_paths(&self) -> Result<()> {
        let mut paths = vec![&self.recording, &self.rttm, &self.transcript];
        paths.extend(self.sources.as_ref());
        for p in paths {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "session {}: {} does not exist",
                    self.name,
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load_reference(&self) -> Result<(Vec<crate::annotation::SegmentAnnotation>, SpeakerTranscript)> {
        let segments = read_rttm(&self.rttm)?;
        let transcript = SpeakerTranscript::from_records(&read_transcript_json(&self.transcript)?);
        Ok((segments, transcript))
    }

    /// Source images and noise as a ground truth for oracle masks and SI-SDR.
    pub fn load_sources(&self) -> Result<GroundTruth> {
        let dir = self
            .sources
            .as_ref()
            .ok_or_else(|| Error::OracleUnavailable(format!("session {} lists no sources", self.name)))?;
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "wav"))
            .filter(|p| p.file_stem().is_some_and(|s| s != "noise"))
            .collect();
        wavs.sort();
        if wavs.is_empty() {
            return Err(Error::OracleUnavailable(format!("no source images in {}", dir.display())));
        }
        let speakers = wavs
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect();
        let per_source_images = wavs.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
        let noise = read_wav(dir.join("noise.wav"))?;
        let (segments, transcripts) = self.load_reference()?;
        Ok(GroundTruth {
            segments,
            speakers,
            per_source_images,
            noise,
            transcripts,
            speaker_positions: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "session")]
    pub sessions: Vec<SessionManifest>,
}

impl Manifest {
    /// Parses a manifest, resolves its paths and checks they exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = crate::fsutil::read_to_string(path)?;
        let mut manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut manifest.sessions {
            s.resolve(base);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for s in &self.sessions {
            if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
                return Err(Error::Config(format!("invalid session name {:?}", s.name)));
            }
            if !names.insert(&s.name) {
                return Err(Error::Config(format!("duplicate session {}", s.name)));
            }
            s.check_paths()?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        crate::fsutil::write_atomic(path, text)
    }
}

/// Writes a simulated session under `dir/name` and returns its manifest
/// entry with paths relative to `dir`.
pub fn write_session(
    dir: impl AsRef<Path>,
    name: &str,
    condition: Condition,
    mixture: &AudioClip,
    truth: &GroundTruth,
    format: WavFormat,
) -> Result<SessionManifest> {
    let dir = dir.as_ref();
    let rel = PathBuf::from(name);
    let root = dir.join(&rel);
    crate::fsutil::create_dir_all(root.join("sources"))?;
    write_wav(root.join("mixture.wav"), mixture, format)?;
    write_rttm(root.join("reference.rttm"), name, &truth.segments)?;
    write_transcript_json(root.join("transcript.json"), &truth.transcripts.to_records(name))?;
    for (spk, img) in truth.speakers.iter().zip(&truth.per_source_images) {
        write_wav(root.join("sources").join(format!("{spk}.wav")), img, format)?;
    }
    write_wav(root.join("sources").join("noise.wav"), &truth.noise, format)?;
    Ok(SessionManifest {
        name: name.to_string(),
        condition,
        recording: rel.join("mixture.wav"),
        rttm: rel.join("reference.rttm"),
        transcript: rel.join("transcript.json"),
        sources: Some(rel.join("sources")),
    })
}
