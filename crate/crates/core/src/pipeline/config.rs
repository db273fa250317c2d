//! Pipeline configuration, stored as TOML with one table per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::asr::AsrConfig;
use crate::diarization::{DiarizationConfig, LogMelEmbedder};
use crate::error::{Error, Result};
use crate::separation::SeparationConfig;
use crate::signal::wav::WavFormat;

/// Where the diarization segments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiarizationSource {
    /// SAD, embeddings and clustering on the stage input.
    #[default]
    System,
    /// The reference segments, for isolating downstream stages.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// When off, diarization runs on channel 0 of the mixture.
    pub separation: bool,
    pub diarization: DiarizationSource,
    /// Drop segments enclosed by a same-speaker segment on another stream.
    pub enclosed_filter: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            separation: true,
            diarization: DiarizationSource::System,
            enclosed_filter: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Ideal ratio masks from the session's source images.
    #[default]
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Shuffle each chunk's output order, as an untrained permutation-free
    /// network would.
    pub scramble: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Seconds excised around reference boundaries when scoring DER.
    pub collar: f64,
    /// Block length for oracle track mapping before SI-SDR, seconds.
    pub track_block: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            collar: 0.0,
            track_block: crate::separation::DEFAULT_TRACK_BLOCK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub wav_format: WavFormat,
    /// Also write the unfiltered diarization when the enclosed filter is on.
    pub keep_unfiltered: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            wav_format: WavFormat::Float32,
            keep_unfiltered: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Folded into every per-session, per-stage seed.
    pub seed: u64,
    /// Sessions processed concurrently.
    pub workers: usize,
    pub stages: StageConfig,
    pub separation: SeparationConfig,
    pub estimator: EstimatorConfig,
    pub diarization: DiarizationConfig,
    pub embedder: LogMelEmbedder,
    pub asr: AsrConfig,
    pub metrics: MetricConfig,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            stages: StageConfig::default(),
            separation: SeparationConfig::default(),
            estimator: EstimatorConfig::default(),
            diarization: DiarizationConfig::default(),
            embedder: LogMelEmbedder::default(),
            asr: AsrConfig::default(),
            metrics: MetricConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

const HEADER: &str = "\
# Meeting pipeline configuration. Every key is optional; the values below
# are the defaults. Stage order: separation -> diarization -> asr -> scoring.
";

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.separation.validate()?;
        self.diarization.validate()?;
        self.asr.validate()?;
        if !(self.metrics.collar >= 0.0 && self.metrics.collar.is_finite()) {
            return Err(Error::Config(format!("collar {} must be >= 0", self.metrics.collar)));
        }
        if !(self.metrics.track_block > 0.0) {
            return Err(Error::Config("track_block must be positive".into()));
        }
        if self.embedder.num_bands == 0 || !(self.embedder.frame_hop > 0.0 && self.embedder.frame_len > 0.0) {
            return Err(Error::Config("embedder needs bands and positive frame sizes".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = crate::fsutil::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The reference config: every default spelled out.
    pub fn to_toml_string(&self) -> Result<String> {
        let body = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        Ok(format!("{HEADER}\n{body}"))
    }
}

/// Stage seed derived from the run seed, the session name and a stage tag.
pub fn stage_seed(seed: u64, session: &str, stage: &str) -> u64 {
    // FNV-1a, stable across platforms and releases
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in session.bytes().chain([0u8]).chain(stage.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
