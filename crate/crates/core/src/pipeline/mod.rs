//! End-to-end orchestration over session manifests, the simulated ASR
//! channel, and report generation.

mod asr;
mod config;
mod corpus;
mod manifest;
mod report;
mod run;

pub use asr::{simulate_asr, AsrConfig};
pub use config::{
    stage_seed, DiarizationSource, EstimatorConfig, EstimatorKind, MetricConfig, OutputConfig, PipelineConfig,
    StageConfig,
};
pub use corpus::{simulate_corpus, CorpusSpec};
pub use manifest::{write_session, Condition, Manifest, SessionManifest};
pub use report::{
    score_external, score_session, ConditionSummary, ExternalSession, PipelineReport, SessionOutcome, SessionReport,
    SessionScores, StageTiming, Summary,
};
pub use run::{diarize_session, run_pipeline, run_stage, PipelineStage, score_pipeline_session, separate_session, transcribe_session};
