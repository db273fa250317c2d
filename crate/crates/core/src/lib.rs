//! Multi-speaker meeting processing: room simulation, chunked mask-based
//! separation with MVDR beamforming, cross-stream diarization, and
//! DER/cpWER/SI-SDR scoring.

pub mod annotation;
pub mod diarization;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod pipeline;
pub mod separation;
pub mod signal;
pub mod sim;
pub mod transcript;

pub use annotation::SegmentAnnotation;
pub use error::{Error, Result};
pub use signal::{AudioClip, Spectrogram, TfMask};
pub use transcript::SpeakerTranscript;
