//! Clustering-based speaker diarization over one or more audio streams.

mod cluster;
mod diarize;
mod embed;
mod sad;
mod subsegment;

pub use cluster::{
    ahc_cluster, canonical_labels, cosine_affinity, eigengap_count, kmeans, laplacian_spectrum, prune_affinity,
    cluster_separation, merge_unseparated, spectral_cluster, AffinityMatrix, SpectralConfig, MERGE_RATIO,
};
pub use diarize::{diarize, filter_enclosed, speaker_label, Clusterer, DiarizationConfig, DiarizationResult};
pub use embed::{
    mel_filterbank, Embedder, Embedding, ExternalEmbedder, ExternalIndex, ExternalIndexEntry, LogMelEmbedder,
};
pub use sad::{detect_speech, SadConfig};
pub use subsegment::subsegment;
