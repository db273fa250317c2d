//! Continuous speech separation: chunking, pluggable mask estimation,
//! permutation stitching, MVDR beamforming and oracle track mapping.

mod beamform;
mod chunk;
mod estimator;
mod separate;
mod stitch;
mod track;

pub use beamform::{
    apply_weights, augment_with_shifted_channel, mvdr_beamform, mvdr_weights, select_reference_channel,
    spatial_covariance, SpatialCovariance, DIAGONAL_LOADING,
};
pub use chunk::{plan_chunks, ChunkPlan};
pub use estimator::{estimate_masks, ChunkContext, ChunkMasks, ConstantEstimator, MaskEstimator, OracleEstimator};
pub use separate::{separate, write_permutation_log, Interference, SeparatedStreams, SeparationConfig, StitchMode};
pub use stitch::{best_permutation, permutations, stitch_masks, stitch_signals, StitchedMasks, StitchedSignals};
pub use track::{oracle_track_map, TrackMap, DEFAULT_TRACK_BLOCK, MAX_ACTIVE_PER_BLOCK};
