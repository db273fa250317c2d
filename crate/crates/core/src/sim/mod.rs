//! Shoebox room acoustics and meeting-style mixture simulation.

mod meeting;
mod oracle;
mod pool;
mod room;

pub use meeting::{
    simulate_meeting, utterances_per_speaker, GroundTruth, MeetingSpec, SilenceMode,
    OVERLAP_TOLERANCE,
};
pub use oracle::{masks_from_magnitudes, oracle_masks, IRM_EPSILON};
pub use pool::{synthesize_utterance, synthetic_pool, PoolUtterance, TalkerProfile, UtterancePool};
pub use room::{compute_rir, distance, ArrayGeometry, Point3, RoomSpec};
