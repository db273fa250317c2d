//! Evaluation machinery: SI-SDR, linear assignment, DER, WER/cpWER and overlap ratio.

mod assignment;
mod der;
mod overlap;
mod sisdr;
mod wer;

pub use assignment::{solve_assignment, Assignment};
pub use der::{der, DerBreakdown};
pub use overlap::overlap_ratio;
pub use sisdr::{meeting_sdr, si_sdr, si_sdr_clips, si_sdr_unclamped, MeetingSdr, SpeakerSdr, SDR_CLAMP_DB};
pub use wer::{cpwer, wer, CpWerResult, WerCounts};
