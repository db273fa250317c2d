//! Audio containers, STFT analysis/synthesis, convolution and WAV I/O.

mod audio;
mod conv;
mod stft;
pub mod wav;

pub use audio::{AudioClip, DEFAULT_SAMPLE_RATE};
pub use conv::fft_convolve;
pub use stft::{istft, stft, Spectrogram, StftConfig, TfMask, Window, DEFAULT_FRAME_LEN, DEFAULT_HOP};
