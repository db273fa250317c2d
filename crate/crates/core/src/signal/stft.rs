//! One-sided STFT analysis and weighted overlap-add synthesis.
//!
//! Both directions use a periodic square-root Hann window. With a hop of
//! `frame_len / 2` or `frame_len / 4` the squared window overlap-adds to the
//! constant `frame_len / (2 * hop)`, which synthesis divides out. The signal is
//! padded with `frame_len - hop` zeros in front so the first samples are covered
//! by a full set of frames, and the tail is zero-padded up to the last frame.

use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_FRAME_LEN: usize = 512;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    SqrtHann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..len)
                .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).sqrt())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: DEFAULT_FRAME_LEN,
            hop: DEFAULT_HOP,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() || self.frame_len < 4 {
            return Err(Error::Config(format!(
                "frame length {} is not a power of two",
                self.frame_len
            )));
        }
        if self.hop != self.frame_len / 2 && self.hop != self.frame_len / 4 {
            return Err(Error::Config(format!(
                "hop {} does not satisfy COLA for frame length {} (use frame_len/2 or frame_len/4)",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    fn front_pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of analysis frames for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len == 0 {
            0
        } else {
            (self.front_pad() + len - 1) / self.hop + 1
        }
    }

    /// Frame index whose hop-aligned support starts closest to sample `sample`.
    pub fn frame_of_sample(&self, sample: usize) -> usize {
        (sample + self.front_pad()) / self.hop
    }
}

/// Complex STFT, `[channels x frames x freq_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Array3<Complex64>,
    frame_len: usize,
    hop: usize,
    window: Window,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(
        bins: Array3<Complex64>,
        frame_len: usize,
        hop: usize,
        window: Window,
        sample_rate: u32,
    ) -> Result<Self> {
        let cfg = StftConfig { frame_len, hop };
        cfg.validate()?;
        if bins.dim().2 != cfg.freq_bins() {
            return Err(Error::Shape(format!(
                "{} frequency bins for frame length {frame_len}",
                bins.dim().2
            )));
        }
        if bins.dim().0 == 0 {
            return Err(Error::Shape("spectrogram has no channels".into()));
        }
        Ok(Self {
            bins,
            frame_len,
            hop,
            window,
            sample_rate,
        })
    }

    pub fn bins(&self) -> &Array3<Complex64> {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.bins
    }

    pub fn config(&self) -> StftConfig {
        StftConfig {
            frame_len: self.frame_len,
            hop: self.hop,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.bins.dim().0
    }

    pub fn frames(&self) -> usize {
        self.bins.dim().1
    }

    pub fn freq_bins(&self) -> usize {
        self.bins.dim().2
    }

    pub fn channel(&self, index: usize) -> ArrayView2<'_, Complex64> {
        self.bins.index_axis(Axis(0), index)
    }

    /// Frames `[start, end)` of every channel.
    pub fn frame_range(&self, start: usize, end: usize) -> Spectrogram {
        let end = end.min(self.frames());
        let start = start.min(end);
        Spectrogram {
            bins: self.bins.slice(s![.., start..end, ..]).to_owned(),
            frame_len: self.frame_len,
            hop: self.hop,
            window: self.window,
            sample_rate: self.sample_rate,
        }
    }

    /// Same analysis parameters, different data.
    pub fn with_bins(&self, bins: Array3<Complex64>) -> Result<Spectrogram> {
        Spectrogram::new(bins, self.frame_len, self.hop, self.window, self.sample_rate)
    }

    /// Element-wise product of every channel with `mask`.
    pub fn apply_mask(&self, mask: &TfMask) -> Result<Spectrogram> {
        mask.check_shape(self)?;
        let mut bins = self.bins.clone();
        for mut ch in bins.axis_iter_mut(Axis(0)) {
            ch.zip_mut_with(mask.values(), |y, &m| *y *= m);
        }
        self.with_bins(bins)
    }

    /// Magnitudes of one channel, `[frames x freq_bins]`.
    pub fn magnitude(&self, channel: usize) -> Array2<f64> {
        self.channel(channel).mapv(|c| c.norm())
    }
}

/// Real-valued time-frequency gain in `[0, 1]`, `[frames x freq_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMask {
    values: Array2<f64>,
}

impl TfMask {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(bad) = values
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v) || v.is_nan())
        {
            return Err(Error::Shape(format!("mask value {bad} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    /// Clamps into `[0, 1]`; NaN becomes 0.
    pub fn clamped(values: Array2<f64>) -> Self {
        Self {
            values: values.mapv(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }),
        }
    }

    pub fn constant(frames: usize, freq_bins: usize, value: f64) -> Self {
        Self::clamped(Array2::from_elem((frames, freq_bins), value))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn freq_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_range(&self, start: usize, end: usize) -> TfMask {
        let end = end.min(self.frames());
        let start = start.min(end);
        TfMask {
            values: self.values.slice(s![start..end, ..]).to_owned(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    pub fn check_shape(&self, spec: &Spectrogram) -> Result<()> {
        if self.values.dim() != (spec.frames(), spec.freq_bins()) {
            return Err(Error::Shape(format!(
                "mask {:?} does not match spectrogram ({}, {})",
                self.values.dim(),
                spec.frames(),
                spec.freq_bins()
            )));
        }
        Ok(())
    }
}

/// Forward STFT of every channel of `clip`.
pub fn stft(clip: &AudioClip, frame_len: usize, hop: usize) -> Result<Spectrogram> {
    let cfg = StftConfig { frame_len, hop };
    cfg.validate()?;
    if clip.is_empty() {
        return Err(Error::InvalidAudio("cannot analyse an empty clip".into()));
    }
    let window = Window::SqrtHann.coefficients(frame_len);
    let pad = cfg.front_pad();
    let frames = cfg.num_frames(clip.len());
    let bins_per_frame = cfg.freq_bins();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame_len);
    let mut scratch = fft.make_scratch_vec();
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();

    let mut bins = Array3::<Complex64>::zeros((clip.channels(), frames, bins_per_frame));
    for (c, signal) in clip.samples().outer_iter().enumerate() {
        for t in 0..frames {
            // frame t covers padded samples [t*hop, t*hop + frame_len)
            for (n, slot) in input.iter_mut().enumerate() {
                let idx = (t * hop + n) as isize - pad as isize;
                *slot = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize] * window[n]
                } else {
                    0.0
                };
            }
            fft.process_with_scratch(&mut input, &mut output, &mut scratch)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            bins.slice_mut(s![c, t, ..])
                .iter_mut()
                .zip(output.iter())
                .for_each(|(dst, src)| *dst = *src);
        }
    }
    Spectrogram::new(bins, frame_len, hop, Window::SqrtHann, clip.sample_rate())
}

/// Overlap-add synthesis; output is truncated or zero-padded to `out_len` samples.
pub fn istft(spec: &Spectrogram, out_len: usize) -> Result<AudioClip> {
    let cfg = spec.config();
    cfg.validate()?;
    if spec.freq_bins() != cfg.freq_bins() {
        return Err(Error::Shape("frequency bins do not match frame length".into()));
    }
    let frame_len = cfg.frame_len;
    let hop = cfg.hop;
    let window = spec.window().coefficients(frame_len);
    let pad = cfg.front_pad();
    let norm = 1.0 / (frame_len as f64 * frame_len as f64 / (2.0 * hop as f64));

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(frame_len);
    let mut scratch = ifft.make_scratch_vec();
    let mut input = ifft.make_input_vec();
    let mut output = ifft.make_output_vec();

    let mut out = Array2::<f64>::zeros((spec.channels(), out_len));
    for c in 0..spec.channels() {
        let chan = spec.channel(c);
        for t in 0..spec.frames() {
            input
                .iter_mut()
                .zip(chan.row(t).iter())
                .for_each(|(dst, src)| *dst = *src);
            // a real signal has purely real DC and Nyquist bins
            input[0].im = 0.0;
            let last = input.len() - 1;
            input[last].im = 0.0;
            ifft.process_with_scratch(&mut input, &mut output, &mut scratch)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            for (n, &v) in output.iter().enumerate() {
                let idx = (t * hop + n) as isize - pad as isize;
                if idx >= 0 && (idx as usize) < out_len {
                    out[[c, idx as usize]] += v * window[n] * norm;
                }
            }
        }
    }
    AudioClip::new(out, spec.sample_rate())
}
