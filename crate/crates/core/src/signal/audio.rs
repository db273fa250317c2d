use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multichannel PCM samples, `[channels x frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::InvalidAudio("clip has no channels".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let n = samples.len();
        let arr = Array2::from_shape_vec((1, n), samples).expect("1 x n shape");
        Self::new(arr, sample_rate)
    }

    pub fn silence(channels: usize, frames: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels.max(1), frames)),
            sample_rate,
        }
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let frames = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != frames) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        let flat: Vec<f64> = channels.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((channels.len(), frames), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(arr, sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.samples.row(index)
    }

    /// Single-channel copy of channel `index`.
    pub fn select_channel(&self, index: usize) -> Result<AudioClip> {
        if index >= self.channels() {
            return Err(Error::Bounds(format!(
                "channel {index} of a {}-channel clip",
                self.channels()
            )));
        }
        AudioClip::mono(self.channel(index).to_vec(), self.sample_rate)
    }

    /// Samples `[start, end)` of every channel; `end` is clamped to the clip length.
    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        let end = end.min(self.len());
        let start = start.min(end);
        AudioClip {
            samples: self
                .samples
                .slice(ndarray::s![.., start..end])
                .to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Mean power over all channels and frames.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            samples: &self.samples * gain,
            sample_rate: self.sample_rate,
        }
    }

    /// Adds `other` sample-wise; lengths and channel counts must agree.
    pub fn add_assign(&mut self, other: &AudioClip) -> Result<()> {
        if self.samples.dim() != other.samples.dim() {
            return Err(Error::Shape(format!(
                "cannot add {:?} to {:?}",
                other.samples.dim(),
                self.samples.dim()
            )));
        }
        self.samples += &other.samples;
        Ok(())
    }

    pub fn mix_down(&self) -> AudioClip {
        let mean = self.samples.mean_axis(Axis(0)).expect("at least one channel");
        AudioClip {
            samples: mean.insert_axis(Axis(0)),
            sample_rate: self.sample_rate,
        }
    }

    pub fn seconds_to_samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round().max(0.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_samples() {
        assert!(AudioClip::mono(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(AudioClip::mono(vec![0.0, 1.0], 0).is_err());
    }

    #[test]
    fn slice_clamps_to_length() {
        let clip = AudioClip::mono((0..10).map(f64::from).collect(), 10).unwrap();
        let s = clip.slice(8, 20);
        assert_eq!(s.len(), 2);
        assert_eq!(s.channel(0)[0], 8.0);
    }

    #[test]
    fn from_channels_checks_lengths() {
        assert!(AudioClip::from_channels(&[vec![0.0; 3], vec![0.0; 2]], 16_000).is_err());
        let c = AudioClip::from_channels(&[vec![1.0; 3], vec![2.0; 3]], 16_000).unwrap();
        assert_eq!(c.channels(), 2);
        assert_eq!(c.mix_down().channel(0)[1], 1.5);
    }
}
