//! WAV reading and writing (PCM 16-bit and IEEE float32).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::InvalidAudio(format!(
                "{}: unsupported sample format {fmt:?}/{bits}",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let samples = Array2::from_shape_fn((channels, frames), |(c, t)| interleaved[t * channels + c]);
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes `clip` through a temporary file and renames it into place.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: clip.channels() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let tmp = crate::fsutil::temp_sibling(path);
    {
        let mut writer = WavWriter::create(&tmp, spec)?;
        let samples = clip.samples();
        for t in 0..clip.len() {
            for c in 0..clip.channels() {
                let v = samples[[c, t]];
                match format {
                    WavFormat::Pcm16 => {
                        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                        writer.write_sample(q)?;
                    }
                    WavFormat::Float32 => writer.write_sample(v as f32)?,
                }
            }
        }
        writer.finalize()?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_preserves_rate_and_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip =
            AudioClip::from_channels(&[vec![0.5, -0.25, 0.0], vec![0.125, 0.0, -1.0]], 22_050)
                .unwrap();
        write_wav(&path, &clip, WavFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let clip = AudioClip::mono(vec![0.1, -0.3, 0.99, -1.0], 16_000).unwrap();
        write_wav(&path, &clip, WavFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        for (a, b) in back.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
