//! Ideal ratio masks computed from known source images.

use ndarray::Array2;

use super::meeting::GroundTruth;
use crate::error::{Error, Result};
use crate::signal::{stft, Spectrogram, TfMask};

/// Floor added to the mask denominator so silent bins stay finite.
pub const IRM_EPSILON: f64 = 1e-8;

/// Speech masks (one per speaker, in `ground_truth.speakers` order) and the
/// noise mask, all at `ref_channel`.
pub fn oracle_masks(
    ground_truth: &GroundTruth,
    mixture_spec: &Spectrogram,
    ref_channel: usize,
) -> Result<(Vec<TfMask>, TfMask)> {
    if ground_truth.per_source_images.is_empty() {
        return Err(Error::OracleUnavailable("no source images".into()));
    }
    let magnitude = |clip: &crate::signal::AudioClip| -> Result<Array2<f64>> {
        if ref_channel >= clip.channels() {
            return Err(Error::OracleUnavailable(format!(
                "reference channel {ref_channel} missing from source image"
            )));
        }
        let mono = clip.select_channel(ref_channel)?;
        let s = stft(&mono, mixture_spec.frame_len(), mixture_spec.hop())?;
        if s.frames() != mixture_spec.frames() {
            return Err(Error::Shape(format!(
                "source image spans {} frames, mixture {}",
                s.frames(),
                mixture_spec.frames()
            )));
        }
        Ok(s.magnitude(0))
    };
    let sources: Vec<Array2<f64>> = ground_truth
        .per_source_images
        .iter()
        .map(magnitude)
        .collect::<Result<_>>()?;
    let noise = magnitude(&ground_truth.noise)?;
    masks_from_magnitudes(&sources, &noise)
}

/// `m_k = |S_k| / (sum_j |S_j| + |N| + eps)`, with the noise mask built the same way.
pub fn masks_from_magnitudes(
    sources: &[Array2<f64>],
    noise: &Array2<f64>,
) -> Result<(Vec<TfMask>, TfMask)> {
    let mut denom = noise.clone() + IRM_EPSILON;
    for s in sources {
        if s.dim() != noise.dim() {
            return Err(Error::Shape("source and noise magnitudes differ in shape".into()));
        }
        denom += s;
    }
    let speech = sources.iter().map(|s| TfMask::clamped(s / &denom)).collect();
    Ok((speech, TfMask::clamped(noise / &denom)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_sources_split_evenly() {
        let a = Array2::from_elem((2, 3), 1.0);
        let n = Array2::zeros((2, 3));
        let (m, nm) = masks_from_magnitudes(&[a.clone(), a], &n).unwrap();
        assert!(m[0].values().iter().all(|v| (v - 0.5).abs() < 1e-6));
        assert!(nm.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn silence_goes_to_noise() {
        let s = Array2::zeros((1, 2));
        let n = Array2::from_elem((1, 2), 1e-3);
        let (m, nm) = masks_from_magnitudes(&[s], &n).unwrap();
        assert!(m[0].values().iter().all(|v| *v == 0.0));
        assert!(nm.values().iter().all(|v| (v - 1.0).abs() < 1e-4));
    }

    #[test]
    fn masks_sum_to_at_most_one() {
        let a = Array2::from_shape_fn((4, 5), |(i, j)| (i * j) as f64 * 0.3);
        let b = Array2::from_shape_fn((4, 5), |(i, j)| (i + j) as f64);
        let n = Array2::from_elem((4, 5), 0.01);
        let (m, nm) = masks_from_magnitudes(&[a, b], &n).unwrap();
        let total = m[0].values() + m[1].values() + nm.values();
        assert!(total.iter().all(|v| *v <= 1.0 + 1e-12));
    }
}
