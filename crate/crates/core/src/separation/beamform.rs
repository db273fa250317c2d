//! Mask-weighted spatial covariances and the MVDR beamformer.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{AudioClip, Spectrogram, TfMask};

/// Relative diagonal loading added to every covariance.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// One Hermitian `channels x channels` matrix per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub matrices: Vec<DMatrix<Complex64>>,
}

impl SpatialCovariance {
    pub fn channels(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn freq_bins(&self) -> usize {
        self.matrices.len()
    }

    /// Largest `|phi - phi^H|` entry over all bins.
    pub fn hermitian_error(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Element-wise sum with another covariance of the same shape.
    pub fn sum(&self, other: &SpatialCovariance) -> Result<SpatialCovariance> {
        if self.freq_bins() != other.freq_bins() || self.channels() != other.channels() {
            return Err(Error::Shape("covariance shapes differ".into()));
        }
        Ok(SpatialCovariance {
            matrices: self.matrices.iter().zip(&other.matrices).map(|(a, b)| a + b).collect(),
        })
    }
}

fn covariance_at(y: &ndarray::ArrayView2<Complex64>, weights: Option<&[f64]>) -> DMatrix<Complex64> {
    // y is [channels x frames]
    let (ch, frames) = y.dim();
    let mut phi = DMatrix::<Complex64>::zeros(ch, ch);
    let mut total = 0.0;
    for t in 0..frames {
        let w = weights.map_or(1.0, |w| w[t]);
        if w == 0.0 {
            continue;
        }
        total += w;
        for i in 0..ch {
            let yi = y[[i, t]] * w;
            for j in i..ch {
                phi[(i, j)] += yi * y[[j, t]].conj();
            }
        }
    }
    if total > 0.0 {
        phi /= Complex64::new(total, 0.0);
    }
    for i in 0..ch {
        phi[(i, i)].im = 0.0;
        for j in (i + 1)..ch {
            phi[(j, i)] = phi[(i, j)].conj();
        }
    }
    let trace: f64 = (0..ch).map(|i| phi[(i, i)].re).sum();
    let load = (DIAGONAL_LOADING * trace / ch as f64).max(1e-30);
    for i in 0..ch {
        phi[(i, i)].re += load;
    }
    phi
}

/// `phi(f) = sum_t m(t,f) y y^H / sum_t m(t,f)` plus diagonal loading. A
/// frequency whose mask is all zero falls back to the unweighted average.
pub fn spatial_covariance(spec: &Spectrogram, mask: &TfMask) -> Result<SpatialCovariance> {
    mask.check_shape(spec)?;
    let bins = spec.bins();
    let matrices = (0..spec.freq_bins())
        .into_par_iter()
        .map(|f| {
            let y = bins.index_axis(Axis(2), f);
            let w: Vec<f64> = mask.values().column(f).to_vec();
            if w.iter().sum::<f64>() > 0.0 {
                covariance_at(&y, Some(&w))
            } else {
                covariance_at(&y, None)
            }
        })
        .collect();
    Ok(SpatialCovariance { matrices })
}

fn solve(phi_n: &DMatrix<Complex64>, rhs: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    match phi_n.clone().cholesky() {
        Some(c) => Some(c.solve(rhs)),
        None => phi_n.clone().lu().solve(rhs),
    }
}

/// Per-frequency MVDR filters `w = (phi_n^-1 phi_s / tr(phi_n^-1 phi_s)) u_ref`.
/// Bins without usable speech energy get the reference-channel selector.
pub fn mvdr_weights(
    phi_speech: &SpatialCovariance,
    phi_noise: &SpatialCovariance,
    ref_channel: usize,
) -> Result<Vec<DVector<Complex64>>> {
    let ch = phi_speech.channels();
    if phi_noise.channels() != ch || phi_noise.freq_bins() != phi_speech.freq_bins() {
        return Err(Error::Shape("speech and noise covariances differ in shape".into()));
    }
    if ref_channel >= ch {
        return Err(Error::Config(format!("reference channel {ref_channel} of {ch}")));
    }
    let mut selector = DVector::<Complex64>::zeros(ch);
    selector[ref_channel] = Complex64::new(1.0, 0.0);
    Ok(phi_speech
        .matrices
        .par_iter()
        .zip(&phi_noise.matrices)
        .map(|(s, n)| {
            let Some(num) = solve(n, s) else {
                return selector.clone();
            };
            let tr = num.trace();
            if !(tr.norm() > 1e-10) || !tr.is_finite() {
                return selector.clone();
            }
            let w: DVector<Complex64> = num.column(ref_channel) / tr;
            if w.iter().all(|z| z.is_finite()) {
                w
            } else {
                selector.clone()
            }
        })
        .collect())
}

/// Applies per-frequency filters: `out(t,f) = w(f)^H y(t,f)`.
pub fn apply_weights(weights: &[DVector<Complex64>], spec: &Spectrogram) -> Result<Spectrogram> {
    if weights.len() != spec.freq_bins() || weights.iter().any(|w| w.len() != spec.channels()) {
        return Err(Error::Shape("beamformer weights do not match spectrogram".into()));
    }
    let bins = spec.bins();
    let mut out = Array3::<Complex64>::zeros((1, spec.frames(), spec.freq_bins()));
    for (f, w) in weights.iter().enumerate() {
        for t in 0..spec.frames() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, wc) in w.iter().enumerate() {
                acc += wc.conj() * bins[[c, t, f]];
            }
            out[[0, t, f]] = acc;
        }
    }
    spec.with_bins(out)
}

/// Mono MVDR output for one source.
pub fn mvdr_beamform(
    phi_speech: &SpatialCovariance,
    phi_noise: &SpatialCovariance,
    spec: &Spectrogram,
    ref_channel: usize,
) -> Result<Spectrogram> {
    if phi_speech.channels() != spec.channels() {
        return Err(Error::Shape(format!(
            "covariance has {} channels, spectrogram {}",
            phi_speech.channels(),
            spec.channels()
        )));
    }
    let w = mvdr_weights(phi_speech, phi_noise, ref_channel)?;
    apply_weights(&w, spec)
}

/// Reference channel whose MVDR output has the highest posterior SNR,
/// `sum_f w^H phi_s w / sum_f w^H phi_n w`.
pub fn select_reference_channel(phi_speech: &SpatialCovariance, phi_noise: &SpatialCovariance) -> Result<usize> {
    let quad = |m: &DMatrix<Complex64>, w: &DVector<Complex64>| (w.adjoint() * m * w)[(0, 0)].re;
    let mut best = (0, f64::NEG_INFINITY);
    for r in 0..phi_speech.channels() {
        let w = mvdr_weights(phi_speech, phi_noise, r)?;
        let s: f64 = phi_speech.matrices.iter().zip(&w).map(|(m, w)| quad(m, w)).sum();
        let n: f64 = phi_noise.matrices.iter().zip(&w).map(|(m, w)| quad(m, w)).sum();
        let snr = s / n.max(f64::MIN_POSITIVE);
        if snr > best.1 {
            best = (r, snr);
        }
    }
    Ok(best.0)
}

/// Appends a channel made from channel 0 delayed by one sample plus white
/// Gaussian noise of variance 1e-6. Lets a separator built for one more
/// microphone run on the array.
pub fn augment_with_shifted_channel(clip: &AudioClip, seed: u64) -> Result<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-3).map_err(|e| Error::Numerical(e.to_string()))?;
    let src = clip.channel(0);
    let extra: Vec<f64> = (0..clip.len())
        .map(|n| {
            let shifted = if n == 0 { 0.0 } else { src[n - 1] };
            shifted + normal.sample(&mut rng)
        })
        .collect();
    let mut data = Array2::zeros((clip.channels() + 1, clip.len()));
    data.slice_mut(ndarray::s![..clip.channels(), ..]).assign(clip.samples());
    data.row_mut(clip.channels()).assign(&ndarray::Array1::from(extra));
    AudioClip::new(data, clip.sample_rate())
}
