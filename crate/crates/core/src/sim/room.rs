//! Shoebox room impulse responses by the image-source method.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Half-width of the fractional-delay interpolation kernel, in samples.
const SINC_HALF_TAPS: i64 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Length, width and height in meters.
    pub dimensions: Point3,
    /// Energy absorption per wall: `[x=0, x=L, y=0, y=W, z=0, z=H]`, each in `(0, 1]`.
    pub absorption: [f64; 6],
    pub max_reflection_order: usize,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            dimensions: [6.0, 5.0, 3.0],
            absorption: [0.5; 6],
            max_reflection_order: 3,
            speed_of_sound: 343.0,
            sample_rate: crate::signal::DEFAULT_SAMPLE_RATE,
        }
    }
}

impl RoomSpec {
    pub fn with_uniform_absorption(mut self, absorption: f64) -> Self {
        self.absorption = [absorption; 6];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Geometry(format!(
                "room dimensions {:?} must be positive",
                self.dimensions
            )));
        }
        if self.absorption.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::Geometry(format!(
                "absorption coefficients {:?} must lie in (0, 1]",
                self.absorption
            )));
        }
        if !(self.speed_of_sound > 0.0) || self.sample_rate == 0 {
            return Err(Error::Geometry(
                "speed of sound and sample rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(&x, &d)| x > 0.0 && x < d)
    }

    fn check_inside(&self, p: &Point3, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "{what} at {p:?} is not strictly inside room {:?}",
                self.dimensions
            )))
        }
    }

    /// Amplitude reflection coefficient of wall `index`.
    fn reflection(&self, index: usize) -> f64 {
        (1.0 - self.absorption[index]).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    mic_positions: Vec<Point3>,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<Point3>) -> Result<Self> {
        if mic_positions.is_empty() {
            return Err(Error::Geometry("array needs at least one microphone".into()));
        }
        for (i, a) in mic_positions.iter().enumerate() {
            for b in &mic_positions[i + 1..] {
                if distance(a, b) < 1e-9 {
                    return Err(Error::Geometry(format!("duplicate microphone at {a:?}")));
                }
            }
        }
        Ok(Self { mic_positions })
    }

    /// `ring` microphones evenly spaced on a horizontal circle, optionally with one at the center.
    pub fn circular(center: Point3, radius: f64, ring: usize, with_center: bool) -> Result<Self> {
        let mut mics = Vec::with_capacity(ring + 1);
        if with_center {
            mics.push(center);
        }
        for k in 0..ring {
            let phi = 2.0 * PI * k as f64 / ring as f64;
            mics.push([
                center[0] + radius * phi.cos(),
                center[1] + radius * phi.sin(),
                center[2],
            ]);
        }
        Self::new(mics)
    }

    /// Seven microphones: center plus six on a 4.25 cm circle.
    pub fn default_circular(center: Point3) -> Self {
        Self::circular(center, 0.0425, 6, true).expect("fixed layout is valid")
    }

    pub fn positions(&self) -> &[Point3] {
        &self.mic_positions
    }

    pub fn len(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mic_positions.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Image coordinate along one axis and the reflection counts on the
/// near (`0`) and far (`length`) walls.
fn image_axis(index: i64, source: f64, length: f64) -> (f64, u32, u32) {
    let coord = if index % 2 == 0 {
        index as f64 * length + source
    } else {
        (index + 1) as f64 * length - source
    };
    let n = index.unsigned_abs() as u32;
    let (near, far) = if index >= 0 {
        (n / 2, n.div_ceil(2))
    } else {
        (n.div_ceil(2), n / 2)
    };
    (coord, near, far)
}

struct Image {
    position: Point3,
    gain: f64,
}

fn images(room: &RoomSpec, source: &Point3) -> Vec<Image> {
    let order = room.max_reflection_order as i64;
    let beta: Vec<f64> = (0..6).map(|w| room.reflection(w)).collect();
    let mut out = Vec::new();
    for ux in -order..=order {
        for uy in -(order - ux.abs())..=(order - ux.abs()) {
            let rest = order - ux.abs() - uy.abs();
            for uz in -rest..=rest {
                let mut position = [0.0; 3];
                let mut gain = 1.0;
                for (axis, u) in [ux, uy, uz].into_iter().enumerate() {
                    let (coord, near, far) =
                        image_axis(u, source[axis], room.dimensions[axis]);
                    position[axis] = coord;
                    gain *= beta[2 * axis].powi(near as i32) * beta[2 * axis + 1].powi(far as i32);
                }
                if gain > 0.0 {
                    out.push(Image { position, gain });
                }
            }
        }
    }
    out
}

fn windowed_sinc(x: f64) -> f64 {
    let half = SINC_HALF_TAPS as f64 + 1.0;
    if x.abs() >= half {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x / half).cos());
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    window * sinc
}

/// Impulse responses from `source` to every microphone.
///
/// Each image contributes `gain / (4 pi d)` at delay `d / c * fs` samples,
/// placed with an 81-tap Hann-windowed sinc. The response length covers the
/// latest image with nonzero gain.
pub fn compute_rir(room: &RoomSpec, source: &Point3, mics: &ArrayGeometry) -> Result<Vec<Vec<f64>>> {
    room.validate()?;
    room.check_inside(source, "source")?;
    for m in mics.positions() {
        room.check_inside(m, "microphone")?;
    }
    let fs = room.sample_rate as f64;
    let imgs = images(room, source);

    let delays: Vec<Vec<(f64, f64)>> = mics
        .positions()
        .iter()
        .map(|mic| {
            imgs.iter()
                .map(|img| {
                    let d = distance(&img.position, mic).max(1e-3);
                    (d / room.speed_of_sound * fs, img.gain / (4.0 * PI * d))
                })
                .collect()
        })
        .collect();
    let max_delay = delays
        .iter()
        .flatten()
        .map(|&(t, _)| t)
        .fold(0.0f64, f64::max);
    let len = max_delay.round() as usize + SINC_HALF_TAPS as usize + 1;

    let responses = delays
        .into_iter()
        .map(|taps| {
            let mut h = vec![0.0; len];
            for (tau, amp) in taps {
                let center = tau.round() as i64;
                for n in (center - SINC_HALF_TAPS).max(0)..=(center + SINC_HALF_TAPS) {
                    let idx = n as usize;
                    if idx < len {
                        h[idx] += amp * windowed_sinc(n as f64 - tau);
                    }
                }
            }
            h
        })
        .collect();
    Ok(responses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(order: usize, absorption: f64) -> RoomSpec {
        RoomSpec {
            dimensions: [8.0, 6.0, 3.0],
            absorption: [absorption; 6],
            max_reflection_order: order,
            speed_of_sound: 343.0,
            sample_rate: 16_000,
        }
    }

    fn argmax(h: &[f64]) -> usize {
        h.iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn direct_path_delay() {
        // 3.43 m at 343 m/s and 16 kHz is 160 samples
        let mics = ArrayGeometry::new(vec![[1.0, 1.0, 1.5]]).unwrap();
        let h = compute_rir(&room(0, 0.5), &[4.43, 1.0, 1.5], &mics).unwrap();
        assert_eq!(argmax(&h[0]), 160);
        let peak = h[0][160];
        assert!((peak - 1.0 / (4.0 * PI * 3.43)).abs() < 1e-9);
    }

    #[test]
    fn order_zero_has_a_single_region() {
        let mics = ArrayGeometry::default_circular([3.0, 3.0, 1.0]);
        let h = compute_rir(&room(0, 0.3), &[5.0, 4.0, 1.6], &mics).unwrap();
        for resp in &h {
            let nz: Vec<usize> = (0..resp.len()).filter(|&i| resp[i] != 0.0).collect();
            let span = nz.last().unwrap() - nz.first().unwrap();
            assert!(span <= 2 * SINC_HALF_TAPS as usize);
        }
    }

    #[test]
    fn full_absorption_matches_order_zero() {
        let mics = ArrayGeometry::default_circular([3.0, 3.0, 1.0]);
        let src = [5.0, 1.5, 1.2];
        let a = compute_rir(&room(0, 1.0), &src, &mics).unwrap();
        let b = compute_rir(&room(10, 1.0), &src, &mics).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.len(), y.len());
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn energy_decreases_with_absorption() {
        let mics = ArrayGeometry::new(vec![[2.0, 2.5, 1.2]]).unwrap();
        let src = [6.0, 4.0, 1.7];
        let mut last = f64::INFINITY;
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let h = compute_rir(&room(4, alpha), &src, &mics).unwrap();
            let e: f64 = h[0].iter().map(|x| x * x).sum();
            assert!(e <= last + 1e-15, "alpha {alpha}");
            last = e;
        }
    }

    #[test]
    fn rejects_points_outside_room() {
        let mics = ArrayGeometry::new(vec![[1.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(
            compute_rir(&room(1, 0.5), &[9.0, 1.0, 1.0], &mics),
            Err(Error::Geometry(_))
        ));
        let outside = ArrayGeometry::new(vec![[1.0, 1.0, 0.0]]).unwrap();
        assert!(compute_rir(&room(1, 0.5), &[2.0, 1.0, 1.0], &outside).is_err());
    }

    #[test]
    fn image_axis_reflection_counts() {
        assert_eq!(image_axis(0, 1.0, 5.0), (1.0, 0, 0));
        assert_eq!(image_axis(1, 1.0, 5.0), (9.0, 0, 1));
        assert_eq!(image_axis(-1, 1.0, 5.0), (-1.0, 1, 0));
        assert_eq!(image_axis(2, 1.0, 5.0), (11.0, 1, 1));
        assert_eq!(image_axis(-2, 1.0, 5.0), (-9.0, 1, 1));
    }

    #[test]
    fn geometry_rejects_duplicates() {
        assert!(ArrayGeometry::new(vec![]).is_err());
        assert!(ArrayGeometry::new(vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]).is_err());
        assert_eq!(ArrayGeometry::default_circular([1.0, 1.0, 1.0]).len(), 7);
    }
}
