//! Permutation tracking across chunks.
//!
//! Both stitchers walk the chunks left to right. For each adjacent pair they
//! score every ordering of the right chunk's streams against the already
//! aligned left chunk over the shared region and keep the cheapest one.

use ndarray::{s, Array2, ArrayView2};

use super::estimator::ChunkMasks;
use crate::error::{Error, Result};
use crate::signal::{stft, AudioClip, TfMask};

/// All orderings of `0..n`, lexicographic, identity first.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Minimizes `sum_k cost[k][p[k]]` over permutations `p`. The flag is set when
/// the spread between best and worst total is within `tie_tol` (relative),
/// i.e. the costs cannot tell the orderings apart.
pub fn best_permutation(cost: &[Vec<f64>], tie_tol: f64) -> (Vec<usize>, bool) {
    let n = cost.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut worst = f64::NEG_INFINITY;
    for p in permutations(n) {
        let total: f64 = p.iter().enumerate().map(|(k, &j)| cost[k][j]).sum();
        worst = worst.max(total);
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, p));
        }
    }
    let (b, p) = best.unwrap_or((0.0, Vec::new()));
    let ambiguous = worst - b <= tie_tol * (1.0 + b.abs());
    (p, ambiguous)
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Stitched meeting-wide masks and the per-chunk permutations that produced
/// them. `permutations[c][k]` is the chunk-local stream placed on global
/// stream `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedMasks {
    pub speech: Vec<TfMask>,
    pub noise: TfMask,
    pub permutations: Vec<Vec<usize>>,
}

fn l1(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean speech-mask value below which an overlap region counts as silent.
const SILENT_MASK_MEAN: f64 = 1e-3;

/// Glues chunk masks into meeting-wide masks. `frame_bounds[c]` is the global
/// frame range of chunk `c`. Overlapping frames are averaged.
pub fn stitch_masks(
    chunks: &[ChunkMasks],
    frame_bounds: &[(usize, usize)],
    total_frames: usize,
) -> Result<StitchedMasks> {
    let first = chunks
        .first()
        .ok_or_else(|| Error::Shape("no chunks to stitch".into()))?;
    if chunks.len() != frame_bounds.len() {
        return Err(Error::Shape(format!(
            "{} chunks but {} chunk bounds",
            chunks.len(),
            frame_bounds.len()
        )));
    }
    let n = first.num_streams();
    let bins = first.masks[0].freq_bins();
    for (c, (ch, &(s, e))) in chunks.iter().zip(frame_bounds).enumerate() {
        if ch.num_streams() != n {
            return Err(Error::Shape(format!(
                "chunk {c} has {} streams, expected {n}",
                ch.num_streams()
            )));
        }
        if e > total_frames || ch.masks.iter().any(|m| m.frames() != e - s || m.freq_bins() != bins) {
            return Err(Error::Shape(format!("chunk {c} masks do not match frames {s}..{e}")));
        }
    }

    let mut perms = vec![identity(n)];
    for c in 1..chunks.len() {
        let (ps, pe) = frame_bounds[c - 1];
        let (cs, ce) = frame_bounds[c];
        let (ov_s, ov_e) = (cs.max(ps), pe.min(ce));
        let (prev_rows, cur_rows) = if ov_e > ov_s {
            ((ov_s - ps, ov_e - ps), (ov_s - cs, ov_e - cs))
        } else {
            let pl = (pe - ps).max(1);
            ((pl - 1, pl), (0, 1))
        };
        let prev = &chunks[c - 1];
        let cur = &chunks[c];
        let prev_perm = &perms[c - 1];
        let view = |m: &TfMask, r: (usize, usize)| {
            let hi = r.1.min(m.frames());
            m.values().slice(s![r.0.min(hi)..hi, ..]).to_owned()
        };
        let prev_regions: Vec<Array2<f64>> = prev_perm.iter().map(|&j| view(&prev.masks[j], prev_rows)).collect();
        let cur_regions: Vec<Array2<f64>> = cur.speech().iter().map(|m| view(m, cur_rows)).collect();
        let cost: Vec<Vec<f64>> = prev_regions
            .iter()
            .map(|a| cur_regions.iter().map(|b| l1(a.view(), b.view())).collect())
            .collect();
        let cells = (prev_regions.first().map_or(0, |a| a.len()) * n).max(1) as f64;
        let mass: f64 = prev_regions.iter().chain(&cur_regions).map(|a| a.sum()).sum::<f64>() / (2.0 * cells);
        let (p, ambiguous) = best_permutation(&cost, 1e-9);
        if ambiguous || mass < SILENT_MASK_MEAN {
            log::warn!("chunk {c}: overlap region carries no usable speech, keeping stream order");
            perms.push(identity(n));
        } else {
            perms.push(p);
        }
    }

    let mut sums = vec![Array2::<f64>::zeros((total_frames, bins)); n + 1];
    let mut counts = vec![0u32; total_frames];
    for ((ch, &(s, e)), perm) in chunks.iter().zip(frame_bounds).zip(&perms) {
        for (k, &j) in perm.iter().enumerate() {
            let mut dst = sums[k].slice_mut(s![s..e, ..]);
            dst += ch.masks[j].values();
        }
        let mut dst = sums[n].slice_mut(s![s..e, ..]);
        dst += ch.noise().values();
        counts[s..e].iter_mut().for_each(|c| *c += 1);
    }
    let mut masks: Vec<TfMask> = sums
        .into_iter()
        .map(|mut m| {
            for (t, mut row) in m.outer_iter_mut().enumerate() {
                if counts[t] > 1 {
                    row /= counts[t] as f64;
                }
            }
            TfMask::clamped(m)
        })
        .collect();
    let noise = masks.pop().expect("noise mask");
    Ok(StitchedMasks {
        speech: masks,
        noise,
        permutations: perms,
    })
}

/// Stitched waveforms and the per-chunk permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedSignals {
    pub streams: Vec<AudioClip>,
    pub permutations: Vec<Vec<usize>>,
}

const COST_FRAME: usize = 512;
const COST_HOP: usize = 256;

fn magnitude_mse(a: &[f64], b: &[f64], sample_rate: u32) -> Result<f64> {
    let sa = stft(&AudioClip::mono(a.to_vec(), sample_rate)?, COST_FRAME, COST_HOP)?.magnitude(0);
    let sb = stft(&AudioClip::mono(b.to_vec(), sample_rate)?, COST_FRAME, COST_HOP)?.magnitude(0);
    let n = sa.len().max(1) as f64;
    Ok(sa.iter().zip(sb.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// Glues per-chunk mono stream waveforms. `chunk_signals[c][j]` is stream `j`
/// of chunk `c`, covering samples `sample_bounds[c]`. The permutation cost is
/// the mean squared error between magnitude STFTs of the overlapping
/// segments; overlapping samples are cross-faded with linear ramps.
pub fn stitch_signals(
    chunk_signals: &[Vec<AudioClip>],
    sample_bounds: &[(usize, usize)],
    total_len: usize,
) -> Result<StitchedSignals> {
    let first = chunk_signals
        .first()
        .ok_or_else(|| Error::Shape("no chunks to stitch".into()))?;
    if chunk_signals.len() != sample_bounds.len() {
        return Err(Error::Shape(format!(
            "{} chunks but {} chunk bounds",
            chunk_signals.len(),
            sample_bounds.len()
        )));
    }
    let n = first.len();
    let fs = first
        .first()
        .ok_or_else(|| Error::Shape("chunk has no streams".into()))?
        .sample_rate();
    for (c, (streams, &(s, e))) in chunk_signals.iter().zip(sample_bounds).enumerate() {
        if streams.len() != n {
            return Err(Error::Shape(format!("chunk {c} has {} streams, expected {n}", streams.len())));
        }
        if e > total_len || streams.iter().any(|x| x.len() != e - s || x.channels() != 1 || x.sample_rate() != fs) {
            return Err(Error::Shape(format!("chunk {c} signals do not match samples {s}..{e}")));
        }
    }

    let mut perms = vec![identity(n)];
    for c in 1..chunk_signals.len() {
        let (ps, pe) = sample_bounds[c - 1];
        let (cs, ce) = sample_bounds[c];
        let (ov_s, ov_e) = (cs.max(ps), pe.min(ce));
        let (prev_rng, cur_rng) = if ov_e > ov_s {
            ((ov_s - ps, ov_e - ps), (ov_s - cs, ov_e - cs))
        } else {
            let pl = pe - ps;
            let w = COST_FRAME.min(pl).min(ce - cs);
            ((pl - w, pl), (0, w))
        };
        if prev_rng.1 == prev_rng.0 {
            perms.push(identity(n));
            continue;
        }
        let prev_perm = perms[c - 1].clone();
        let prev: Vec<Vec<f64>> = prev_perm
            .iter()
            .map(|&j| chunk_signals[c - 1][j].channel(0).slice(s![prev_rng.0..prev_rng.1]).to_vec())
            .collect();
        let cur: Vec<Vec<f64>> = chunk_signals[c]
            .iter()
            .map(|x| x.channel(0).slice(s![cur_rng.0..cur_rng.1]).to_vec())
            .collect();
        let energy: f64 = prev.iter().chain(&cur).flatten().map(|v| v * v).sum();
        let mut cost = vec![vec![0.0; n]; n];
        for (k, a) in prev.iter().enumerate() {
            for (j, b) in cur.iter().enumerate() {
                cost[k][j] = magnitude_mse(a, b, fs)?;
            }
        }
        let (p, ambiguous) = best_permutation(&cost, 1e-9);
        if ambiguous || energy <= f64::MIN_POSITIVE {
            log::warn!("chunk {c}: overlap region is silent, keeping stream order");
            perms.push(identity(n));
        } else {
            perms.push(p);
        }
    }

    // trapezoid weights: rise over the overlap with the previous chunk, fall
    // over the overlap with the next one
    let weights: Vec<Vec<f64>> = (0..sample_bounds.len())
        .map(|c| {
            let (s, e) = sample_bounds[c];
            let rise = if c > 0 { sample_bounds[c - 1].1.saturating_sub(s).min(e - s) } else { 0 };
            let fall_start = if c + 1 < sample_bounds.len() { sample_bounds[c + 1].0.clamp(s, e) } else { e };
            let fall = e - fall_start;
            (0..e - s)
                .map(|i| {
                    let up = if i < rise { (i + 1) as f64 / (rise + 1) as f64 } else { 1.0 };
                    let down = if i + fall >= e - s {
                        (e - s - i) as f64 / (fall + 1) as f64
                    } else {
                        1.0
                    };
                    up.min(down)
                })
                .collect()
        })
        .collect();
    let mut out = vec![vec![0.0; total_len]; n];
    let mut norm = vec![0.0; total_len];
    for (c, perm) in perms.iter().enumerate() {
        let (s, _) = sample_bounds[c];
        for (k, &j) in perm.iter().enumerate() {
            let x = chunk_signals[c][j].channel(0);
            for (i, (&v, &w)) in x.iter().zip(&weights[c]).enumerate() {
                out[k][s + i] += w * v;
            }
        }
        for (i, &w) in weights[c].iter().enumerate() {
            norm[s + i] += w;
        }
    }
    let streams = out
        .into_iter()
        .map(|mut x| {
            for (v, &w) in x.iter_mut().zip(&norm) {
                if w > 0.0 {
                    *v /= w;
                }
            }
            AudioClip::mono(x, fs)
        })
        .collect::<Result<_>>()?;
    Ok(StitchedSignals {
        streams,
        permutations: perms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn permutation_listing() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(3)[0], vec![0, 1, 2]);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn two_by_two_argmin() {
        let (p, amb) = best_permutation(&[vec![0.1, 5.0], vec![5.0, 0.1]], 1e-9);
        assert_eq!(p, vec![0, 1]);
        assert!(!amb);
        let (p, _) = best_permutation(&[vec![5.0, 0.1], vec![0.1, 5.0]], 1e-9);
        assert_eq!(p, vec![1, 0]);
        let (_, amb) = best_permutation(&[vec![1.0, 1.0], vec![1.0, 1.0]], 1e-9);
        assert!(amb);
    }

    fn ramp_masks(frames: usize, bins: usize) -> (TfMask, TfMask, TfMask) {
        let a = Array2::from_shape_fn((frames, bins), |(t, _)| if t % 7 < 4 { 0.9 } else { 0.1 });
        let b = a.mapv(|v| 1.0 - v - 0.05);
        let n = Array2::from_elem((frames, bins), 0.05);
        (TfMask::clamped(a), TfMask::clamped(b), TfMask::clamped(n))
    }

    fn cut(total: &[TfMask], noise: &TfMask, bounds: &[(usize, usize)], swap: &[bool]) -> Vec<ChunkMasks> {
        bounds
            .iter()
            .enumerate()
            .map(|(c, &(s, e))| {
                let mut masks: Vec<TfMask> = total.iter().map(|m| m.frame_range(s, e)).collect();
                if swap[c] {
                    masks.swap(0, 1);
                }
                masks.push(noise.frame_range(s, e));
                ChunkMasks { chunk_index: c, masks }
            })
            .collect()
    }

    #[test]
    fn aligned_chunks_keep_identity() {
        let (a, b, n) = ramp_masks(40, 5);
        let bounds = [(0, 20), (10, 30), (20, 40)];
        let chunks = cut(&[a.clone(), b.clone()], &n, &bounds, &[false, false, false]);
        let st = stitch_masks(&chunks, &bounds, 40).unwrap();
        assert!(st.permutations.iter().all(|p| p == &vec![0, 1]));
        assert_eq!(st.speech[0], a);
        assert_eq!(st.speech[1], b);
        assert_eq!(st.noise, n);
    }

    #[test]
    fn swapped_chunk_is_undone() {
        let (a, b, n) = ramp_masks(40, 5);
        let bounds = [(0, 20), (10, 30), (20, 40)];
        let chunks = cut(&[a.clone(), b.clone()], &n, &bounds, &[false, true, false]);
        let st = stitch_masks(&chunks, &bounds, 40).unwrap();
        assert_eq!(st.permutations, vec![vec![0, 1], vec![1, 0], vec![0, 1]]);
        assert_eq!(st.speech[0], a);
    }

    #[test]
    fn zero_overlap_uses_edge_frames() {
        let (a, b, n) = ramp_masks(40, 5);
        let bounds = [(0, 20), (20, 40)];
        let chunks = cut(&[a.clone(), b], &n, &bounds, &[false, true]);
        let st = stitch_masks(&chunks, &bounds, 40).unwrap();
        assert_eq!(st.permutations[1], vec![1, 0]);
        assert_eq!(st.speech[0], a);
    }

    #[test]
    fn silent_overlap_keeps_order() {
        let z = TfMask::constant(30, 4, 0.0);
        let bounds = [(0, 20), (10, 30)];
        let chunks = cut(&[z.clone(), z.clone()], &z, &bounds, &[false, false]);
        let st = stitch_masks(&chunks, &bounds, 30).unwrap();
        assert_eq!(st.permutations[1], vec![0, 1]);
    }

    fn tone(freq: f64, len: usize) -> Vec<f64> {
        (0..len).map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / 16_000.0).sin()).collect()
    }

    #[test]
    fn signal_stitcher_detects_swap_and_crossfades() {
        let total = 16_000 * 3;
        let x = tone(300.0, total);
        let y: Vec<f64> = tone(2100.0, total).iter().map(|v| 0.5 * v).collect();
        let bounds = [(0, 32_000), (16_000, 48_000)];
        let chunks: Vec<Vec<AudioClip>> = bounds
            .iter()
            .enumerate()
            .map(|(c, &(s, e))| {
                let mut v = vec![
                    AudioClip::mono(x[s..e].to_vec(), 16_000).unwrap(),
                    AudioClip::mono(y[s..e].to_vec(), 16_000).unwrap(),
                ];
                if c == 1 {
                    v.swap(0, 1);
                }
                v
            })
            .collect();
        let st = stitch_signals(&chunks, &bounds, total).unwrap();
        assert_eq!(st.permutations[1], vec![1, 0]);
        let err: f64 = st.streams[0].channel(0).iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn signal_stitcher_silent_overlap_is_identity() {
        let z = AudioClip::silence(1, 1000, 16_000);
        let chunks = vec![vec![z.clone(), z.clone()], vec![z.clone(), z]];
        let st = stitch_signals(&chunks, &[(0, 1000), (500, 1500)], 1500).unwrap();
        assert_eq!(st.permutations[1], vec![0, 1]);
    }
}
