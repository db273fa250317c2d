//! Oracle track mapping: assigns separated streams to reference speakers
//! block by block, for scoring.

use crate::error::{Error, Result};
use crate::metrics::solve_assignment;
use crate::signal::{stft, AudioClip};

/// Default mapping block, the common factor of the supported chunk sizes.
pub const DEFAULT_TRACK_BLOCK: f64 = 0.8;
/// Most speakers considered active within one block.
pub const MAX_ACTIVE_PER_BLOCK: usize = 2;
/// A speaker is active in a block when its block energy is within this
/// factor of its loudest block.
const ACTIVE_RELATIVE_ENERGY: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackMap {
    /// One mono track per reference speaker.
    pub tracks: Vec<AudioClip>,
    /// `assignments[b][k]` is the stream routed to speaker `k` in block `b`.
    pub assignments: Vec<Vec<Option<usize>>>,
}

fn block_magnitude(x: &[f64], fs: u32) -> Result<ndarray::Array2<f64>> {
    let clip = AudioClip::mono(x.to_vec(), fs)?;
    let frame = if x.len() >= 512 { 512 } else { 64 };
    Ok(stft(&clip, frame, frame / 2)?.magnitude(0))
}

/// Builds one track per reference speaker by copying, for every block, the
/// stream closest in magnitude-STFT distance to each of the (at most two)
/// active speakers. Inactive or unassigned speakers get silence.
pub fn oracle_track_map(streams: &[AudioClip], references: &[AudioClip], block: f64) -> Result<TrackMap> {
    let first = streams
        .first()
        .ok_or_else(|| Error::Shape("no streams to map".into()))?;
    if references.is_empty() {
        return Err(Error::Shape("no reference tracks".into()));
    }
    let fs = first.sample_rate();
    let len = first.len();
    if streams.iter().chain(references).any(|c| c.len() != len || c.channels() != 1 || c.sample_rate() != fs) {
        return Err(Error::Shape("streams and references must be mono with equal length and rate".into()));
    }
    if !(block > 0.0) {
        return Err(Error::Config(format!("block length {block} must be positive")));
    }
    let block_len = ((block * fs as f64).round() as usize).max(1);
    let num_blocks = len.div_ceil(block_len);
    let block_range = |b: usize| (b * block_len, ((b + 1) * block_len).min(len));

    let energies: Vec<Vec<f64>> = references
        .iter()
        .map(|r| {
            let x = r.channel(0);
            (0..num_blocks)
                .map(|b| {
                    let (s, e) = block_range(b);
                    x.slice(ndarray::s![s..e]).iter().map(|v| v * v).sum()
                })
                .collect()
        })
        .collect();
    let peaks: Vec<f64> = energies.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect();

    let mut tracks = vec![vec![0.0; len]; references.len()];
    let mut assignments = Vec::with_capacity(num_blocks);
    for b in 0..num_blocks {
        let (s, e) = block_range(b);
        let mut active: Vec<usize> = (0..references.len())
            .filter(|&k| energies[k][b] > 0.0 && energies[k][b] >= ACTIVE_RELATIVE_ENERGY * peaks[k])
            .collect();
        active.sort_by(|&a, &c| energies[c][b].total_cmp(&energies[a][b]).then(a.cmp(&c)));
        active.truncate(MAX_ACTIVE_PER_BLOCK);
        active.sort_unstable();

        let mut row = vec![None; references.len()];
        if !active.is_empty() {
            let seg = |c: &AudioClip| c.channel(0).slice(ndarray::s![s..e]).to_vec();
            let ref_mag: Vec<_> = active
                .iter()
                .map(|&k| block_magnitude(&seg(&references[k]), fs))
                .collect::<Result<_>>()?;
            let str_mag: Vec<_> = streams.iter().map(|c| block_magnitude(&seg(c), fs)).collect::<Result<_>>()?;
            let cost: Vec<Vec<f64>> = ref_mag
                .iter()
                .map(|r| {
                    str_mag
                        .iter()
                        .map(|y| r.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum())
                        .collect()
                })
                .collect();
            let assignment = solve_assignment(&cost);
            for &(i, j) in &assignment.mapping {
                let k = active[i];
                row[k] = Some(j);
                let src = streams[j].channel(0);
                tracks[k][s..e].iter_mut().zip(src.slice(ndarray::s![s..e])).for_each(|(d, v)| *d = *v);
            }
        }
        assignments.push(row);
    }
    let tracks = tracks
        .into_iter()
        .map(|t| AudioClip::mono(t, fs))
        .collect::<Result<_>>()?;
    Ok(TrackMap { tracks, assignments })
}
