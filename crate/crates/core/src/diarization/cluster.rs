//! Cosine affinity, spectral clustering with eigengap speaker counting, and
//! average-linkage agglomerative clustering.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embed::Embedding;
use crate::error::{Error, Result};

/// Symmetric similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape("affinity matrix must be square".into()));
        }
        let asym = (&values - values.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::Shape(format!("affinity matrix asymmetric by {asym:e}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairwise cosine similarities; the diagonal is exactly 1.
pub fn cosine_affinity(embeddings: &[Embedding]) -> Result<AffinityMatrix> {
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    let mut unit = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(Error::Shape(format!("embedding for {} has dimension {}", e.describe(), e.vector.len())));
        }
        let norm = e.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroVector(e.describe()));
        }
        unit.push(e.vector.iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let n = unit.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let c: f64 = unit[i].iter().zip(&unit[j]).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
            a[(i, j)] = c;
            a[(j, i)] = c;
        }
    }
    Ok(AffinityMatrix { values: a })
}

/// Relabels so labels appear in order of first occurrence: 0, 1, 2, ...
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub max_speakers: usize,
    /// Fraction of each row kept when pruning the affinity.
    pub p_keep: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Clusters whose mutual dissimilarity is below this multiple of their
    /// own spread are merged after k-means; 0 disables merging.
    pub merge_ratio: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            max_speakers: 8,
            p_keep: 0.3,
            seed: 0,
            restarts: 10,
            merge_ratio: MERGE_RATIO,
        }
    }
}

/// Default [`SpectralConfig::merge_ratio`].
pub const MERGE_RATIO: f64 = 6.0;

/// Mean cosine dissimilarity `1 - a` between members of `x` and `y`,
/// excluding the diagonal.
fn mean_dissimilarity(a: &DMatrix<f64>, x: &[usize], y: &[usize]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &i in x {
        for &j in y {
            if i != j {
                sum += 1.0 - a[(i, j)];
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Separation of every cluster pair: between-cluster dissimilarity divided
/// by the larger within-cluster spread. Singleton clusters borrow the
/// largest spread seen among the others.
pub fn cluster_separation(affinity: &AffinityMatrix, labels: &[usize]) -> Vec<(usize, usize, f64)> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let spread: Vec<Option<f64>> = members.iter().map(|m| mean_dissimilarity(&affinity.values, m, m)).collect();
    let fallback = spread.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let mut out = Vec::new();
    for x in 0..k {
        for y in x + 1..k {
            let (Some(between), false) = (
                mean_dissimilarity(&affinity.values, &members[x], &members[y]),
                members[x].is_empty() || members[y].is_empty(),
            ) else {
                continue;
            };
            let within = spread[x].unwrap_or(fallback).max(spread[y].unwrap_or(fallback));
            let ratio = if within > 0.0 { between / within } else { f64::INFINITY };
            out.push((x, y, ratio));
        }
    }
    out
}

/// Repeatedly merges the least separated cluster pair while its separation
/// is below `ratio`.
pub fn merge_unseparated(affinity: &AffinityMatrix, labels: &[usize], ratio: f64) -> Vec<usize> {
    let mut labels = canonical_labels(labels);
    loop {
        let worst = cluster_separation(affinity, &labels)
            .into_iter()
            .min_by(|a, b| a.2.total_cmp(&b.2));
        match worst {
            Some((x, y, r)) if r < ratio => {
                for l in labels.iter_mut() {
                    if *l == y {
                        *l = x;
                    }
                }
                labels = canonical_labels(&labels);
            }
            _ => return labels,
        }
    }
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd iterations from k-means++ seeds; best of `restarts` by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
        while centers.len() < k {
            let d: Vec<f64> = points
                .iter()
                .map(|p| centers.iter().map(|c| squared(p, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let pick = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut idx = n - 1;
                for (i, di) in d.iter().enumerate() {
                    if r < *di {
                        idx = i;
                        break;
                    }
                    r -= di;
                }
                idx
            } else {
                rng.random_range(0..n)
            };
            centers.push(points[pick].clone());
        }
        let mut labels = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let mut arg = 0;
                let mut dmin = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = squared(p, center);
                    if d < dmin {
                        dmin = d;
                        arg = c;
                    }
                }
                if labels[i] != arg {
                    labels[i] = arg;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                for (d, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| squared(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    canonical_labels(&best.expect("at least one restart").1)
}

/// Row-pruned, binarized and max-symmetrized affinity.
pub fn prune_affinity(affinity: &AffinityMatrix, p_keep: f64) -> DMatrix<f64> {
    let n = affinity.len();
    let keep = ((p_keep * n as f64).ceil() as usize).clamp(1, n);
    let mut pruned = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| affinity.values[(i, b)].total_cmp(&affinity.values[(i, a)]).then(a.cmp(&b)));
        for &j in order.iter().take(keep) {
            if affinity.values[(i, j)] > 0.0 {
                pruned[(i, j)] = 1.0;
            }
        }
    }
    let t = pruned.transpose();
    pruned.zip_map(&t, f64::max)
}

/// Ascending eigenvalues and matching eigenvectors (columns) of the
/// normalized Laplacian `I - D^-1/2 A D^-1/2`.
pub fn laplacian_spectrum(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let mut l = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
        }
    }
    let eig: SymmetricEigen<f64, nalgebra::Dyn> = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Number of clusters at the largest gap between consecutive eigenvalues,
/// considering `k = 1..=max_k`.
pub fn eigengap_count(eigenvalues: &[f64], max_k: usize) -> usize {
    let limit = max_k.min(eigenvalues.len().saturating_sub(1));
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=limit {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best.1 + 1e-12 {
            best = (k, gap);
        }
    }
    best.0
}

/// Spectral clustering on a cosine affinity; the speaker count comes from
/// the eigengap. Returns `(labels, k)`.
pub fn spectral_cluster(affinity: &AffinityMatrix, cfg: &SpectralConfig) -> Result<(Vec<usize>, usize)> {
    if cfg.max_speakers == 0 {
        return Err(Error::Config("max_speakers must be at least 1".into()));
    }
    let n = affinity.len();
    if n == 0 {
        return Ok((Vec::new(), 0));
    }
    if n == 1 {
        return Ok((vec![0], 1));
    }
    let off_diag_positive = (0..n).any(|i| (0..n).any(|j| i != j && affinity.values[(i, j)] > 0.0));
    if !off_diag_positive {
        let labels: Vec<usize> = (0..n).map(|i| i.min(cfg.max_speakers - 1)).collect();
        let k = n.min(cfg.max_speakers);
        return Ok((labels, k));
    }
    let pruned = prune_affinity(affinity, cfg.p_keep);
    let (values, vectors) = laplacian_spectrum(&pruned);
    let k = eigengap_count(&values, cfg.max_speakers);
    if k == 1 {
        return Ok((vec![0; n], 1));
    }
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| vectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 { row.iter().map(|v| v / norm).collect() } else { row }
        })
        .collect();
    let mut labels = kmeans(&points, k, cfg.seed, cfg.restarts);
    if cfg.merge_ratio > 0.0 {
        labels = merge_unseparated(affinity, &labels, cfg.merge_ratio);
    }
    let found = labels.iter().max().map_or(0, |m| m + 1);
    Ok((labels, found))
}

/// Average-linkage agglomeration; stops when the most similar pair of
/// clusters falls below `threshold`.
pub fn ahc_cluster(affinity: &AffinityMatrix, threshold: f64) -> Result<Vec<usize>> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("AHC threshold {threshold} outside [-1, 1]")));
    }
    let n = affinity.len();
    let mut sim = affinity.values.clone();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && best.is_none_or(|(_, _, s)| sim[(i, j)] > s) {
                    best = Some((i, j, sim[(i, j)]));
                }
            }
        }
        let Some((a, b, s)) = best else { break };
        if s < threshold {
            break;
        }
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if alive[k] && k != a && k != b {
                let v = (na * sim[(a, k)] + nb * sim[(b, k)]) / (na + nb);
                sim[(a, k)] = v;
                sim[(k, a)] = v;
            }
        }
        size[a] += size[b];
        alive[b] = false;
        owner.iter_mut().filter(|o| **o == b).for_each(|o| *o = a);
    }
    Ok(canonical_labels(&owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: Vec<f64>) -> Embedding {
        Embedding { vector: v, stream: 0, start: 0.0, end: 1.0 }
    }

    fn blocks(sizes: &[usize]) -> AffinityMatrix {
        let n: usize = sizes.iter().sum();
        let mut id = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            id.extend(std::iter::repeat_n(b, s));
        }
        AffinityMatrix::new(DMatrix::from_fn(n, n, |i, j| if id[i] == id[j] { 1.0 } else { 0.0 })).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = cosine_affinity(&[emb(vec![1.0, 0.0]), emb(vec![0.0, 2.0]), emb(vec![3.0, 0.0]), emb(vec![1.0, 1.0])]).unwrap();
        assert_eq!(a.values[(0, 1)], 0.0);
        assert!((a.values[(0, 2)] - 1.0).abs() < 1e-12);
        assert!((a.values[(0, 3)] - 0.70710678).abs() < 1e-6);
        assert_eq!(a.values[(3, 3)], 1.0);
    }

    #[test]
    fn zero_vector_named() {
        let e = Embedding { vector: vec![0.0, 0.0], stream: 1, start: 2.0, end: 3.5 };
        match cosine_affinity(&[emb(vec![1.0, 0.0]), e]) {
            Err(Error::ZeroVector(s)) => assert!(s.contains("stream 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_ideal_blocks() {
        let (labels, k) = spectral_cluster(&blocks(&[4, 3, 5]), &SpectralConfig::default()).unwrap();
        assert_eq!(k, 3);
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn single_block() {
        let (labels, k) = spectral_cluster(&blocks(&[6]), &SpectralConfig::default()).unwrap();
        assert_eq!(k, 1);
        assert!(labels.iter().all(|l| *l == 0));
    }

    #[test]
    fn all_zero_affinity_gives_singletons() {
        let a = AffinityMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let cfg = SpectralConfig { max_speakers: 3, ..SpectralConfig::default() };
        let (labels, k) = spectral_cluster(&a, &cfg).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 2]);
        assert_eq!(k, 3);
    }

    fn gaussian_clusters(seed: u64) -> (Vec<Embedding>, Vec<usize>) {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.03).unwrap();
        let dim = 16;
        let mut out = Vec::new();
        let mut truth = Vec::new();
        for c in 0..4 {
            // orthogonal centres
            let centre: Vec<f64> = (0..dim).map(|d| if d / 4 == c { 0.5 } else { 0.0 }).collect();
            for _ in 0..10 {
                out.push(emb(centre.iter().map(|v| v + noise.sample(&mut rng)).collect()));
                truth.push(c);
            }
        }
        (out, truth)
    }

    #[test]
    fn four_gaussian_clusters_are_recovered() {
        let (embs, truth) = gaussian_clusters(2);
        let a = cosine_affinity(&embs).unwrap();
        for i in 0..embs.len() {
            for j in 0..embs.len() {
                let v = a.values[(i, j)];
                if truth[i] == truth[j] {
                    assert!(v >= 0.9);
                } else {
                    assert!(v <= 0.3);
                }
            }
        }
        let (labels, k) = spectral_cluster(&a, &SpectralConfig::default()).unwrap();
        assert_eq!(k, 4);
        assert_eq!(labels, canonical_labels(&truth));
    }

    #[test]
    fn unseparated_clusters_merge() {
        // one tight group split in two, plus a distant group
        let mut v = DMatrix::from_element(6, 6, 0.2);
        for i in 0..4 {
            for j in 0..4 {
                v[(i, j)] = if (i < 2) == (j < 2) { 0.99 } else { 0.985 };
            }
        }
        for i in 4..6 {
            for j in 4..6 {
                v[(i, j)] = 0.98;
            }
        }
        for i in 0..6 {
            v[(i, i)] = 1.0;
        }
        let a = AffinityMatrix::new(v).unwrap();
        assert_eq!(merge_unseparated(&a, &[0, 0, 1, 1, 2, 2], MERGE_RATIO), vec![0, 0, 0, 0, 1, 1]);
        let sep = cluster_separation(&a, &[0, 0, 0, 0, 1, 1]);
        assert_eq!(sep.len(), 1);
        assert!(sep[0].2 > 20.0);
    }

    #[test]
    fn ahc_cases() {
        let two = blocks(&[3, 2]);
        assert_eq!(ahc_cluster(&two, 0.5).unwrap(), vec![0, 0, 0, 1, 1]);
        assert_eq!(ahc_cluster(&two, -1.0).unwrap(), vec![0; 5]);
        let a = cosine_affinity(&[emb(vec![1.0, 0.1]), emb(vec![0.2, 1.0]), emb(vec![1.0, 1.0])]).unwrap();
        assert_eq!(ahc_cluster(&a, 0.999).unwrap(), vec![0, 1, 2]);
        assert!(ahc_cluster(&a, 1.5).is_err());
    }

    #[test]
    fn scaling_embeddings_keeps_labels() {
        let (embs, _) = gaussian_clusters(5);
        let scaled: Vec<Embedding> = embs.iter().map(|e| emb(e.vector.iter().map(|v| v * 7.5).collect())).collect();
        let a = cosine_affinity(&embs).unwrap();
        let b = cosine_affinity(&scaled).unwrap();
        let cfg = SpectralConfig::default();
        assert_eq!(spectral_cluster(&a, &cfg).unwrap(), spectral_cluster(&b, &cfg).unwrap());
        assert_eq!(ahc_cluster(&a, 0.5).unwrap(), ahc_cluster(&b, 0.5).unwrap());
    }

    proptest! {
        #[test]
        fn eigengap_finds_block_count(sizes in proptest::collection::vec(2usize..7, 1..6)) {
            let (labels, k) = spectral_cluster(&blocks(&sizes), &SpectralConfig::default()).unwrap();
            prop_assert_eq!(k, sizes.len());
            let mut expected = Vec::new();
            for (b, &s) in sizes.iter().enumerate() {
                expected.extend(std::iter::repeat_n(b, s));
            }
            prop_assert_eq!(labels, expected);
        }
    }
}
