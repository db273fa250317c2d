use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csspipe::metrics::solve_assignment;
use csspipe::separation::{mvdr_weights, spatial_covariance};
use csspipe::signal::{istft, stft, AudioClip, TfMask};
use csspipe::sim::{compute_rir, ArrayGeometry, RoomSpec};

fn noise_clip(channels: usize, len: usize, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    AudioClip::from_channels(&data, 16_000).unwrap()
}

fn bench_stft(c: &mut Criterion) {
    let clip = noise_clip(7, 16_000 * 10, 1);
    c.bench_function("stft 7ch 10s", |b| b.iter(|| stft(black_box(&clip), 512, 256).unwrap()));
    let spec = stft(&clip, 512, 256).unwrap();
    c.bench_function("istft 7ch 10s", |b| b.iter(|| istft(black_box(&spec), clip.len()).unwrap()));
}

fn bench_assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("assignment");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [4usize, 16, 64] {
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| solve_assignment(black_box(cost)))
        });
    }
    group.finish();
}

fn bench_mvdr(c: &mut Criterion) {
    let clip = noise_clip(7, 16_000 * 4, 3);
    let spec = stft(&clip, 512, 256).unwrap();
    let speech = TfMask::constant(spec.frames(), spec.freq_bins(), 0.7);
    let noise = TfMask::constant(spec.frames(), spec.freq_bins(), 0.3);
    c.bench_function("spatial covariance 7ch 4s", |b| {
        b.iter(|| spatial_covariance(black_box(&spec), black_box(&speech)).unwrap())
    });
    let phi_s = spatial_covariance(&spec, &speech).unwrap();
    let phi_n = spatial_covariance(&spec, &noise).unwrap();
    c.bench_function("mvdr weights 7ch", |b| {
        b.iter(|| mvdr_weights(black_box(&phi_s), black_box(&phi_n), 0).unwrap())
    });
}

fn bench_rir(c: &mut Criterion) {
    let mics = ArrayGeometry::default_circular([3.0, 2.5, 1.0]);
    let mut group = c.benchmark_group("rir");
    for order in [1usize, 3, 6] {
        let room = RoomSpec {
            max_reflection_order: order,
            ..RoomSpec::default()
        };
        group.bench_with_input(BenchmarkId::new("order", order), &room, |b, room| {
            b.iter(|| compute_rir(black_box(room), &[1.5, 1.2, 1.6], &mics).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_stft, bench_assignment, bench_mvdr, bench_rir);
criterion_main!(benches);
