//! Wall-clock comparison of the ladder presets with one worker (sequential
//! path) against eight workers (rayon path, when the `parallel` feature is
//! on), plus the temporal row kernels on their own. Timings are
//! informational; the instrumented counters are the real comparison.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qeegnet::instrument::LayerCounters;
use qeegnet::kernels::{conv_scalar, conv_shuffle, padded_len, replicate, xcorr_replicated, xcorr_shuffle, PRESETS};
use qeegnet::{run_inference, synth_trial, synth_weights, StrategyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ladder(c: &mut Criterion) {
    let w = synth_weights(0);
    let x = synth_trial(0, w.input_scale);
    let mut group = c.benchmark_group("ladder");
    group.sample_size(10).measurement_time(Duration::from_secs(3));
    for name in PRESETS {
        for workers in [1, 8] {
            let cfg = StrategyConfig::preset(name).unwrap().with_workers(workers);
            group.bench_with_input(BenchmarkId::new(name, format!("W{workers}")), &cfg, |b, cfg| {
                b.iter(|| run_inference(black_box(&x), &w, cfg).unwrap().logits)
            });
        }
    }
    group.finish();
}

fn temporal_row(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (t, k) = (1125, 64);
    let xpad: Vec<i8> = (0..padded_len(t, k)).map(|_| rng.gen()).collect();
    let w: Vec<i8> = (0..k).map(|_| rng.gen()).collect();
    let w_rev: Vec<i8> = w.iter().rev().copied().collect();
    let reps = replicate(&xpad);
    let x4 = [&reps[0][..], &reps[1][..], &reps[2][..], &reps[3][..]];
    let mut out = vec![0; t];
    let mut group = c.benchmark_group("temporal_row");
    group.bench_function("scalar", |b| {
        b.iter(|| conv_scalar(black_box(&xpad), &w, &mut out, &mut LayerCounters::default()).unwrap())
    });
    group.bench_function("shuffle_forward", |b| {
        b.iter(|| conv_shuffle(black_box(&xpad), &w, &mut out, &mut LayerCounters::default()).unwrap())
    });
    group.bench_function("shuffle_reversed", |b| {
        b.iter(|| xcorr_shuffle(black_box(&xpad), &w_rev, &mut out, &mut LayerCounters::default()).unwrap())
    });
    group.bench_function("replicated", |b| {
        b.iter(|| xcorr_replicated(black_box(x4), &w_rev, &mut out, &mut LayerCounters::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, ladder, temporal_row);
criterion_main!(benches);
