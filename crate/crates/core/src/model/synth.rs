//! Deterministic pseudo-random weights and pseudo-EEG trials.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BnStage, Layout, ModelWeights, QTensor, QWeights, Scale, QEEGNET};
use crate::quant::RequantParams;

const SAMPLE_RATE: f64 = 250.0;
/// Typical standard deviation, in integer units, targeted at each activation.
const TARGET_STD: f64 = 32.0;
/// Expected standard deviation of a synthetic trial in integer units.
const INPUT_STD: f64 = 30.0;
/// Synthetic trials stay inside this integer range.
pub const INPUT_LIMIT: f64 = 100.0;

fn uniform_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize, layout: Layout, limit: i8) -> QWeights {
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    QWeights { shape: [rows, cols], layout, data, scale: Scale::pow2(-7) }
}

fn row_norm(w: &QWeights, r: usize) -> f64 {
    w.row(r).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt().max(1.0)
}

fn divisor(v: f64) -> i32 {
    (v.round() as i32).max(1)
}

/// Windowed sinusoids: each temporal filter is a band-pass kernel.
fn temporal_filters(rng: &mut ChaCha8Rng, filters: usize, taps: usize) -> QWeights {
    let mut data = Vec::with_capacity(filters * taps);
    for _ in 0..filters {
        let freq = rng.gen_range(4.0..32.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let row: Vec<f64> = (0..taps)
            .map(|k| {
                let hann = 0.5 - 0.5 * (2.0 * PI * k as f64 / (taps - 1) as f64).cos();
                hann * (2.0 * PI * freq * k as f64 / SAMPLE_RATE + phase).sin() + rng.gen_range(-0.08..0.08)
            })
            .collect();
        let peak = row.iter().fold(0f64, |m, v| m.max(v.abs()));
        data.extend(row.iter().map(|v| (v / peak * 100.0).round() as i8));
    }
    QWeights { shape: [filters, taps], layout: Layout::TimeInnermost, data, scale: Scale::pow2(-7) }
}

/// Weights with realistic magnitudes: every batch-norm divisor is sized so
/// that its stage lands near [`TARGET_STD`] on synthetic trials.
///
/// All scales are powers of two.
pub fn synth_weights(seed: u64) -> ModelWeights {
    let shape = QEEGNET;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_fee6);
    let f = shape.spatial_filters();

    let temporal = temporal_filters(&mut rng, shape.temporal_filters, shape.temporal_kernel);
    let temporal_bn = BnStage {
        params: (0..shape.temporal_filters)
            .map(|r| {
                let d = divisor(INPUT_STD * row_norm(&temporal, r) / TARGET_STD);
                RequantParams { bias: rng.gen_range(-4 * d..=4 * d), divisor: d }
            })
            .collect(),
        out_scale: Scale::pow2(-3),
    };

    let spatial = uniform_weights(&mut rng, f, shape.channels, Layout::SpaceInnermost, 64);
    let spatial_bn = BnStage {
        params: (0..f)
            .map(|o| {
                let d = divisor(row_norm(&spatial, o) / 1.25);
                RequantParams { bias: rng.gen_range(-12 * d..=6 * d), divisor: d }
            })
            .collect(),
        out_scale: Scale::pow2(-4),
    };

    let depthwise = uniform_weights(&mut rng, f, shape.separable_kernel, Layout::TimeInnermost, 64);
    let pointwise = uniform_weights(&mut rng, f, f, Layout::ChannelInnermost, 64);
    let separable_bn = BnStage {
        params: (0..f)
            .map(|o| {
                let d = divisor(0.6 * TARGET_STD * row_norm(&pointwise, o) / TARGET_STD);
                RequantParams { bias: rng.gen_range(-10 * d..=10 * d), divisor: d }
            })
            .collect(),
        out_scale: Scale::pow2(-4),
    };
    let fc = uniform_weights(&mut rng, shape.classes, shape.flat(), Layout::TimeInnermost, 64);
    let fc_bias = (0..shape.classes).map(|_| rng.gen_range(-2000..=2000)).collect();

    ModelWeights {
        shape,
        input_scale: Scale::pow2(-2),
        temporal,
        temporal_bn,
        spatial,
        spatial_bn,
        depthwise,
        depthwise_shift: 7,
        pointwise,
        separable_bn,
        fc,
        fc_bias,
        calibration: Vec::new(),
    }
}

/// Band-limited pseudo-EEG in real units: a few shared oscillatory sources
/// (4-30 Hz) mixed into every channel plus smoothed channel noise.
///
/// Quantizing with `scale` keeps every sample within [`INPUT_LIMIT`].
pub fn synth_signal(seed: u64, scale: Scale) -> Vec<f64> {
    let (c, t) = (QEEGNET.channels, QEEGNET.samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a1a1);
    let sources: Vec<(f64, f64, f64)> =
        (0..5).map(|_| (rng.gen_range(4.0..30.0), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.4..1.0))).collect();
    let mut out = Vec::with_capacity(c * t);
    for _ in 0..c {
        let mix: Vec<f64> = sources.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut noise = 0.0;
        for n in 0..t {
            let time = n as f64 / SAMPLE_RATE;
            let s: f64 = sources.iter().zip(&mix).map(|(&(fr, ph, a), m)| m * a * (2.0 * PI * fr * time + ph).sin()).sum();
            noise = 0.7 * noise + 0.3 * rng.gen_range(-1.0..1.0);
            let q = (INPUT_STD * (s + 0.8 * noise)).clamp(-INPUT_LIMIT, INPUT_LIMIT);
            out.push(q * scale.value());
        }
    }
    out
}

/// [`synth_signal`] quantized onto the input grid.
pub fn synth_trial(seed: u64, scale: Scale) -> QTensor {
    let q: Vec<i8> = synth_signal(seed, scale).iter().map(|&x| (x / scale.value()).round().clamp(-128.0, 127.0) as i8).collect();
    QTensor::from_dense(&[QEEGNET.channels, QEEGNET.samples], Layout::TimeInnermost, &q, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::param_count;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_weights(0), synth_weights(0));
        assert_ne!(synth_weights(0), synth_weights(1));
        assert_eq!(synth_trial(4, Scale::pow2(-2)), synth_trial(4, Scale::pow2(-2)));
        assert_ne!(synth_trial(4, Scale::pow2(-2)), synth_trial(5, Scale::pow2(-2)));
    }

    #[test]
    fn structure() {
        for seed in 0..5 {
            let w = synth_weights(seed);
            assert_eq!(param_count(&w), 2548);
            assert!(w.all_scales_dyadic());
            for bn in [&w.temporal_bn, &w.spatial_bn, &w.separable_bn] {
                assert!(bn.params.iter().all(|p| p.divisor > 0));
            }
        }
    }

    #[test]
    fn trial_within_input_range() {
        let t = synth_trial(9, Scale::pow2(-2));
        let d = t.to_dense();
        assert_eq!(d.len(), 22 * 1125);
        assert!(d.iter().all(|&v| (v as f64).abs() <= INPUT_LIMIT));
        let std = (d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!(std > 10.0 && std < 60.0, "std {std}");
    }
}
