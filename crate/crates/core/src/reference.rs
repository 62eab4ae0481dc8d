//! Floating-point oracles that define what the integer engine must compute.
//!
//! [`infer_float`] runs the network in `f64` with the layers in their
//! textbook order. [`infer_fakequant`] runs the same pipeline but snaps the
//! activations onto the 8-bit grid at every quantization point, rounding
//! the way the engine does. Convolutions are evaluated in `f64` on
//! dequantized values (exact when all scales are powers of two); each
//! `batch norm -> activation -> average pool -> quantize` segment is evaluated
//! in exact rational arithmetic in its unmerged, pool-last order.
//!
//! There is no quantization point between the temporal batch norm and the
//! spatial convolution: the engine keeps that tensor in 32 bits.

use num_rational::Ratio;

use crate::error::EngineError;
use crate::model::{ModelShape, ModelWeights, QTensor, QWeights, Scale};
use crate::quant::QuantPoint;

type R = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }
}

/// Every intermediate of a float inference, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatActivations {
    /// `C x T`
    pub input: Vec<f64>,
    /// `F1 x C x T`, after the temporal batch norm.
    pub temporal: Vec<f64>,
    /// `F1*D x T`, after batch norm and activation, before pooling.
    pub spatial: Vec<f64>,
    /// `F1*D x T/8`
    pub pooled1: Vec<f64>,
    /// `F1*D x T/8`, depthwise separable output.
    pub depthwise: Vec<f64>,
    /// `F1*D x T/8`, after pointwise, batch norm and activation.
    pub pointwise: Vec<f64>,
    /// `F1*D x T/64`
    pub pooled2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl FloatActivations {
    /// The tensors observed at each quantization point, for calibration.
    pub fn quant_points(&self) -> Vec<(QuantPoint, &[f64])> {
        vec![
            (QuantPoint::Input, &self.input[..]),
            (QuantPoint::Temporal, &self.temporal[..]),
            (QuantPoint::Spatial, &self.pooled1[..]),
            (QuantPoint::Depthwise, &self.depthwise[..]),
            (QuantPoint::Separable, &self.pooled2[..]),
        ]
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Real-valued trial from a quantized one.
pub fn dequantize_trial(trial: &QTensor) -> Vec<f64> {
    let s = trial.scale().value();
    trial.to_dense().iter().map(|&q| q as f64 * s).collect()
}

fn check_trial(shape: &ModelShape, trial: &[f64]) -> Result<(), EngineError> {
    let want = shape.channels * shape.samples;
    if trial.len() != want {
        return Err(EngineError::Shape { expected: format!("{want} samples"), found: format!("{}", trial.len()) });
    }
    Ok(())
}

fn dequant(w: &QWeights) -> Vec<f64> {
    let s = w.scale.value();
    w.data.iter().map(|&v| v as f64 * s).collect()
}

/// Length-preserving true convolution of one row, zero padded with
/// `(K-1)/2` samples on the left.
fn conv_same(x: &[f64], kernel: &[f64], out: &mut [f64]) {
    let k_len = kernel.len();
    let (left, _) = ModelShape::padding(k_len);
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..k_len {
            let src = t as isize + k as isize - left as isize;
            if src >= 0 && (src as usize) < x.len() {
                acc += x[src as usize] * kernel[k_len - 1 - k];
            }
        }
        *o = acc;
    }
}

fn bn_float(v: f64, acc_scale: f64, bias: i32, divisor: i32, out_scale: f64) -> f64 {
    out_scale * (v / acc_scale + bias as f64) / divisor as f64
}

fn avg_pool(x: &[f64], rows: usize, len: usize, n: usize) -> Vec<f64> {
    let out_len = len / n;
    let mut out = vec![0.0; rows * out_len];
    for r in 0..rows {
        for j in 0..out_len {
            out[r * out_len + j] = x[r * len + j * n..r * len + (j + 1) * n].iter().sum::<f64>() / n as f64;
        }
    }
    out
}

/// Full-precision inference with the layers in their original order.
pub fn infer_float(w: &ModelWeights, trial: &[f64], act: Activation) -> Result<FloatActivations, EngineError> {
    let s = w.shape;
    check_trial(&s, trial)?;
    let (c_n, t_n, f1, nf) = (s.channels, s.samples, s.temporal_filters, s.spatial_filters());
    let (p1, p2) = (s.pooled1(), s.pooled2());

    let wt = dequant(&w.temporal);
    let ws = dequant(&w.spatial);
    let wd = dequant(&w.depthwise);
    let wp = dequant(&w.pointwise);
    let wf = dequant(&w.fc);

    let t_acc = w.input_scale.value() * w.temporal.scale.value();
    let mut temporal = vec![0.0; f1 * c_n * t_n];
    for f in 0..f1 {
        let kern = &wt[f * s.temporal_kernel..(f + 1) * s.temporal_kernel];
        let p = w.temporal_bn.params[f];
        for c in 0..c_n {
            let out = &mut temporal[(f * c_n + c) * t_n..(f * c_n + c + 1) * t_n];
            conv_same(&trial[c * t_n..(c + 1) * t_n], kern, out);
            for v in out.iter_mut() {
                *v = bn_float(*v, t_acc, p.bias, p.divisor, w.temporal_bn.out_scale.value());
            }
        }
    }

    let s_acc = w.temporal_bn.out_scale.value() * w.spatial.scale.value();
    let mut spatial = vec![0.0; nf * t_n];
    for o in 0..nf {
        let f = o / s.depth_multiplier;
        let p = w.spatial_bn.params[o];
        for t in 0..t_n {
            let v: f64 = (0..c_n).map(|c| temporal[(f * c_n + c) * t_n + t] * ws[o * c_n + c]).sum();
            spatial[o * t_n + t] = act.apply(bn_float(v, s_acc, p.bias, p.divisor, w.spatial_bn.out_scale.value()));
        }
    }
    let pooled1 = avg_pool(&spatial, nf, t_n, s.pool);

    let mut depthwise = vec![0.0; nf * p1];
    for o in 0..nf {
        conv_same(
            &pooled1[o * p1..(o + 1) * p1],
            &wd[o * s.separable_kernel..(o + 1) * s.separable_kernel],
            &mut depthwise[o * p1..(o + 1) * p1],
        );
    }

    let sep_acc = w.depthwise_out_scale().value() * w.pointwise.scale.value();
    let mut pointwise = vec![0.0; nf * p1];
    for o in 0..nf {
        let p = w.separable_bn.params[o];
        for t in 0..p1 {
            let v: f64 = (0..nf).map(|i| depthwise[i * p1 + t] * wp[o * nf + i]).sum();
            pointwise[o * p1 + t] = act.apply(bn_float(v, sep_acc, p.bias, p.divisor, w.separable_bn.out_scale.value()));
        }
    }
    let pooled2 = avg_pool(&pointwise, nf, p1, s.pool);

    let bias_scale = w.logit_scale().value();
    let logits = (0..s.classes)
        .map(|k| {
            (0..s.flat()).map(|j| pooled2[j] * wf[k * s.flat() + j]).sum::<f64>() + w.fc_bias[k] as f64 * bias_scale
        })
        .collect();
    let _ = p2;

    Ok(FloatActivations { input: trial.to_vec(), temporal, spatial, pooled1, depthwise, pointwise, pooled2, logits })
}

/// Dequantized values at every quantization point of a fake-quantized run.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeQuantOutput {
    pub input: Vec<f64>,
    /// `F1*D x T/8`
    pub spatial: Vec<f64>,
    /// `F1*D x T/8`
    pub depthwise: Vec<f64>,
    /// `F1*D x T/64`, which is also the flattened FC input.
    pub separable: Vec<f64>,
    pub logits: Vec<f64>,
    /// Batch-norm divisions performed in unmerged order.
    pub bn_divisions: u64,
}

/// Exact rational value of a finite double.
fn exact(v: f64) -> R {
    if v == 0.0 {
        return R::from_integer(0);
    }
    let bits = v.to_bits();
    let sign: i128 = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    let (mut mant, mut e) = if exp == 0 { (frac, -1074) } else { (frac | (1i128 << 52), exp - 1075) };
    while mant & 1 == 0 && e < 0 {
        mant >>= 1;
        e += 1;
    }
    if e >= 0 {
        R::from_integer(sign * (mant << e))
    } else {
        assert!(e > -120, "value {v} too small for exact conversion");
        R::new(sign * mant, 1i128 << -e)
    }
}

/// The temporal accumulator `v / t_acc` as an integer. Both operands sit on
/// the input and weight grids, so the quotient is integral whenever the f64
/// convolution was exact (always true for power-of-two scales).
fn acc_integer(v: f64, t_acc: R) -> i128 {
    let d = *t_acc.denom();
    if *t_acc.numer() == 1 && (d as u128).is_power_of_two() && d < 1 << 60 {
        let a = v * d as f64;
        if a.fract() == 0.0 && a.abs() < 2f64.powi(100) {
            return a as i128;
        }
    }
    (exact(v) / t_acc).round().to_integer()
}

fn ratio(s: Scale) -> R {
    R::new(s.num() as i128, s.den() as i128)
}

/// Half-away rounding onto the Q8 grid of `scale`.
fn snap(v: R, scale: R) -> i32 {
    (v / scale).round().to_integer().clamp(-128, 127) as i32
}

fn snap_f64(v: f64, scale: f64) -> i32 {
    (v / scale).round().clamp(-128.0, 127.0) as i32
}

/// Fake-quantized inference: the float pipeline with every quantization
/// point snapped to its 8-bit grid.
pub fn infer_fakequant(w: &ModelWeights, trial: &[f64]) -> Result<FakeQuantOutput, EngineError> {
    let s = w.shape;
    check_trial(&s, trial)?;
    let (c_n, t_n, f1, nf) = (s.channels, s.samples, s.temporal_filters, s.spatial_filters());
    let (p1, p2, n) = (s.pooled1(), s.pooled2(), s.pool);
    let mut divisions = 0u64;

    let s_in = w.input_scale.value();
    let input: Vec<f64> = trial.iter().map(|&x| snap_f64(x, s_in) as f64 * s_in).collect();

    let wt = dequant(&w.temporal);
    let ws = dequant(&w.spatial);
    let wd = dequant(&w.depthwise);
    let wp = dequant(&w.pointwise);
    let wf = dequant(&w.fc);

    // temporal convolution, then batch norm in exact arithmetic. Each
    // accumulator is kept as the integer `acc + b1`; the batch norm value is
    // that integer times s_t / f1, which the spatial stage applies exactly.
    let t_acc = ratio(w.input_scale) * ratio(w.temporal.scale);
    let s_t = ratio(w.temporal_bn.out_scale);
    let mut temporal: Vec<i128> = Vec::with_capacity(f1 * c_n * t_n);
    let mut row = vec![0.0; t_n];
    for f in 0..f1 {
        let kern = &wt[f * s.temporal_kernel..(f + 1) * s.temporal_kernel];
        let p = w.temporal_bn.params[f];
        for c in 0..c_n {
            conv_same(&input[c * t_n..(c + 1) * t_n], kern, &mut row);
            for &v in &row {
                temporal.push(acc_integer(v, t_acc) + p.bias as i128);
                divisions += 1;
            }
        }
    }

    // spatial depthwise convolution, batch norm, ReLU, pool, quantize
    let s_sp = ratio(w.spatial_bn.out_scale);
    let sp_acc = s_t * ratio(w.spatial.scale);
    let ws_r: Vec<R> = ws.iter().map(|&v| exact(v)).collect();
    let ws_den = ws_r.iter().fold(1i128, |l, r| l * R::new(l, *r.denom()).denom());
    let ws_n: Vec<i128> = ws_r.iter().map(|r| (r * ws_den).to_integer()).collect();
    let mut spatial = vec![0.0; nf * p1];
    for o in 0..nf {
        let f = o / s.depth_multiplier;
        let p = w.spatial_bn.params[o];
        // every channel term shares the denominator f1 * ws_den
        let term = s_t / (w.temporal_bn.params[f].divisor as i128 * ws_den);
        let mut bn_out = Vec::with_capacity(t_n);
        for t in 0..t_n {
            let mut num = 0i128;
            for c in 0..c_n {
                num += temporal[(f * c_n + c) * t_n + t] * ws_n[o * c_n + c];
            }
            let v = term * num;
            let y = s_sp * (v / sp_acc + p.bias as i128) / p.divisor as i128;
            divisions += 1;
            bn_out.push(y.max(R::from_integer(0)));
        }
        for j in 0..p1 {
            let avg = bn_out[j * n..(j + 1) * n].iter().fold(R::from_integer(0), |a, b| a + b) / n as i128;
            spatial[o * p1 + j] = snap(avg, s_sp) as f64 * w.spatial_bn.out_scale.value();
        }
    }

    // separable: depthwise, power-of-two requantization
    let s_dw = w.depthwise_out_scale().value();
    let mut depthwise = vec![0.0; nf * p1];
    let mut drow = vec![0.0; p1];
    for o in 0..nf {
        conv_same(&spatial[o * p1..(o + 1) * p1], &wd[o * s.separable_kernel..(o + 1) * s.separable_kernel], &mut drow);
        for (t, &v) in drow.iter().enumerate() {
            depthwise[o * p1 + t] = snap_f64(v, s_dw) as f64 * s_dw;
        }
    }

    // pointwise, batch norm, ReLU, pool, quantize
    let s_sep = ratio(w.separable_bn.out_scale);
    let pw_acc = ratio(w.depthwise_out_scale()) * ratio(w.pointwise.scale);
    let mut separable = vec![0.0; nf * p2];
    for o in 0..nf {
        let p = w.separable_bn.params[o];
        let bn_out: Vec<R> = (0..p1)
            .map(|t| {
                let v: f64 = (0..nf).map(|i| depthwise[i * p1 + t] * wp[o * nf + i]).sum();
                divisions += 1;
                (s_sep * (exact(v) / pw_acc + p.bias as i128) / p.divisor as i128).max(R::from_integer(0))
            })
            .collect();
        for j in 0..p2 {
            let avg = bn_out[j * n..(j + 1) * n].iter().fold(R::from_integer(0), |a, b| a + b) / n as i128;
            separable[o * p2 + j] = snap(avg, s_sep) as f64 * w.separable_bn.out_scale.value();
        }
    }

    let bias_scale = w.logit_scale().value();
    let logits = (0..s.classes)
        .map(|k| {
            (0..s.flat()).map(|j| separable[j] * wf[k * s.flat() + j]).sum::<f64>() + w.fc_bias[k] as f64 * bias_scale
        })
        .collect();

    Ok(FakeQuantOutput { input, spatial, depthwise, separable, logits, bn_divisions: divisions })
}
