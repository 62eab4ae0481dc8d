//! Static description of the network: shapes, parameter container, tensor
//! layouts and the arithmetic-volume accounting.

mod format;
mod synth;

use std::fmt;

use crate::fxp::{Acc32, Q8};
use crate::quant::RequantParams;

pub use format::{load_weights, read_weights, save_weights, write_weights, CalibrationRecord};
pub use synth::{synth_signal, synth_trial, synth_weights, INPUT_LIMIT};

/// Layer dimensions of Q-EEGNet for 4.5 s of 22-channel EEG at 250 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub channels: usize,
    pub samples: usize,
    pub temporal_filters: usize,
    pub depth_multiplier: usize,
    pub temporal_kernel: usize,
    pub separable_kernel: usize,
    pub pool: usize,
    pub classes: usize,
}

pub const QEEGNET: ModelShape = ModelShape {
    channels: 22,
    samples: 1125,
    temporal_filters: 8,
    depth_multiplier: 2,
    temporal_kernel: 64,
    separable_kernel: 16,
    pool: 8,
    classes: 4,
};

impl Default for ModelShape {
    fn default() -> Self {
        QEEGNET
    }
}

impl ModelShape {
    /// Feature maps after the depthwise spatial convolution, `F1 * D`.
    pub fn spatial_filters(&self) -> usize {
        self.temporal_filters * self.depth_multiplier
    }

    /// Length after the first pooling layer; trailing samples are dropped.
    pub fn pooled1(&self) -> usize {
        self.samples / self.pool
    }

    pub fn pooled2(&self) -> usize {
        self.pooled1() / self.pool
    }

    pub fn flat(&self) -> usize {
        self.spatial_filters() * self.pooled2()
    }

    /// Zero padding `(left, right)` that keeps an even kernel length-preserving.
    pub fn padding(kernel: usize) -> (usize, usize) {
        let left = (kernel - 1) / 2;
        (left, kernel - 1 - left)
    }

    /// Human-readable tensor shapes of the pipeline, input to logits.
    pub fn pipeline(&self) -> Vec<String> {
        let f = self.spatial_filters();
        vec![
            format!("1x{}x{}", self.channels, self.samples),
            format!("{}x{}x{}", self.temporal_filters, self.channels, self.samples),
            format!("{}x1x{}", f, self.pooled1()),
            format!("{}x1x{}", f, self.pooled2()),
            format!("{}", self.flat()),
            format!("{}", self.classes),
        ]
    }

    pub fn tag(&self) -> String {
        format!("{}x{}", self.channels, self.samples)
    }
}

/// How MACs against zero padding are treated by [`mac_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacMode {
    /// Every kernel tap of every output, padding included.
    Padded,
    /// Only taps that land on real samples.
    Effective,
}

/// Per-layer MAC volume, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacBreakdown {
    pub temporal: u64,
    pub spatial: u64,
    pub depthwise: u64,
    pub pointwise: u64,
    pub fc: u64,
}

impl MacBreakdown {
    pub fn total(&self) -> u64 {
        self.temporal + self.spatial + self.depthwise + self.pointwise + self.fc
    }
}

// h_out * w_out * n_out * h_k * w_k * n_in / g
fn conv_macs(h_out: usize, w_out: usize, n_out: usize, h_k: usize, w_k: usize, n_in: usize, g: usize) -> u64 {
    (h_out * w_out * n_out * h_k * w_k * n_in / g) as u64
}

/// Number of (output, tap) pairs of a length-preserving 1D convolution
/// whose tap lands on a real sample.
fn valid_taps(len: usize, kernel: usize) -> u64 {
    let (left, _) = ModelShape::padding(kernel);
    let mut n = 0u64;
    for t in 0..len {
        for k in 0..kernel {
            let src = t as isize + k as isize - left as isize;
            if src >= 0 && (src as usize) < len {
                n += 1;
            }
        }
    }
    n
}

pub fn mac_breakdown(shape: &ModelShape, mode: MacMode) -> MacBreakdown {
    let s = shape;
    let f = s.spatial_filters();
    match mode {
        MacMode::Padded => MacBreakdown {
            temporal: conv_macs(s.channels, s.samples, s.temporal_filters, 1, s.temporal_kernel, 1, 1),
            spatial: conv_macs(1, s.samples, f, s.channels, 1, s.temporal_filters, s.temporal_filters),
            depthwise: conv_macs(1, s.pooled1(), f, 1, s.separable_kernel, f, f),
            pointwise: conv_macs(1, s.pooled1(), f, 1, 1, f, 1),
            fc: (s.flat() * s.classes) as u64,
        },
        MacMode::Effective => MacBreakdown {
            temporal: (s.channels * s.temporal_filters) as u64 * valid_taps(s.samples, s.temporal_kernel),
            spatial: conv_macs(1, s.samples, f, s.channels, 1, s.temporal_filters, s.temporal_filters),
            depthwise: f as u64 * valid_taps(s.pooled1(), s.separable_kernel),
            pointwise: conv_macs(1, s.pooled1(), f, 1, 1, f, 1),
            fc: (s.flat() * s.classes) as u64,
        },
    }
}

/// Multiply-accumulates per inference.
///
/// The padded count (13,140,768 for Q-EEGNet) follows the usual
/// `h_out * w_out * n_out * h_k * w_k * n_in / g` rule per layer. The
/// effective count drops taps that multiply zero padding (12,959,520); neither
/// reproduces the 12,984,432 sometimes quoted for this network.
pub fn mac_count(shape: &ModelShape, mode: MacMode) -> u64 {
    mac_breakdown(shape, mode).total()
}

/// Physical ordering of a feature map; the tag always names the innermost axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    TimeInnermost,
    SpaceInnermost,
    ChannelInnermost,
}

impl Layout {
    pub fn as_str(&self) -> &'static str {
        match self {
            Layout::TimeInnermost => "time-innermost",
            Layout::SpaceInnermost => "space-innermost",
            Layout::ChannelInnermost => "channel-innermost",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "time-innermost" => Some(Layout::TimeInnermost),
            "space-innermost" => Some(Layout::SpaceInnermost),
            "channel-innermost" => Some(Layout::ChannelInnermost),
            _ => None,
        }
    }
}

/// Positive rational quantization step: real value = scale * integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scale {
    num: u64,
    den: u64,
}

impl Scale {
    pub const ONE: Scale = Scale { num: 1, den: 1 };

    /// Reduced `num / den`; `None` unless both are positive.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if num == 0 || den == 0 {
            return None;
        }
        let g = gcd(num, den);
        Some(Scale { num: num / g, den: den / g })
    }

    /// `2^exp`, possibly fractional.
    pub fn pow2(exp: i32) -> Self {
        if exp >= 0 {
            Scale { num: 1 << exp, den: 1 }
        } else {
            Scale { num: 1, den: 1 << (-exp) }
        }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True when the denominator is a power of two, so products of scaled
    /// integers are exact in binary floating point.
    pub fn is_dyadic(&self) -> bool {
        self.den.is_power_of_two()
    }

    pub fn mul(self, other: Scale) -> Scale {
        Scale::new(self.num * other.num, self.den * other.den).expect("positive")
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        Scale::new(n.trim().parse().ok()?, d.trim().parse().ok()?)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn align4(n: usize) -> usize {
    n.div_ceil(4) * 4
}

/// An 8-bit feature map or weight matrix.
///
/// Stored as `rows x row_len` with the innermost dimension contiguous; every
/// row starts on a 4-byte boundary (the row stride is rounded up to a
/// multiple of four and the gap is zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    shape: Vec<usize>,
    layout: Layout,
    stride: usize,
    data: Vec<Q8>,
    scale: Scale,
}

impl QTensor {
    pub fn zeros(shape: &[usize], layout: Layout, scale: Scale) -> Self {
        assert!(!shape.is_empty(), "scalar tensors are not supported");
        let row_len = *shape.last().unwrap();
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let stride = align4(row_len);
        QTensor { shape: shape.to_vec(), layout, stride, data: vec![0; rows * stride], scale }
    }

    /// Builds from dense row-major values (no row padding).
    pub fn from_dense(shape: &[usize], layout: Layout, values: &[Q8], scale: Scale) -> Self {
        let mut t = QTensor::zeros(shape, layout, scale);
        let row_len = t.row_len();
        assert_eq!(values.len(), t.rows() * row_len, "value count does not match shape");
        for (r, chunk) in values.chunks(row_len).enumerate() {
            t.row_mut(r).copy_from_slice(chunk);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn rows(&self) -> usize {
        self.shape[..self.shape.len() - 1].iter().product()
    }

    pub fn row_len(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn row(&self, r: usize) -> &[Q8] {
        &self.data[r * self.stride..r * self.stride + self.row_len()]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Q8] {
        let len = self.row_len();
        &mut self.data[r * self.stride..r * self.stride + len]
    }

    /// Dense row-major copy without row padding.
    pub fn to_dense(&self) -> Vec<Q8> {
        (0..self.rows()).flat_map(|r| self.row(r).iter().copied()).collect()
    }

    /// Storage footprint including alignment padding.
    pub fn byte_len(&self) -> usize {
        self.data.len()
    }
}

/// 32-bit accumulator map produced by convolution kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccTensor {
    pub shape: Vec<usize>,
    pub layout: Layout,
    pub data: Vec<Acc32>,
    pub scale: Scale,
}

impl AccTensor {
    pub fn zeros(shape: &[usize], layout: Layout, scale: Scale) -> Self {
        AccTensor { shape: shape.to_vec(), layout, data: vec![0; shape.iter().product()], scale }
    }
}

/// A quantized weight tensor with its single per-tensor scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QWeights {
    pub shape: [usize; 2],
    pub layout: Layout,
    pub data: Vec<Q8>,
    pub scale: Scale,
}

impl QWeights {
    pub fn row(&self, r: usize) -> &[Q8] {
        &self.data[r * self.shape[1]..(r + 1) * self.shape[1]]
    }

    pub fn get(&self, r: usize, c: usize) -> Q8 {
        self.data[r * self.shape[1] + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A batch-norm layer folded into integer form.
///
/// Channel `c` computes `(x + b_c) / f_c` on the accumulator of the preceding
/// linear layer; the result is expressed in units of `out_scale`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnStage {
    pub params: Vec<RequantParams>,
    pub out_scale: Scale,
}

/// All learnable parameters plus the quantization metadata of every
/// quantization point.
///
/// Kernels are stored in forward (file) order. The temporal and depthwise
/// separable layers are true convolutions; the spatial, pointwise and FC
/// layers are dot products in stored order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub shape: ModelShape,
    pub input_scale: Scale,
    /// `F1 x K_t`
    pub temporal: QWeights,
    /// Its `out_scale` is the real-valued scale of the temporal block output,
    /// which the integer engine never materializes.
    pub temporal_bn: BnStage,
    /// `F1*D x C`
    pub spatial: QWeights,
    pub spatial_bn: BnStage,
    /// `F1*D x K_s`
    pub depthwise: QWeights,
    /// Power-of-two requantization between depthwise and pointwise.
    pub depthwise_shift: u32,
    /// `F1*D x F1*D`, `[out][in]`
    pub pointwise: QWeights,
    pub separable_bn: BnStage,
    /// `classes x flat`
    pub fc: QWeights,
    /// In units of `separable_bn.out_scale * fc.scale`.
    pub fc_bias: Vec<Acc32>,
    pub calibration: Vec<CalibrationRecord>,
}

impl ModelWeights {
    /// Output scale of the depthwise requantization point.
    pub fn depthwise_out_scale(&self) -> Scale {
        self.spatial_bn.out_scale.mul(self.depthwise.scale).mul(Scale::pow2(self.depthwise_shift as i32))
    }

    /// Scale of the integer logits.
    pub fn logit_scale(&self) -> Scale {
        self.separable_bn.out_scale.mul(self.fc.scale)
    }

    /// True when every scale is a power of two, the condition under which the
    /// fake-quantized float oracle reproduces the engine bit-exactly.
    pub fn all_scales_dyadic(&self) -> bool {
        [
            self.input_scale,
            self.temporal.scale,
            self.temporal_bn.out_scale,
            self.spatial.scale,
            self.spatial_bn.out_scale,
            self.depthwise.scale,
            self.pointwise.scale,
            self.separable_bn.out_scale,
            self.fc.scale,
        ]
        .iter()
        .all(Scale::is_dyadic)
    }
}

/// Learnable scalar count: kernels, BN (scale, offset) pairs, FC weights and
/// biases. Quantization metadata is not counted.
pub fn param_count(w: &ModelWeights) -> usize {
    w.temporal.len()
        + 2 * w.temporal_bn.params.len()
        + w.spatial.len()
        + 2 * w.spatial_bn.params.len()
        + w.depthwise.len()
        + w.pointwise.len()
        + 2 * w.separable_bn.params.len()
        + w.fc.len()
        + w.fc_bias.len()
}

/// Parameter count implied by a shape alone.
pub fn expected_param_count(s: &ModelShape) -> usize {
    let f = s.spatial_filters();
    s.temporal_filters * s.temporal_kernel
        + 2 * s.temporal_filters
        + f * s.channels
        + 2 * f
        + f * s.separable_kernel
        + f * f
        + 2 * f
        + s.flat() * s.classes
        + s.classes
}
