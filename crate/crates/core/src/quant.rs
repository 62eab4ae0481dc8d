//! Quantization mathematics: requantization, the batch-norm merge and
//! pool reordering transforms, activation range calibration, the
//! straight-through estimator and the RPR freezing schedule.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::QuantError;
use crate::fxp::{div_round, sat8, Acc32, Q8};

/// Integer bias/divisor pair: `y = (x + b) / f`, rounded half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RequantParams {
    pub bias: i32,
    pub divisor: i32,
}

impl RequantParams {
    pub fn new(bias: i32, divisor: i32) -> Result<Self, QuantError> {
        if divisor <= 0 {
            return Err(QuantError::NonPositiveDivisor(divisor as i64));
        }
        Ok(RequantParams { bias, divisor })
    }
}

/// `sat8(div_round(x + b, f))`.
pub fn requantize(x: Acc32, p: RequantParams) -> Q8 {
    let n = x.checked_add(p.bias).expect("requantize bias overflows Acc32");
    sat8(div_round(n, p.divisor))
}

/// Temporal and spatial batch norm folded into one division.
///
/// `pre_bias` (the temporal `b1`) is still added to each temporal
/// accumulator before the spatial dot product; `stage` carries the merged
/// `(f1 * b2, f1 * f2)` that is applied once after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergedBn {
    pub pre_bias: i32,
    pub stage: RequantParams,
}

/// Moves the first batch-norm division behind the spatial convolution:
///
/// `((x*wT + b1)/f1 * wS + b2) / f2 == ((x*wT + b1) * wS + f1*b2) / (f1*f2)`
pub fn merge_bn(first: RequantParams, second: RequantParams) -> Result<MergedBn, QuantError> {
    let bias = first.divisor.checked_mul(second.bias).ok_or(QuantError::Overflow("f1 * b2"))?;
    let divisor = first.divisor.checked_mul(second.divisor).ok_or(QuantError::Overflow("f1 * f2"))?;
    Ok(MergedBn { pre_bias: first.bias, stage: RequantParams { bias, divisor } })
}

/// Batch norm + ReLU + average pooling rewritten to pool first.
///
/// `mean_i(max((x_i + b)/f, 0)) == (N*b + sum_i max(x_i, -b)) / (N*f)`:
/// one division per pooled output instead of one per input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReorderedBlock {
    pub relu_threshold: i32,
    pub combined_divisor: i32,
    pub pool_bias: i32,
    pub n: u32,
}

impl ReorderedBlock {
    pub fn bias(&self) -> i32 {
        -self.relu_threshold
    }

    pub fn divisor(&self) -> i32 {
        self.combined_divisor / self.n as i32
    }
}

pub fn reorder_pool_bn(bias: i32, divisor: i32, n: u32) -> Result<ReorderedBlock, QuantError> {
    if divisor <= 0 {
        return Err(QuantError::NonPositiveDivisor(divisor as i64));
    }
    if n == 0 {
        return Err(QuantError::EmptyPool);
    }
    let ni = i32::try_from(n).map_err(|_| QuantError::Overflow("N"))?;
    let relu_threshold = bias.checked_neg().ok_or(QuantError::Overflow("-b"))?;
    let combined_divisor = divisor.checked_mul(ni).ok_or(QuantError::Overflow("N * f"))?;
    let pool_bias = bias.checked_mul(ni).ok_or(QuantError::Overflow("N * b"))?;
    Ok(ReorderedBlock { relu_threshold, combined_divisor, pool_bias, n })
}

/// Points of the network at which activations are rescaled to 8 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuantPoint {
    Input,
    /// Output of the temporal batch norm; folded away by the integer engine.
    Temporal,
    Spatial,
    Depthwise,
    Separable,
}

impl QuantPoint {
    pub const ALL: [QuantPoint; 5] = [
        QuantPoint::Input,
        QuantPoint::Temporal,
        QuantPoint::Spatial,
        QuantPoint::Depthwise,
        QuantPoint::Separable,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            QuantPoint::Input => "input",
            QuantPoint::Temporal => "temporal",
            QuantPoint::Spatial => "spatial",
            QuantPoint::Depthwise => "depthwise",
            QuantPoint::Separable => "separable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        QuantPoint::ALL.into_iter().find(|p| p.name() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Observed activation range per quantization point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RangeStats {
    ranges: [Option<(f64, f64)>; 5],
}

impl RangeStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, point: QuantPoint, values: &[f64]) {
        for &v in values {
            let r = self.ranges[point.index()].get_or_insert((v, v));
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }

    pub fn range(&self, point: QuantPoint) -> Option<(f64, f64)> {
        self.ranges[point.index()]
    }

    /// Union of two independently gathered statistics.
    pub fn merge(&self, other: &RangeStats) -> RangeStats {
        let mut out = *self;
        for (mine, theirs) in out.ranges.iter_mut().zip(other.ranges) {
            *mine = match (*mine, theirs) {
                (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
                (a, b) => a.or(b),
            };
        }
        out
    }
}

/// Builds range statistics from a stream of per-trial activations, each
/// yielding `(point, values)` pairs.
pub fn calibrate<'a, I, J>(trials: I) -> Result<RangeStats, QuantError>
where
    I: IntoIterator<Item = J>,
    J: IntoIterator<Item = (QuantPoint, &'a [f64])>,
{
    let mut stats = RangeStats::new();
    let mut seen = false;
    for trial in trials {
        seen = true;
        for (point, values) in trial {
            stats.observe(point, values);
        }
    }
    if !seen {
        return Err(QuantError::EmptyStream);
    }
    Ok(stats)
}

/// Symmetric scale `max(|min|, |max|) / 127`; a `[0, 0]` range maps to 1.
pub fn scale_for_range(min: f64, max: f64) -> f64 {
    let m = min.abs().max(max.abs());
    if m == 0.0 {
        1.0
    } else {
        m / 127.0
    }
}

pub fn scales_from_ranges(stats: &RangeStats) -> Vec<(QuantPoint, f64)> {
    QuantPoint::ALL
        .into_iter()
        .filter_map(|p| stats.range(p).map(|(lo, hi)| (p, scale_for_range(lo, hi))))
        .collect()
}

/// Forward value of the straight-through estimator plus its backward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteQuantized {
    pub forward: f64,
}

impl SteQuantized {
    /// Gradients pass through the rounding unchanged.
    pub fn backward(&self, upstream: f64) -> f64 {
        upstream
    }
}

/// `s * sat8(round(x / s))` with half-away rounding, as the engine rounds.
pub fn ste_quantize(x: f64, scale: f64) -> SteQuantized {
    assert!(scale > 0.0, "non-positive STE scale");
    let q = (x / scale).round().clamp(-128.0, 127.0);
    SteQuantized { forward: q * scale }
}

/// Epoch window over which weights are progressively frozen to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RprSchedule {
    pub start_epoch: u32,
    pub end_epoch: u32,
    /// Epochs per staircase step.
    pub step: u32,
}

impl Default for RprSchedule {
    fn default() -> Self {
        RprSchedule { start_epoch: 550, end_epoch: 650, step: 10 }
    }
}

/// Fraction of weights frozen to the quantization grid at `epoch`: zero up to
/// `start_epoch`, then a staircase reaching one at `end_epoch`.
pub fn rpr_fraction(epoch: u32, sched: &RprSchedule) -> Ratio<u32> {
    let span = sched.end_epoch - sched.start_epoch;
    if epoch <= sched.start_epoch {
        return Ratio::from_integer(0);
    }
    if epoch >= sched.end_epoch {
        return Ratio::from_integer(1);
    }
    let done = (epoch - sched.start_epoch) / sched.step * sched.step;
    Ratio::new(done, span)
}

/// Which of `n` weights are frozen at `epoch`.
///
/// The partition order is one seeded uniform permutation, so the frozen set
/// only grows as the fraction rises.
pub fn rpr_frozen_mask(n: usize, epoch: u32, sched: &RprSchedule, seed: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let frac = rpr_fraction(epoch, sched);
    let frozen = (n as u64 * *frac.numer() as u64).div_ceil(*frac.denom() as u64) as usize;
    let mut mask = vec![false; n];
    for &i in &order[..frozen] {
        mask[i] = true;
    }
    mask
}

/// Snaps the frozen subset of `weights` to the grid of `scale`, leaving the
/// rest at full precision.
pub fn rpr_apply(weights: &mut [f64], scale: f64, mask: &[bool]) {
    for (w, &frozen) in weights.iter_mut().zip(mask) {
        if frozen {
            *w = ste_quantize(*w, scale).forward;
        }
    }
}
