//! Row-level kernels.
//!
//! Every 1D kernel reads a zero-padded input row `xpad` in which output `t`
//! depends on `xpad[t..t + K]`, so that
//!
//! ```text
//! out[t] = sum_k xpad[t + k] * w_rev[k],   w_rev[k] = w[K - 1 - k]
//! ```
//!
//! is the same true convolution whether the kernel flips the stored weights
//! itself or they were stored reversed ahead of time.

use crate::error::EngineError;
use crate::fxp::{div_round_wide, sat8_wide, sdot4, shuffle_shift, Acc32, PackedWord, Q8};
use crate::instrument::LayerCounters;
use crate::quant::ReorderedBlock;

/// Bytes a padded row needs for `n` outputs of a `k`-tap kernel: whole
/// four-output blocks read up to `4*floor(n/4) + k`, a scalar tail up to
/// `n + k - 1`, and rows are word aligned.
pub fn padded_len(n: usize, k: usize) -> usize {
    (4 * (n / 4) + k).max(n + k - 1).div_ceil(4) * 4
}

fn check_row(len: usize, n: usize, k: usize) -> Result<(), EngineError> {
    if !len.is_multiple_of(4) {
        return Err(EngineError::Misaligned { len });
    }
    let need = padded_len(n, k);
    if len < need {
        return Err(EngineError::ShortRow { have: len, need });
    }
    Ok(())
}

/// How a 1D convolution walks its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// One multiply-accumulate per tap.
    Scalar,
    /// Four outputs per block from two aligned loads and three
    /// `shuffle_shift` realignments per four taps.
    Shuffle,
    /// Four outputs per block from four pre-shifted copies of the row:
    /// only aligned loads, no realignment.
    Replicated,
}

/// An input row, plain or as four byte-shifted copies.
#[derive(Debug, Clone, Copy)]
pub enum RowSrc<'a> {
    Plain(&'a [Q8]),
    Replicas([&'a [Q8]; 4]),
}

/// A kernel's weights as the engine keeps them.
///
/// With `reversed` the taps are stored pre-reversed and read in order;
/// otherwise they are stored forward and every packed weight word is
/// lane-reversed on the fly, costing one realignment.
#[derive(Debug, Clone, Copy)]
pub struct Taps<'a> {
    pub w: &'a [Q8],
    pub reversed: bool,
}

impl Taps<'_> {
    #[inline(always)]
    fn rev(&self, k: usize) -> Q8 {
        if self.reversed {
            self.w[k]
        } else {
            self.w[self.w.len() - 1 - k]
        }
    }

    #[inline(always)]
    fn word(&self, g: usize, c: &mut LayerCounters) -> PackedWord {
        c.packed_loads += 1;
        if self.reversed {
            PackedWord::load(self.w, 4 * g)
        } else {
            c.realignments += 1;
            PackedWord::load(self.w, self.w.len() - 4 - 4 * g).reverse_lanes()
        }
    }
}

#[inline]
fn scalar_output(x: &[Q8], taps: Taps<'_>, t: usize, c: &mut LayerCounters) -> Acc32 {
    let k_len = taps.w.len();
    let mut acc: Acc32 = 0;
    for k in 0..k_len {
        acc += x[t + k] as Acc32 * taps.rev(k) as Acc32;
    }
    c.macs += k_len as u64;
    acc
}

#[inline]
fn shuffle_block(x: &[Q8], taps: Taps<'_>, t0: usize, c: &mut LayerCounters) -> [Acc32; 4] {
    let mut acc = [0; 4];
    for g in 0..taps.w.len() / 4 {
        let wv = taps.word(g, c);
        let lo = PackedWord::load(x, t0 + 4 * g);
        let hi = PackedWord::load(x, t0 + 4 * g + 4);
        acc[0] = sdot4(lo, wv, acc[0]);
        acc[1] = sdot4(shuffle_shift(lo, hi, 1), wv, acc[1]);
        acc[2] = sdot4(shuffle_shift(lo, hi, 2), wv, acc[2]);
        acc[3] = sdot4(shuffle_shift(lo, hi, 3), wv, acc[3]);
        c.packed_loads += 2;
        c.realignments += 3;
        c.macs += 16;
    }
    acc
}

#[inline]
fn replicated_block(x4: &[&[Q8]; 4], taps: Taps<'_>, t0: usize, c: &mut LayerCounters) -> [Acc32; 4] {
    let mut acc = [0; 4];
    for g in 0..taps.w.len() / 4 {
        let wv = taps.word(g, c);
        for (a, copy) in acc.iter_mut().zip(x4) {
            *a = sdot4(PackedWord::load(copy, t0 + 4 * g), wv, *a);
        }
        c.packed_loads += 4;
        c.macs += 16;
    }
    acc
}

/// A single output from the copy whose shift makes its window aligned.
#[inline]
fn replicated_single(x4: &[&[Q8]; 4], taps: Taps<'_>, t: usize, c: &mut LayerCounters) -> Acc32 {
    let (copy, base) = (x4[t % 4], t - t % 4);
    let mut acc = 0;
    for g in 0..taps.w.len() / 4 {
        let wv = taps.word(g, c);
        acc = sdot4(PackedWord::load(copy, base + 4 * g), wv, acc);
        c.packed_loads += 1;
        c.macs += 4;
    }
    acc
}

/// Outputs `t0..t0 + out.len()` of one row. `t0` is a multiple of four and
/// at most four outputs are produced; fewer than four is a tail, handled
/// one output at a time.
#[inline]
pub(crate) fn conv_outputs(kind: ConvKind, src: RowSrc<'_>, taps: Taps<'_>, t0: usize, out: &mut [Acc32], c: &mut LayerCounters) {
    debug_assert!(t0.is_multiple_of(4) && out.len() <= 4);
    match (kind, src) {
        (ConvKind::Scalar, RowSrc::Plain(x)) => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = scalar_output(x, taps, t0 + j, c);
            }
        }
        (ConvKind::Shuffle, RowSrc::Plain(x)) => {
            if out.len() == 4 {
                out.copy_from_slice(&shuffle_block(x, taps, t0, c));
            } else {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = scalar_output(x, taps, t0 + j, c);
                }
            }
        }
        (ConvKind::Replicated, RowSrc::Replicas(x4)) => {
            if out.len() == 4 {
                out.copy_from_slice(&replicated_block(&x4, taps, t0, c));
            } else {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = replicated_single(&x4, taps, t0 + j, c);
                }
            }
        }
        (kind, _) => unreachable!("{kind:?} kernel given the wrong row source"),
    }
}

pub(crate) fn conv_row(kind: ConvKind, src: RowSrc<'_>, taps: Taps<'_>, out: &mut [Acc32], c: &mut LayerCounters) {
    for (b, chunk) in out.chunks_mut(4).enumerate() {
        conv_outputs(kind, src, taps, 4 * b, chunk, c);
    }
}

/// Baseline true convolution: `out[t] = sum_k xpad[t + k] * w[K - 1 - k]`
/// with forward-stored weights, one scalar MAC per tap.
pub fn conv_scalar(xpad: &[Q8], w: &[Q8], out: &mut [Acc32], c: &mut LayerCounters) -> Result<(), EngineError> {
    check_row(xpad.len(), out.len(), w.len())?;
    conv_row(ConvKind::Scalar, RowSrc::Plain(xpad), Taps { w, reversed: false }, out, c);
    Ok(())
}

/// Cross-correlation with shuffle: `out[t] = sum_k xpad[t + k] * w_rev[k]`,
/// four outputs per block using two aligned loads and three realignments
/// per four taps. A final partial block is computed with scalar MACs.
pub fn xcorr_shuffle(xpad: &[Q8], w_rev: &[Q8], out: &mut [Acc32], c: &mut LayerCounters) -> Result<(), EngineError> {
    check_row(xpad.len(), out.len(), w_rev.len())?;
    conv_row(ConvKind::Shuffle, RowSrc::Plain(xpad), Taps { w: w_rev, reversed: true }, out, c);
    Ok(())
}

/// [`xcorr_shuffle`] on forward-stored weights: the kernel flips each
/// weight word itself (one extra realignment per four taps).
pub fn conv_shuffle(xpad: &[Q8], w: &[Q8], out: &mut [Acc32], c: &mut LayerCounters) -> Result<(), EngineError> {
    check_row(xpad.len(), out.len(), w.len())?;
    conv_row(ConvKind::Shuffle, RowSrc::Plain(xpad), Taps { w, reversed: false }, out, c);
    Ok(())
}

/// Four copies of `src`, copy `k` shifted left by `k` bytes and zero filled.
pub fn replicate(src: &[Q8]) -> [Vec<Q8>; 4] {
    std::array::from_fn(|k| {
        let mut v = vec![0; src.len()];
        v[..src.len() - k.min(src.len())].copy_from_slice(&src[k.min(src.len())..]);
        v
    })
}

/// Fills `dst` (four consecutive copies of `src.len()` bytes) the way
/// [`replicate`] does, without allocating.
pub(crate) fn replicate_into(src: &[Q8], dst: &mut [Q8]) {
    let len = src.len();
    for k in 0..4 {
        let copy = &mut dst[k * len..(k + 1) * len];
        copy[..len - k].copy_from_slice(&src[k..]);
        copy[len - k..].fill(0);
    }
}

/// Checks that `x4[k][j] == x4[0][j + k]`, with zeros past the end.
pub fn check_replicas(x4: [&[Q8]; 4]) -> Result<(), EngineError> {
    let len = x4[0].len();
    if !len.is_multiple_of(4) {
        return Err(EngineError::Misaligned { len });
    }
    for (k, copy) in x4.iter().enumerate().skip(1) {
        if copy.len() != len {
            return Err(EngineError::InconsistentReplica { copy: k, index: copy.len().min(len) });
        }
        for (j, &v) in copy.iter().enumerate() {
            let want = if j + k < len { x4[0][j + k] } else { 0 };
            if v != want {
                return Err(EngineError::InconsistentReplica { copy: k, index: j });
            }
        }
    }
    Ok(())
}

/// Cross-correlation with data replication: the same contract as
/// [`xcorr_shuffle`], computed from four byte-shifted copies of the row
/// with five aligned loads (four data, one weight) per four taps and no
/// realignment. A final partial block uses one aligned copy per output.
pub fn xcorr_replicated(x4: [&[Q8]; 4], w_rev: &[Q8], out: &mut [Acc32], c: &mut LayerCounters) -> Result<(), EngineError> {
    check_replicas(x4)?;
    check_row(x4[0].len(), out.len(), w_rev.len())?;
    conv_row(ConvKind::Replicated, RowSrc::Replicas(x4), Taps { w: w_rev, reversed: true }, out, c);
    Ok(())
}

/// One spatial output: the dot product over channels of a temporal column
/// (accumulators with the temporal bias already added) and a spatial
/// kernel row. Exact in 64 bits.
#[inline]
pub(crate) fn spatial_dot(col: &[i64], w: &[Q8], c: &mut LayerCounters) -> i64 {
    c.macs += col.len() as u64;
    col.iter().zip(w).map(|(&x, &k)| x * k as i64).sum()
}

/// Depthwise spatial convolution of one time step in 32/64-bit arithmetic.
///
/// `col` is the `F1 x C` column of temporal accumulators plus bias (filter
/// major); `w` holds `F1*D` rows of `C` taps. Output `o` reads filter
/// `o / depth_multiplier`. No intermediate requantization takes place.
pub fn spatial_dw32(col: &[i64], w: &[Q8], channels: usize, depth_multiplier: usize, c: &mut LayerCounters) -> Vec<i64> {
    let outputs = w.len() / channels;
    assert_eq!(col.len() * depth_multiplier, outputs * channels, "column and kernel disagree");
    (0..outputs)
        .map(|o| {
            let f = o / depth_multiplier;
            spatial_dot(&col[f * channels..(f + 1) * channels], &w[o * channels..(o + 1) * channels], c)
        })
        .collect()
}

/// Batch norm, ReLU and average pooling of one window in reordered form:
/// `sat8(div_round(N*b + sum max(x_i, -b), N*f))`, a single division.
pub fn fused_pool_bn_relu(window: &[i64], blk: &ReorderedBlock, c: &mut LayerCounters) -> Q8 {
    assert_eq!(window.len(), blk.n as usize, "window length must equal the pool factor");
    let t = blk.relu_threshold as i64;
    let sum: i64 = window.iter().map(|&x| x.max(t)).sum();
    c.divisions += 1;
    sat8_wide(div_round_wide(blk.pool_bias as i64 + sum, blk.combined_divisor as i64))
}

/// Streaming batch norm + ReLU + average pool over a sequence.
///
/// Values arrive one at a time; every `N`th value closes a window and
/// yields a pooled Q8 output. In reordered form the window costs a single
/// division. Otherwise each value is first divided by `f` (an exact
/// quotient/remainder pair), clipped at zero, and the window sum divided
/// again by `N*f`: `N + 1` divisions. Both produce the same integers.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PoolWindow {
    sum: i64,
    count: u32,
}

impl PoolWindow {
    #[inline]
    pub fn push(&mut self, x: i64, blk: &ReorderedBlock, reordered: bool, c: &mut LayerCounters) -> Option<Q8> {
        let b = blk.bias() as i64;
        let n_f = blk.combined_divisor as i64;
        if reordered {
            self.sum += x.max(-b);
        } else {
            let f = blk.divisor() as i64;
            let y = x + b;
            let (q, r) = (y.div_euclid(f), y.rem_euclid(f));
            c.divisions += 1;
            self.sum += if y < 0 { 0 } else { q * f + r };
        }
        self.count += 1;
        if self.count < blk.n {
            return None;
        }
        let num = if reordered { blk.pool_bias as i64 + self.sum } else { self.sum };
        *self = PoolWindow::default();
        c.divisions += 1;
        Some(sat8_wide(div_round_wide(num, n_f)))
    }
}
