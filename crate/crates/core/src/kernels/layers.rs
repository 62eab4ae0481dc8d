//! The inference pipeline under every strategy.
//!
//! Integer semantics (shared by all strategies):
//!
//! * temporal: `a[f][c][t] = conv(x[c], wT[f])`, a true convolution padded
//!   31/32, plus `b1[f]`
//! * spatial: `s[o][t] = sum_c (a[f][c][t] + b1[f]) * wS[o][c]` in 64 bits,
//!   `f = o / D`
//! * batch norm, ReLU and pooling in reordered form with the merged pair
//!   `(f1*b2, f1*f2)`
//! * depthwise separable: true convolution padded 7/8, power-of-two
//!   requantization, pointwise dot products, batch norm, ReLU and pooling
//! * FC: dot products plus bias, argmax with ties to the lowest class
//!
//! Without F the temporal batch norm is applied per element as an exact
//! quotient/remainder division and folded back before the spatial sum;
//! without G every pre-pool value is divided separately. Both cost extra
//! divisions and leave every integer unchanged.

use super::conv::{conv_outputs, conv_row, padded_len, replicate_into, spatial_dot, ConvKind, PoolWindow, RowSrc, Taps};
use super::exec::{run_units, WorkerCtx, WorkerPartition};
use super::tile::{make_tile_plan_with_parts, TilePlan};
use super::StrategyConfig;
use crate::error::EngineError;
use crate::fxp::{sat8, sdot4, shift_round, Acc32, PackedWord, Q8};
use crate::instrument::{Counters, LayerCounters, LayerId, MemTracker, RunReport};
use crate::model::{Layout, ModelShape, ModelWeights, QTensor, QWeights};
use crate::quant::{merge_bn, reorder_pool_bn, ReorderedBlock};

/// Dequantizable intermediates of one run, dense and row-major whatever
/// layout the strategy used internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTrace {
    /// `F1*D x T/8` pooled spatial block output.
    pub spatial: Vec<Q8>,
    /// `F1*D x T/8` requantized depthwise separable output.
    pub depthwise: Vec<Q8>,
    /// `F1*D x T/64`, also the flattened FC input.
    pub separable: Vec<Q8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub logits: Vec<Acc32>,
    pub class: usize,
    pub report: RunReport,
    pub trace: LayerTrace,
}

fn align4(n: usize) -> usize {
    n.div_ceil(4) * 4
}

/// Strategy-specific working copies of the weights and derived constants.
struct Plan<'a> {
    w: &'a ModelWeights,
    cfg: &'a StrategyConfig,
    s: ModelShape,
    kind: ConvKind,
    reversed: bool,
    temporal_w: Vec<Q8>,
    depthwise_w: Vec<Q8>,
    spatial_blk: Vec<ReorderedBlock>,
    separable_blk: Vec<ReorderedBlock>,
    /// Padded input row length.
    xstride: usize,
    /// Padded spatial output row length.
    sstride: usize,
}

fn reverse_rows(w: &QWeights) -> Vec<Q8> {
    (0..w.shape[0]).flat_map(|r| w.row(r).iter().rev().copied()).collect()
}

impl<'a> Plan<'a> {
    fn new(w: &'a ModelWeights, cfg: &'a StrategyConfig) -> Result<Self, EngineError> {
        let s = w.shape;
        let kind = if cfg.replicated {
            ConvKind::Replicated
        } else if cfg.packed {
            ConvKind::Shuffle
        } else {
            ConvKind::Scalar
        };
        let reversed = cfg.xcorr;
        let (temporal_w, depthwise_w) = if reversed {
            (reverse_rows(&w.temporal), reverse_rows(&w.depthwise))
        } else {
            (w.temporal.data.clone(), w.depthwise.data.clone())
        };
        let n = s.pool as u32;
        let spatial_blk = (0..s.spatial_filters())
            .map(|o| {
                let m = merge_bn(w.temporal_bn.params[o / s.depth_multiplier], w.spatial_bn.params[o])?;
                reorder_pool_bn(m.stage.bias, m.stage.divisor, n)
            })
            .collect::<Result<_, _>>()?;
        let separable_blk =
            w.separable_bn.params.iter().map(|p| reorder_pool_bn(p.bias, p.divisor, n)).collect::<Result<_, _>>()?;
        Ok(Plan {
            w,
            cfg,
            s,
            kind,
            reversed,
            temporal_w,
            depthwise_w,
            spatial_blk,
            separable_blk,
            xstride: padded_len(s.samples, s.temporal_kernel),
            sstride: padded_len(s.pooled1(), s.separable_kernel),
        })
    }

    fn temporal_taps(&self, f: usize) -> Taps<'_> {
        let k = self.s.temporal_kernel;
        Taps { w: &self.temporal_w[f * k..(f + 1) * k], reversed: self.reversed }
    }

    fn depthwise_taps(&self, o: usize) -> Taps<'_> {
        let k = self.s.separable_kernel;
        Taps { w: &self.depthwise_w[o * k..(o + 1) * k], reversed: self.reversed }
    }

    /// Temporal batch norm of one accumulator as the spatial sum consumes
    /// it. Merged: `a + b1`. Unmerged: divide by `f1` into an exact
    /// quotient and remainder, then rebuild `q*f1 + r`.
    #[inline]
    fn temporal_value(&self, f: usize, acc: Acc32, c: &mut LayerCounters) -> i64 {
        let p = self.w.temporal_bn.params[f];
        let y = acc as i64 + p.bias as i64;
        if self.cfg.merged_bn {
            y
        } else {
            let d = p.divisor as i64;
            let (q, r) = (y.div_euclid(d), y.rem_euclid(d));
            c.divisions += 1;
            q * d + r
        }
    }
}

/// Pool windows and outputs of the `D` spatial maps fed by one temporal filter.
#[derive(Clone)]
struct SpatialState {
    windows: Vec<PoolWindow>,
    out: Vec<Vec<Q8>>,
    col: Vec<i64>,
}

impl SpatialState {
    fn new(s: &ModelShape) -> Self {
        SpatialState {
            windows: vec![PoolWindow::default(); s.depth_multiplier],
            out: vec![vec![0; s.pooled1()]; s.depth_multiplier],
            col: vec![0; s.channels],
        }
    }

    /// Consumes `self.col` (the temporal column of filter `f` at time `t`).
    #[inline]
    fn consume(&mut self, plan: &Plan<'_>, f: usize, t: usize, c: &mut LayerCounters) {
        let dm = plan.s.depth_multiplier;
        for d in 0..dm {
            let o = f * dm + d;
            let x = spatial_dot(&self.col, plan.w.spatial.row(o), c);
            if let Some(q) = self.windows[d].push(x, &plan.spatial_blk[o], plan.cfg.reordered, c) {
                self.out[d][t / plan.s.pool] = q;
            }
        }
    }
}

/// Layer-by-layer temporal convolution: one unit per (filter, channel) row.
/// Returns the batch-normed values `[f][c][t]`, or `[f][t][c]` with the
/// channel stride rounded to 4 under B.
fn temporal_layer(plan: &Plan<'_>, xpad: &[Q8], ctxs: &mut [WorkerCtx]) -> Vec<i64> {
    let s = &plan.s;
    let (cn, tn) = (s.channels, s.samples);
    let units = s.temporal_filters * cn;
    let mut rows = vec![vec![0i64; tn]; units];
    run_units(&WorkerPartition::new(units, ctxs.len()), &mut rows, ctxs, |u, row, ctx| {
        let (f, ch) = (u / cn, u % cn);
        let c = ctx.counters.layer_mut(LayerId::Temporal);
        let mut acc = vec![0; tn];
        let src = RowSrc::Plain(&xpad[ch * plan.xstride..(ch + 1) * plan.xstride]);
        conv_row(plan.kind, src, plan.temporal_taps(f), &mut acc, c);
        for (v, &a) in row.iter_mut().zip(&acc) {
            *v = plan.temporal_value(f, a, c);
        }
    });
    if !plan.cfg.transposed {
        return rows.concat();
    }
    let cs = align4(cn);
    let mut map = vec![0i64; s.temporal_filters * tn * cs];
    for (u, row) in rows.iter().enumerate() {
        let (f, ch) = (u / cn, u % cn);
        for (t, &v) in row.iter().enumerate() {
            map[(f * tn + t) * cs + ch] = v;
        }
    }
    map
}

/// Layer-by-layer spatial convolution, batch norm, ReLU and pooling: one
/// unit per temporal filter.
fn spatial_layer(plan: &Plan<'_>, map: &[i64], ctxs: &mut [WorkerCtx]) -> Vec<SpatialState> {
    let s = &plan.s;
    let (cn, tn) = (s.channels, s.samples);
    let cs = align4(cn);
    let mut states = vec![SpatialState::new(s); s.temporal_filters];
    run_units(&WorkerPartition::new(s.temporal_filters, ctxs.len()), &mut states, ctxs, |f, st, ctx| {
        let c = ctx.counters.layer_mut(LayerId::Spatial);
        for t in 0..tn {
            if plan.cfg.transposed {
                st.col.copy_from_slice(&map[(f * tn + t) * cs..(f * tn + t) * cs + cn]);
            } else {
                for ch in 0..cn {
                    st.col[ch] = map[(f * cn + ch) * tn + t];
                }
            }
            st.consume(plan, f, t, c);
        }
    });
    states
}

/// Interleaved temporal + spatial over the output steps `core`: per unit
/// (temporal filter), four time steps of all channels are convolved into a
/// `4 x C` scratch block and immediately reduced by the spatial kernels.
/// `row(c)` gives channel `c`'s input with local time 0 at `core.start`.
fn interleaved_part<'r>(
    plan: &Plan<'_>,
    core: std::ops::Range<usize>,
    row: &(dyn Fn(usize) -> RowSrc<'r> + Sync),
    states: &mut [SpatialState],
    ctxs: &mut [WorkerCtx],
) {
    let cn = plan.s.channels;
    run_units(&WorkerPartition::new(plan.s.temporal_filters, ctxs.len()), states, ctxs, |f, st, ctx| {
        let WorkerCtx { counters, scratch } = ctx;
        if scratch.len() < 4 * cn {
            scratch.resize(4 * cn, 0);
        }
        let mut block = [0 as Acc32; 4];
        for lb in (0..core.len()).step_by(4) {
            let n = (core.len() - lb).min(4);
            let c = counters.layer_mut(LayerId::Temporal);
            for ch in 0..cn {
                conv_outputs(plan.kind, row(ch), plan.temporal_taps(f), lb, &mut block[..n], c);
                for j in 0..n {
                    scratch[j * cn + ch] = block[j];
                }
            }
            for j in 0..n {
                for ch in 0..cn {
                    let acc = scratch[j * cn + ch];
                    st.col[ch] = plan.temporal_value(f, acc, counters.layer_mut(LayerId::Temporal));
                }
                st.consume(plan, f, core.start + lb + j, counters.layer_mut(LayerId::Spatial));
            }
        }
    });
}

/// Replicates one tile of the padded input: `[c][copy][byte]`.
fn replicate_part(plan: &Plan<'_>, tiles: &TilePlan, p: usize, xpad: &[Q8]) -> Vec<Q8> {
    let cn = plan.s.channels;
    let rb = tiles.row_bytes;
    let span = &tiles.parts[p].input;
    let mut out = vec![0; cn * 4 * rb];
    let mut window = vec![0; rb];
    for ch in 0..cn {
        let src = &xpad[ch * plan.xstride..(ch + 1) * plan.xstride];
        let end = span.end.min(src.len());
        window.fill(0);
        window[..end - span.start].copy_from_slice(&src[span.start..end]);
        replicate_into(&window, &mut out[ch * 4 * rb..(ch + 1) * 4 * rb]);
    }
    out
}

fn replica_row(buf: &[Q8], rb: usize, ch: usize) -> RowSrc<'_> {
    let b = &buf[ch * 4 * rb..(ch + 1) * 4 * rb];
    RowSrc::Replicas([&b[..rb], &b[rb..2 * rb], &b[2 * rb..3 * rb], &b[3 * rb..]])
}

fn check_trial(trial: &QTensor, w: &ModelWeights) -> Result<(), EngineError> {
    let s = &w.shape;
    if trial.shape() != [s.channels, s.samples] || trial.layout() != Layout::TimeInnermost {
        return Err(EngineError::Shape {
            expected: format!("{}x{} {}", s.channels, s.samples, Layout::TimeInnermost.as_str()),
            found: format!("{:?} {}", trial.shape(), trial.layout().as_str()),
        });
    }
    if trial.scale() != w.input_scale {
        return Err(EngineError::ScaleMismatch { expected: w.input_scale.to_string(), found: trial.scale().to_string() });
    }
    Ok(())
}

/// Runs the whole network on one trial under `cfg`.
pub fn run_inference(trial: &QTensor, w: &ModelWeights, cfg: &StrategyConfig) -> Result<RunOutput, EngineError> {
    cfg.validate()?;
    check_trial(trial, w)?;
    let plan = Plan::new(w, cfg)?;
    let s = plan.s;
    let (cn, tn, f1, nf, p1) = (s.channels, s.samples, s.temporal_filters, s.spatial_filters(), s.pooled1());
    let mut ctxs: Vec<WorkerCtx> = (0..cfg.workers).map(|_| WorkerCtx::default()).collect();
    let mut mem = MemTracker::new();

    let tiles = if cfg.replicated { Some(make_tile_plan_with_parts(&s, cfg.l1_budget, cfg.tile_parts)?) } else { None };

    // zero-padded input rows
    let left = ModelShape::padding(s.temporal_kernel).0;
    let mut xpad = vec![0 as Q8; cn * plan.xstride];
    for ch in 0..cn {
        xpad[ch * plan.xstride + left..ch * plan.xstride + left + tn].copy_from_slice(trial.row(ch));
    }
    mem.alloc("input", xpad.len());

    let spatial_bytes = nf * plan.sstride;
    let states = if cfg.interleaved {
        mem.alloc("spatial", spatial_bytes);
        mem.alloc_scratch("temporal block", 4 * cn * std::mem::size_of::<Acc32>());
        let mut states = vec![SpatialState::new(&s); f1];
        match &tiles {
            Some(tp) => {
                let mut current = replicate_part(&plan, tp, 0, &xpad);
                mem.alloc("replica", tp.part_bytes);
                for p in 0..tp.parts.len() {
                    let next = (p + 1 < tp.parts.len()).then(|| {
                        mem.alloc("replica", tp.part_bytes);
                        replicate_part(&plan, tp, p + 1, &xpad)
                    });
                    let buf = &current;
                    let row = |ch: usize| replica_row(buf, tp.row_bytes, ch);
                    interleaved_part(&plan, tp.parts[p].core.clone(), &row, &mut states, &mut ctxs);
                    mem.free("replica");
                    if let Some(n) = next {
                        current = n;
                    }
                }
            }
            None => {
                let xs = plan.xstride;
                let row = |ch: usize| RowSrc::Plain(&xpad[ch * xs..(ch + 1) * xs]);
                interleaved_part(&plan, 0..tn, &row, &mut states, &mut ctxs);
            }
        }
        mem.free_scratch("temporal block");
        mem.free("input");
        states
    } else {
        let map = temporal_layer(&plan, &xpad, &mut ctxs);
        let map_bytes = if cfg.transposed { f1 * tn * align4(cn) } else { f1 * cn * align4(tn) };
        mem.alloc("temporal", map_bytes);
        mem.free("input");
        mem.alloc("spatial", spatial_bytes);
        let states = spatial_layer(&plan, &map, &mut ctxs);
        mem.free("temporal");
        states
    };

    // pooled spatial maps, padded for the separable convolution
    let sleft = ModelShape::padding(s.separable_kernel).0;
    let mut spad = vec![0 as Q8; spatial_bytes];
    for (f, st) in states.iter().enumerate() {
        for (d, out) in st.out.iter().enumerate() {
            let o = f * s.depth_multiplier + d;
            spad[o * plan.sstride + sleft..o * plan.sstride + sleft + p1].copy_from_slice(out);
        }
    }
    if let Some(i) = cfg.fault {
        let i = i % (nf * p1);
        let at = (i / p1) * plan.sstride + sleft + i % p1;
        spad[at] = spad[at].wrapping_add(1);
    }

    let (depthwise, separable) = separable_stage(&plan, &spad, &mut ctxs, &mut mem);
    mem.free("spatial");

    let fc_c = ctxs[0].counters.layer_mut(LayerId::Fc);
    let logits = fc_dots(&separable, &w.fc, &w.fc_bias, cfg.packed, fc_c);
    mem.free("separable");
    let class = argmax(&logits);

    let spatial = (0..nf).flat_map(|o| spad[o * plan.sstride + sleft..o * plan.sstride + sleft + p1].to_vec()).collect();
    let mut layers = Counters::default();
    ctxs.iter().for_each(|c| layers.merge(&c.counters));
    let worker_macs = ctxs.iter().map(|c| c.counters.total().macs).collect();
    let report = RunReport::new(s.tag(), cfg.to_string(), cfg.workers, layers, worker_macs, &mem);
    Ok(RunOutput { logits, class, report, trace: LayerTrace { spatial, depthwise, separable } })
}

/// Depthwise separable convolution, batch norm, ReLU and pooling on the
/// padded spatial maps. Returns the dense depthwise output and the pooled
/// `F1*D x T/64` result; leaves `separable` allocated in `mem`.
fn separable_stage(plan: &Plan<'_>, spad: &[Q8], ctxs: &mut [WorkerCtx], mem: &mut MemTracker) -> (Vec<Q8>, Vec<Q8>) {
    let s = &plan.s;
    let (nf, p1, p2) = (s.spatial_filters(), s.pooled1(), s.pooled2());
    let ss = plan.sstride;
    let shift = plan.w.depthwise_shift;

    let replicas = (plan.kind == ConvKind::Replicated).then(|| {
        let mut r = vec![0; 4 * spad.len()];
        for o in 0..nf {
            replicate_into(&spad[o * ss..(o + 1) * ss], &mut r[o * 4 * ss..(o + 1) * 4 * ss]);
        }
        mem.alloc("separable replica", r.len());
        r
    });

    let mut rows = vec![vec![0 as Q8; p1]; nf];
    run_units(&WorkerPartition::new(nf, ctxs.len()), &mut rows, ctxs, |o, row, ctx| {
        let c = ctx.counters.layer_mut(LayerId::Depthwise);
        let src = match &replicas {
            Some(r) => replica_row(r, ss, o),
            None => RowSrc::Plain(&spad[o * ss..(o + 1) * ss]),
        };
        let mut acc = vec![0; p1];
        conv_row(plan.kind, src, plan.depthwise_taps(o), &mut acc, c);
        for (q, &a) in row.iter_mut().zip(&acc) {
            *q = sat8(shift_round(a, shift));
        }
    });
    mem.alloc("depthwise", nf * align4(p1));
    if replicas.is_some() {
        mem.free("separable replica");
    }
    let dense: Vec<Q8> = rows.concat();
    // channel-innermost copy for the pointwise reduction under B
    let by_time: Option<Vec<Q8>> = plan.cfg.transposed.then(|| {
        let mut v = vec![0; p1 * nf];
        for o in 0..nf {
            for t in 0..p1 {
                v[t * nf + o] = dense[o * p1 + t];
            }
        }
        v
    });
    let packed = plan.cfg.packed && by_time.is_some() && nf % 4 == 0;

    let mut pooled = vec![vec![0 as Q8; p2]; nf];
    run_units(&WorkerPartition::new(nf, ctxs.len()), &mut pooled, ctxs, |o, out, ctx| {
        let c = ctx.counters.layer_mut(LayerId::Pointwise);
        let wrow = plan.w.pointwise.row(o);
        let mut window = PoolWindow::default();
        for t in 0..p1 {
            let x: Acc32 = match &by_time {
                Some(v) if packed => {
                    let col = &v[t * nf..(t + 1) * nf];
                    let mut acc = 0;
                    for g in 0..nf / 4 {
                        acc = sdot4(PackedWord::load(col, 4 * g), PackedWord::load(wrow, 4 * g), acc);
                    }
                    c.packed_loads += (nf / 2) as u64;
                    c.macs += nf as u64;
                    acc
                }
                Some(v) => {
                    c.macs += nf as u64;
                    v[t * nf..(t + 1) * nf].iter().zip(wrow).map(|(&a, &b)| a as Acc32 * b as Acc32).sum()
                }
                None => {
                    c.macs += nf as u64;
                    (0..nf).map(|i| dense[i * p1 + t] as Acc32 * wrow[i] as Acc32).sum()
                }
            };
            if let Some(q) = window.push(x as i64, &plan.separable_blk[o], plan.cfg.reordered, c) {
                out[t / s.pool] = q;
            }
        }
    });
    mem.alloc("separable", nf * p2);
    mem.free("depthwise");
    (dense, pooled.concat())
}

fn fc_dots(x: &[Q8], w: &QWeights, bias: &[Acc32], packed: bool, c: &mut LayerCounters) -> Vec<Acc32> {
    let n = x.len();
    (0..w.shape[0])
        .map(|k| {
            let row = w.row(k);
            let dot = if packed && n.is_multiple_of(4) {
                c.packed_loads += (n / 2) as u64;
                (0..n / 4).fold(0, |acc, g| sdot4(PackedWord::load(x, 4 * g), PackedWord::load(row, 4 * g), acc))
            } else {
                x.iter().zip(row).map(|(&a, &b)| a as Acc32 * b as Acc32).sum()
            };
            c.macs += n as u64;
            dot + bias[k]
        })
        .collect()
}

fn argmax(logits: &[Acc32]) -> usize {
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = k;
        }
    }
    best
}

/// The fully connected layer on its own: integer logits (dot products
/// plus bias) and the winning class, lowest index on ties.
pub fn fc_layer(x: &[Q8], w: &QWeights, bias: &[Acc32], packed: bool) -> Result<(Vec<Acc32>, usize), EngineError> {
    if x.len() != w.shape[1] || bias.len() != w.shape[0] {
        return Err(EngineError::Shape {
            expected: format!("{} inputs, {} biases", w.shape[1], w.shape[0]),
            found: format!("{} inputs, {} biases", x.len(), bias.len()),
        });
    }
    let logits = fc_dots(x, w, bias, packed, &mut LayerCounters::default());
    let class = argmax(&logits);
    Ok((logits, class))
}

/// The depthwise separable block on its own: `F1*D x T/8` in, pooled
/// `F1*D x T/64` out, on a single worker.
pub fn separable_block(x: &QTensor, w: &ModelWeights, cfg: &StrategyConfig) -> Result<QTensor, EngineError> {
    cfg.validate()?;
    let s = w.shape;
    let (nf, p1) = (s.spatial_filters(), s.pooled1());
    if x.shape() != [nf, p1] {
        return Err(EngineError::Shape { expected: format!("{nf}x{p1}"), found: format!("{:?}", x.shape()) });
    }
    let plan = Plan::new(w, cfg)?;
    let sleft = ModelShape::padding(s.separable_kernel).0;
    let mut spad = vec![0 as Q8; nf * plan.sstride];
    for o in 0..nf {
        spad[o * plan.sstride + sleft..o * plan.sstride + sleft + p1].copy_from_slice(x.row(o));
    }
    let mut ctxs = vec![WorkerCtx::default()];
    let (_, pooled) = separable_stage(&plan, &spad, &mut ctxs, &mut MemTracker::new());
    Ok(QTensor::from_dense(&[nf, s.pooled2()], Layout::TimeInnermost, &pooled, w.separable_bn.out_scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_trial, synth_weights, Scale};

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[5, 5, 5, 5]), 0);
        assert_eq!(argmax(&[1, 7, 3, 7]), 1);
    }

    #[test]
    fn fc_one_hot_picks_weight_column() {
        let w = synth_weights(3);
        let mut x = vec![0; 272];
        x[100] = 1;
        for packed in [false, true] {
            let (logits, _) = fc_layer(&x, &w.fc, &w.fc_bias, packed).unwrap();
            for k in 0..4 {
                assert_eq!(logits[k], w.fc.get(k, 100) as i32 + w.fc_bias[k]);
            }
        }
        assert_eq!(fc_layer(&[0; 272], &w.fc, &[0; 4], false).unwrap(), (vec![0; 4], 0));
        assert!(fc_layer(&[0; 10], &w.fc, &w.fc_bias, false).is_err());
    }

    #[test]
    fn strategies_agree_on_one_trial() {
        let w = synth_weights(11);
        let x = synth_trial(11, w.input_scale);
        let base = run_inference(&x, &w, &StrategyConfig::baseline()).unwrap();
        for cfg in StrategyConfig::all_presets() {
            let out = run_inference(&x, &w, &cfg).unwrap();
            assert_eq!(out.logits, base.logits, "{cfg}");
            assert_eq!(out.trace, base.trace, "{cfg}");
        }
    }

    #[test]
    fn rejects_mismatched_trials() {
        let w = synth_weights(1);
        let x = synth_trial(1, Scale::pow2(-3));
        assert!(matches!(run_inference(&x, &w, &StrategyConfig::baseline()), Err(EngineError::ScaleMismatch { .. })));
        let x = QTensor::zeros(&[22, 1000], Layout::TimeInnermost, w.input_scale);
        assert!(matches!(run_inference(&x, &w, &StrategyConfig::baseline()), Err(EngineError::Shape { .. })));
    }

    #[test]
    fn separable_identity_pointwise() {
        let mut w = synth_weights(2);
        w.pointwise.data.iter_mut().for_each(|v| *v = 0);
        for o in 0..16 {
            w.pointwise.data[o * 16 + o] = 1;
        }
        for p in w.separable_bn.params.iter_mut() {
            p.bias = 0;
            p.divisor = 1;
        }
        let vals: Vec<i8> = (0..16 * 140).map(|i| ((i * 7919) % 200) as i8).collect();
        let x = QTensor::from_dense(&[16, 140], Layout::TimeInnermost, &vals, w.spatial_bn.out_scale);
        let out = separable_block(&x, &w, &StrategyConfig::baseline()).unwrap();
        assert_eq!(out.shape(), [16, 17]);
        // brute force: depthwise, shift, ReLU, mean of 8 rounded half away
        for o in 0..16 {
            let row = x.row(o);
            let dw: Vec<i32> = (0..140)
                .map(|t| {
                    let acc: i32 = (0..16)
                        .map(|k| {
                            let j = t as isize + k as isize - 7;
                            if (0..140).contains(&j) { row[j as usize] as i32 * w.depthwise.get(o, 15 - k) as i32 } else { 0 }
                        })
                        .sum();
                    sat8(shift_round(acc, w.depthwise_shift)) as i32
                })
                .collect();
            for j in 0..17 {
                let sum: i32 = dw[8 * j..8 * j + 8].iter().map(|&v| v.max(0)).sum();
                assert_eq!(out.row(o)[j] as i32, crate::fxp::div_round(sum, 8), "o={o} j={j}");
            }
        }
        let alt = separable_block(&x, &w, &StrategyConfig::preset("h").unwrap()).unwrap();
        assert_eq!(alt, out);
    }
}
