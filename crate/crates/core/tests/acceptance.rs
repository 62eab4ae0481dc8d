//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qeegnet::instrument::{compare_reports, LayerCounters, LayerId};
use qeegnet::kernels::{
    conv_scalar, conv_shuffle, fc_layer, fused_pool_bn_relu, make_tile_plan, make_tile_plan_with_parts, padded_len,
    replicate, run_inference, separable_block, spatial_dw32, xcorr_replicated, xcorr_shuffle, StrategyConfig,
    DEFAULT_L1_BUDGET,
};
use qeegnet::model::{
    expected_param_count, mac_breakdown, mac_count, param_count, synth_trial, synth_weights, Layout, MacMode, ModelWeights,
    QTensor, QEEGNET,
};
use qeegnet::quant::{merge_bn, reorder_pool_bn, rpr_fraction, ste_quantize, RequantParams, RprSchedule};
use qeegnet::reference::{dequantize_trial, infer_fakequant};

type R = Ratio<i128>;
type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs `f(i)` for `i in 0..n` on all cores, keeping results in order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = thread::available_parallelism().map_or(4, |p| p.get()).min(n.max(1));
    let f = &f;
    let mut out: Vec<(usize, T)> = thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| s.spawn(move || (k..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, t)| t).collect()
}

/// The random (weights, trial) pair number `i`.
fn pair(i: usize) -> (ModelWeights, QTensor) {
    let w = synth_weights(1_000 + i as u64);
    let x = synth_trial(50_000 + i as u64, w.input_scale);
    (w, x)
}

fn ladder() -> Vec<StrategyConfig> {
    StrategyConfig::all_presets()
        .into_iter()
        .flat_map(|c| [c.clone().with_workers(1), c.with_workers(8)])
        .collect()
}

fn c1_param_count() -> Outcome {
    for seed in 0..10 {
        let n = param_count(&synth_weights(seed));
        ensure(n == 2548, || format!("seed {seed}: {n} parameters"))?;
    }
    ensure(expected_param_count(&QEEGNET) == 2548, || "shape-derived count differs".into())?;
    Ok("2548 parameters for seeds 0..10".into())
}

fn c2_mac_accounting() -> Outcome {
    let padded = mac_count(&QEEGNET, MacMode::Padded);
    ensure(padded == 13_140_768, || format!("padded count {padded}"))?;
    let b = mac_breakdown(&QEEGNET, MacMode::Padded);
    for seed in 0..3 {
        let (w, x) = pair(seed);
        for cfg in ladder() {
            let r = run_inference(&x, &w, &cfg).map_err(|e| e.to_string())?.report;
            ensure(r.mac_count == padded, || format!("{cfg} W={}: measured {} MACs", cfg.workers, r.mac_count))?;
            let per_layer = [b.temporal, b.spatial, b.depthwise, b.pointwise, b.fc];
            for (id, want) in LayerId::ALL.into_iter().zip(per_layer) {
                let got = r.layers.layer(id).macs;
                ensure(got == want, || format!("{cfg}: {} layer {got} MACs, expected {want}", id.name()))?;
            }
            ensure(r.worker_macs.iter().sum::<u64>() == padded, || "worker MACs do not sum to the total".into())?;
        }
    }
    Ok(format!(
        "{padded} MACs measured under all 6 strategies x W in {{1,8}}; effective count {} (12,984,432 not reproduced)",
        mac_count(&QEEGNET, MacMode::Effective)
    ))
}

fn c3_cross_strategy() -> Outcome {
    let configs = ladder();
    let failures: Vec<String> = par_map(100, |i| {
        let (w, x) = pair(i);
        let base = run_inference(&x, &w, &configs[0]).expect("baseline run");
        configs[1..]
            .iter()
            .filter_map(|cfg| {
                let o = run_inference(&x, &w, cfg).expect("run");
                (o.logits != base.logits || o.trace != base.trace)
                    .then(|| format!("pair {i}, {cfg} W={}: {:?} vs {:?}", cfg.workers, o.logits, base.logits))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    ensure(failures.is_empty(), || failures[0].clone())?;
    Ok(format!("100 pairs x {} configurations, identical logits and intermediates", configs.len()))
}

fn c4_oracle_bridge() -> Outcome {
    let cfg = StrategyConfig::preset("h").unwrap();
    let mismatches: Vec<String> = par_map(100, |i| {
        let (w, x) = pair(i);
        assert!(w.all_scales_dyadic());
        let out = run_inference(&x, &w, &cfg).expect("run");
        let fq = infer_fakequant(&w, &dequantize_trial(&x)).expect("fakequant");
        let s = w.logit_scale().value();
        let deq: Vec<f64> = out.logits.iter().map(|&z| z as f64 * s).collect();
        (deq != fq.logits).then(|| format!("pair {i}: engine {deq:?} vs fake-quant {:?}", fq.logits))
    })
    .into_iter()
    .flatten()
    .collect();
    ensure(mismatches.is_empty(), || mismatches[0].clone())?;
    Ok("scale_FC x integer logits == fake-quantized logits on 100 pairs".into())
}

fn c5_bn_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let p1 = RequantParams::new(rng.gen_range(-50_000..50_000), rng.gen_range(1..3_000)).unwrap();
        let p2 = RequantParams::new(rng.gen_range(-20_000..20_000), rng.gen_range(1..3_000)).unwrap();
        let m = merge_bn(p1, p2).map_err(|e| e.to_string())?;
        let acc: Vec<i128> = (0..22).map(|_| rng.gen_range(-900_000..900_000)).collect();
        let ws: Vec<i128> = (0..22).map(|_| rng.gen_range(-128..128)).collect();
        // textbook order: divide by f1, spatial sum, add b2, divide by f2
        let spatial: R = acc.iter().zip(&ws).map(|(&a, &w)| R::new(a + p1.bias as i128, p1.divisor as i128) * w).sum();
        let unmerged = (spatial + p2.bias as i128) / p2.divisor as i128;
        let sum: i128 = acc.iter().zip(&ws).map(|(&a, &w)| (a + m.pre_bias as i128) * w).sum();
        let merged = R::new(sum + m.stage.bias as i128, m.stage.divisor as i128);
        ensure(unmerged == merged, || format!("merge tuple {i}: {unmerged} vs {merged}"))?;
    }
    for i in 0..1000 {
        let b = rng.gen_range(-100_000..100_000);
        let f = rng.gen_range(1..50_000);
        let n = rng.gen_range(1..=16u32);
        let blk = reorder_pool_bn(b, f, n).map_err(|e| e.to_string())?;
        let xs: Vec<i64> = (0..n).map(|_| rng.gen_range(-3_000_000..3_000_000)).collect();
        // textbook order: batch norm, ReLU, mean
        let naive: R = xs.iter().map(|&x| R::new(x as i128 + b as i128, f as i128).max(R::from_integer(0))).sum::<R>()
            / n as i128;
        let sum: i128 = xs.iter().map(|&x| x.max(blk.relu_threshold as i64) as i128).sum();
        let reordered = R::new(blk.pool_bias as i128 + sum, blk.combined_divisor as i128);
        ensure(naive == reordered, || format!("reorder tuple {i}: {naive} vs {reordered}"))?;
        if n == 8 {
            let q = fused_pool_bn_relu(&xs, &blk, &mut LayerCounters::default());
            let want = naive.round().to_integer().clamp(-128, 127) as i8;
            ensure(q == want, || format!("reorder tuple {i}: fused {q} vs rounded {want}"))?;
        }
    }
    Ok("merge_bn and reorder_pool_bn exact on 1000 random tuples each".into())
}

fn c6_divisions() -> Outcome {
    let (w, x) = pair(0);
    let run = |cfg: &StrategyConfig| run_inference(&x, &w, cfg).map(|o| o.report).map_err(|e| e.to_string());
    let base = run(&StrategyConfig::baseline())?;
    let mut fg = StrategyConfig::baseline();
    fg.merged_bn = true;
    fg.reordered = true;
    let fg = run(&fg)?;
    let efg = run(&StrategyConfig::preset("efg").unwrap())?;
    let temporal = base.layers.layer(LayerId::Temporal).divisions;
    ensure(temporal == 198_000, || format!("baseline temporal divisions {temporal}"))?;
    for other in [&fg, &efg] {
        let cmp = compare_reports(&base, other).map_err(|e| e.to_string())?;
        let d = cmp.get("divisions").unwrap();
        let ratio = d.ratio().unwrap_or(0.0);
        let red = d.reduction_percent().unwrap_or(0.0);
        ensure(ratio >= 50.0 && red >= 98.0, || format!("{}: {} -> {} ({ratio:.1}x, {red:.2}%)", other.strategy, d.a, d.b))?;
    }
    let stage = |r: &qeegnet::RunReport| r.layers.layer(LayerId::Temporal).divisions + r.layers.layer(LayerId::Spatial).divisions;
    ensure(stage(&base) > 10 * stage(&fg), || "temporal+spatial stage not reduced 10x".into())?;
    let d = compare_reports(&base, &fg).unwrap();
    let d = d.get("divisions").unwrap();
    Ok(format!(
        "{} -> {} divisions ({:.1}x, {:.2}% fewer); temporal block 198000 in baseline",
        d.a,
        d.b,
        d.ratio().unwrap(),
        d.reduction_percent().unwrap()
    ))
}

fn c7_memory() -> Outcome {
    let (w, x) = pair(1);
    let peak = |p: &str| run_inference(&x, &w, &StrategyConfig::preset(p).unwrap()).map(|o| o.report.peak_featuremap_bytes);
    let (base, e, h) = (peak("baseline").unwrap(), peak("efg").unwrap(), peak("h").unwrap());
    let pct = |v: usize| 100.0 * v as f64 / base as f64;
    ensure(pct(e) <= 20.0, || format!("E peak {e} is {:.1}% of baseline {base}", pct(e)))?;
    ensure(e < h && h < base, || format!("ordering violated: E {e}, H {h}, baseline {base}"))?;
    ensure(pct(h) <= 70.0, || format!("H peak {h} is {:.1}% of baseline {base}", pct(h)))?;
    Ok(format!("peak bytes baseline {base}, E {e} ({:.1}%), H {h} ({:.1}%)", pct(e), pct(h)))
}

fn c8_replication() -> Outcome {
    let (w, x) = pair(2);
    let mut shuffle = Vec::new();
    for p in ["ab", "c", "d"] {
        let r = run_inference(&x, &w, &StrategyConfig::preset(p).unwrap()).unwrap().report;
        let n = r.layers.layer(LayerId::Temporal).realignments;
        ensure(n > 0, || format!("{p}: no temporal realignments"))?;
        shuffle.push(n);
    }
    let h = run_inference(&x, &w, &StrategyConfig::preset("h").unwrap()).unwrap().report;
    ensure(h.realignment_count == 0, || format!("H performed {} realignments", h.realignment_count))?;
    Ok(format!("temporal realignments ab/c/d = {shuffle:?}, H = 0"))
}

fn c9_tiling() -> Outcome {
    let plan = make_tile_plan(&QEEGNET, DEFAULT_L1_BUDGET).map_err(|e| e.to_string())?;
    ensure(plan.parts.len() == 5, || format!("{} parts", plan.parts.len()))?;
    ensure(plan.parts.iter().all(|p| p.core.len() == 225), || "parts are not 225 samples".into())?;
    ensure(plan.resident_bytes() <= 65_536, || format!("replicated parts need {} bytes", plan.resident_bytes()))?;
    ensure(make_tile_plan(&QEEGNET, 1_000).is_err(), || "tiny budget accepted".into())?;
    let h = StrategyConfig::preset("h").unwrap();
    let untiled = StrategyConfig::preset("efg").unwrap();
    let bad: Vec<String> = par_map(20, |i| {
        let (w, x) = pair(i);
        let reference = run_inference(&x, &w, &untiled).unwrap();
        let mut out = Vec::new();
        for parts in [5, 2, 3, 4, 7, 8] {
            let mut cfg = h.clone();
            cfg.tile_parts = parts;
            cfg.l1_budget = make_tile_plan_with_parts(&QEEGNET, usize::MAX, parts).unwrap().resident_bytes();
            let o = run_inference(&x, &w, &cfg).unwrap();
            if o.logits != reference.logits || o.trace != reference.trace {
                out.push(format!("pair {i}, {parts} parts differ from untiled"));
            }
        }
        out
    })
    .into_iter()
    .flatten()
    .collect();
    ensure(bad.is_empty(), || bad[0].clone())?;
    Ok(format!(
        "5 x 225-sample parts, {} bytes per replicated part, {} resident; tiled == untiled on 20 pairs",
        plan.part_bytes,
        plan.resident_bytes()
    ))
}

// brute-force oracles

fn oracle_conv(x: &[i8], w: &[i8]) -> Vec<i32> {
    let k = w.len() as isize;
    let left = (k - 1) / 2;
    (0..x.len() as isize)
        .map(|t| {
            (0..k)
                .map(|j| {
                    let src = t + j - left;
                    if src >= 0 && (src as usize) < x.len() {
                        x[src as usize] as i32 * w[(k - 1 - j) as usize] as i32
                    } else {
                        0
                    }
                })
                .sum()
        })
        .collect()
}

fn round_q8(v: R) -> i8 {
    v.round().to_integer().clamp(-128, 127) as i8
}

/// Batch norm, ReLU and mean pooling in textbook order, exactly.
fn oracle_bn_relu_pool(xs: &[i128], bias: i128, divisor: i128, n: usize) -> Vec<i8> {
    xs.chunks_exact(n)
        .map(|win| {
            let s: R = win.iter().map(|&x| R::new(x + bias, divisor).max(R::from_integer(0))).sum();
            round_q8(s / n as i128)
        })
        .collect()
}

fn oracle_separable(w: &ModelWeights, sp: &[i8]) -> (Vec<i8>, Vec<i8>) {
    let (nf, p1) = (16, 140);
    let mut dw = vec![0i8; nf * p1];
    for o in 0..nf {
        let acc = oracle_conv(&sp[o * p1..(o + 1) * p1], w.depthwise.row(o));
        for t in 0..p1 {
            dw[o * p1 + t] = round_q8(R::new(acc[t] as i128, 1 << w.depthwise_shift));
        }
    }
    let mut sep = Vec::new();
    for o in 0..nf {
        let p: Vec<i128> =
            (0..p1).map(|t| (0..nf).map(|i| dw[i * p1 + t] as i128 * w.pointwise.get(o, i) as i128).sum()).collect();
        let bn = w.separable_bn.params[o];
        sep.extend(oracle_bn_relu_pool(&p[..136], bn.bias as i128, bn.divisor as i128, 8));
    }
    (dw, sep)
}

fn oracle_fc(w: &ModelWeights, x: &[i8]) -> Vec<i32> {
    (0..4).map(|k| (0..272).map(|j| x[j] as i32 * w.fc.get(k, j) as i32).sum::<i32>() + w.fc_bias[k]).collect()
}

/// Whole-network integer oracle: textbook layer order, exact rational
/// batch norms, no strategy machinery.
fn oracle_network(w: &ModelWeights, x: &QTensor) -> (Vec<i8>, Vec<i32>) {
    let (c, t) = (22, 1125);
    let temporal: Vec<Vec<i32>> =
        (0..8 * c).map(|u| oracle_conv(x.row(u % c), w.temporal.row(u / c))).collect();
    let mut sp = vec![0i8; 16 * 140];
    for o in 0..16 {
        let f = o / 2;
        let b1 = w.temporal_bn.params[f];
        let b2 = w.spatial_bn.params[o];
        // unmerged: temporal BN output (a + b1)/f1 kept exact, spatial sum, spatial BN
        let s: Vec<R> = (0..t)
            .map(|tt| {
                (0..c)
                    .map(|ch| R::new(temporal[f * c + ch][tt] as i128 + b1.bias as i128, b1.divisor as i128) * w.spatial.get(o, ch) as i128)
                    .sum()
            })
            .collect();
        for j in 0..140 {
            let m: R = s[8 * j..8 * j + 8]
                .iter()
                .map(|v| ((v + b2.bias as i128) / b2.divisor as i128).max(R::from_integer(0)))
                .sum::<R>()
                / 8;
            sp[o * 140 + j] = round_q8(m);
        }
    }
    let (_, sep) = oracle_separable(w, &sp);
    (sp, oracle_fc(w, &sep))
}

fn rand_i8(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| rng.gen()).collect()
}

fn c10_kernel_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..50 {
        for (n, k) in [(1125, 64), (140, 16)] {
            let x = rand_i8(&mut rng, n);
            let w = rand_i8(&mut rng, k);
            let want = oracle_conv(&x, &w);
            let mut xpad = vec![0; padded_len(n, k)];
            xpad[(k - 1) / 2..(k - 1) / 2 + n].copy_from_slice(&x);
            let w_rev: Vec<i8> = w.iter().rev().copied().collect();
            let r = replicate(&xpad);
            let c = &mut LayerCounters::default();
            let mut out = vec![0; n];
            let kernels: [(&str, &dyn Fn(&mut [i32], &mut LayerCounters)); 4] = [
                ("conv_scalar", &|o, c| conv_scalar(&xpad, &w, o, c).unwrap()),
                ("conv_shuffle", &|o, c| conv_shuffle(&xpad, &w, o, c).unwrap()),
                ("xcorr_shuffle", &|o, c| xcorr_shuffle(&xpad, &w_rev, o, c).unwrap()),
                ("xcorr_replicated", &|o, c| xcorr_replicated([&r[0], &r[1], &r[2], &r[3]], &w_rev, o, c).unwrap()),
            ];
            for (name, kernel) in kernels {
                kernel(&mut out, c);
                ensure(out == want, || format!("{name} differs on trial {trial} ({n}x{k})"))?;
            }
        }

        let col: Vec<i64> = (0..8 * 22).map(|_| rng.gen_range(-2_000_000..2_000_000)).collect();
        let ws = rand_i8(&mut rng, 16 * 22);
        let got = spatial_dw32(&col, &ws, 22, 2, &mut LayerCounters::default());
        let want: Vec<i64> = (0..16).map(|o| (0..22).map(|ch| col[(o / 2) * 22 + ch] * ws[o * 22 + ch] as i64).sum()).collect();
        ensure(got == want, || format!("spatial_dw32 differs on trial {trial}"))?;

        let (b, f) = (rng.gen_range(-200_000..200_000), rng.gen_range(1..60_000));
        let xs: Vec<i64> = (0..8).map(|_| rng.gen_range(-4_000_000..4_000_000)).collect();
        let got = fused_pool_bn_relu(&xs, &reorder_pool_bn(b, f, 8).unwrap(), &mut LayerCounters::default());
        let xs128: Vec<i128> = xs.iter().map(|&v| v as i128).collect();
        ensure(got == oracle_bn_relu_pool(&xs128, b as i128, f as i128, 8)[0], || format!("fused pool differs on trial {trial}"))?;

        let w = synth_weights(70_000 + trial as u64);
        let sp = rand_i8(&mut rng, 16 * 140);
        let spt = QTensor::from_dense(&[16, 140], Layout::TimeInnermost, &sp, w.spatial_bn.out_scale);
        let (_, want_sep) = oracle_separable(&w, &sp);
        for p in ["baseline", "ab", "h"] {
            let got = separable_block(&spt, &w, &StrategyConfig::preset(p).unwrap()).map_err(|e| e.to_string())?;
            ensure(got.to_dense() == want_sep, || format!("separable_block ({p}) differs on trial {trial}"))?;
        }

        let fx = rand_i8(&mut rng, 272);
        for packed in [false, true] {
            let (logits, class) = fc_layer(&fx, &w.fc, &w.fc_bias, packed).unwrap();
            let want = oracle_fc(&w, &fx);
            let best = (0..4).fold(0, |b, k| if want[k] > want[b] { k } else { b });
            ensure(logits == want && class == best, || format!("fc_layer differs on trial {trial}"))?;
        }
    }

    // the whole network on random full-size trials
    let bad: Vec<String> = par_map(50, |i| {
        let w = synth_weights(80_000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(90_000 + i as u64);
        let vals: Vec<i8> = (0..22 * 1125).map(|_| rng.gen_range(-100..=100)).collect();
        let x = QTensor::from_dense(&[22, 1125], Layout::TimeInnermost, &vals, w.input_scale);
        let (sp, logits) = oracle_network(&w, &x);
        StrategyConfig::all_presets()
            .iter()
            .filter_map(|cfg| {
                let o = run_inference(&x, &w, cfg).unwrap();
                (o.trace.spatial != sp || o.logits != logits).then(|| format!("network trial {i} under {cfg} differs from oracle"))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    ensure(bad.is_empty(), || bad[0].clone())?;
    Ok("4 temporal/depthwise kernels, spatial_dw32, fused pool, separable, FC and the full network match brute force on 50 inputs each".into())
}

fn c11_ste_rpr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let scale = 2f64.powi(rng.gen_range(-10..4)) * rng.gen_range(0.5..2.0);
        let x = rng.gen_range(-300.0..300.0) * scale;
        let q = ste_quantize(x, scale);
        let again = ste_quantize(q.forward, scale);
        ensure(again.forward == q.forward, || format!("point {i}: not idempotent ({x} at scale {scale})"))?;
        let g = rng.gen_range(-5.0..5.0);
        ensure(q.backward(g) == g, || format!("point {i}: gradient not passed through"))?;
    }
    let sched = RprSchedule::default();
    let fr: Vec<Ratio<u32>> = (0..=1000).map(|e| rpr_fraction(e, &sched)).collect();
    ensure(fr.windows(2).all(|p| p[0] <= p[1]), || "rpr_fraction not monotone".into())?;
    ensure(fr[450] == Ratio::from_integer(0), || format!("fraction at 450 is {}", fr[450]))?;
    ensure(fr[650] == Ratio::from_integer(1), || format!("fraction at 650 is {}", fr[650]))?;
    Ok("STE idempotent with identity gradient on 1000 points; RPR fraction monotone, 0 at 450, 1 at 650".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("parameter count", 1, c1_param_count),
        ("MAC accounting", 10, c2_mac_accounting),
        ("cross-strategy bit-exactness", 120, c3_cross_strategy),
        ("oracle bridge", 60, c4_oracle_bridge),
        ("BN identities", 10, c5_bn_identities),
        ("division reduction", 30, c6_divisions),
        ("memory reduction", 30, c7_memory),
        ("replication property", 10, c8_replication),
        ("tiling", 30, c9_tiling),
        ("kernel oracles", 120, c10_kernel_oracles),
        ("STE/RPR units", 5, c11_ste_rpr),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("{detail}; took {:.1} s, budget {budget} s", elapsed.as_secs_f64()))
            }
            r => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status} {name}: {detail} [{:.2} s]", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
