//! The four subcommands. Each writes its human-readable output to `out`
//! and returns an error for anything that should end in a nonzero exit.

use std::fs;
use std::io::Write;
use std::path::Path;

use qeegnet::instrument::render_table;
use qeegnet::model::param_count;
use qeegnet::reference::infer_fakequant;
use qeegnet::{
    compare_reports, load_weights, run_inference, save_weights, synth_trial, synth_weights, EngineError, LoadError,
    ModelWeights, QTensor, ReportError, RunOutput, StrategyConfig,
};
use thiserror::Error;

use crate::trial::{TrialError, TrialFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("weights: {0}")]
    Load(#[from] LoadError),
    #[error("trial: {0}")]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{pair}strategy {strategy} differs from {reference} at {location}: {found} vs {expected}")]
    Mismatch { pair: String, strategy: String, reference: String, location: String, expected: i64, found: i64 },
    #[error("bridge violated at layer {layer}: max |engine - fake-quant| = {diff:e} at element {index}")]
    Bridge { layer: &'static str, diff: f64, index: usize },
}

fn load_pair(weights: &Path, input: &Path) -> Result<(ModelWeights, TrialFile), CliError> {
    let w = load_weights(weights)?;
    let t = TrialFile::read(input)?;
    Ok((w, t))
}

/// The configuration for a preset name, with an optional worker override.
pub fn strategy(name: &str, workers: Option<usize>) -> Result<StrategyConfig, CliError> {
    let mut cfg = StrategyConfig::preset(name)?;
    if let Some(n) = workers {
        cfg.workers = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn cmd_run(
    weights: &Path,
    input: &Path,
    cfg: &StrategyConfig,
    report: Option<&Path>,
    out: &mut impl Write,
) -> Result<RunOutput, CliError> {
    let (w, t) = load_pair(weights, input)?;
    let x = t.to_qtensor(&w.shape, w.input_scale)?;
    let run = run_inference(&x, &w, cfg)?;
    writeln!(out, "class: {}", run.class)?;
    writeln!(out, "logits: {}", join(&run.logits))?;
    writeln!(out, "logit scale: {}", w.logit_scale())?;
    write!(out, "{}", run.report.to_table())?;
    if let Some(path) = report {
        fs::write(path, run.report.to_kv())?;
        writeln!(out, "report written to {}", path.display())?;
    }
    Ok(run)
}

/// First element where two runs disagree, earliest layer first:
/// `(location, reference value, other value)`.
pub fn first_difference(w: &ModelWeights, a: &RunOutput, b: &RunOutput) -> Option<(String, i64, i64)> {
    let s = w.shape;
    let layers: [(&str, &[i8], &[i8], usize); 3] = [
        ("spatial", &a.trace.spatial, &b.trace.spatial, s.pooled1()),
        ("depthwise", &a.trace.depthwise, &b.trace.depthwise, s.pooled1()),
        ("separable", &a.trace.separable, &b.trace.separable, s.pooled2()),
    ];
    for (name, x, y, cols) in layers {
        if let Some(i) = (0..x.len().max(y.len())).find(|&i| x.get(i) != y.get(i)) {
            let (xa, yb) = (x.get(i).map_or(i64::MIN, |&v| v as i64), y.get(i).map_or(i64::MIN, |&v| v as i64));
            return Some((format!("{name}[f={}][t={}]", i / cols, i % cols), xa, yb));
        }
    }
    (0..a.logits.len())
        .find(|&k| a.logits.get(k) != b.logits.get(k))
        .map(|k| (format!("logits[class={k}]"), a.logits[k] as i64, b.logits.get(k).map_or(i64::MIN, |&v| v as i64)))
}

pub struct CompareOptions {
    /// Every ladder preset; otherwise only baseline against the top rung.
    pub all_strategies: bool,
    pub workers: Option<usize>,
    /// Corrupts one spatial element of the last strategy (negative control).
    pub fault: Option<usize>,
}

fn ladder(opts: &CompareOptions) -> Result<Vec<StrategyConfig>, CliError> {
    let names: &[&str] = if opts.all_strategies { &qeegnet::kernels::PRESETS } else { &["baseline", "h"] };
    // the worker override only applies to the rungs that are parallel anyway
    let mut cfgs = names
        .iter()
        .map(|n| {
            let parallel = StrategyConfig::preset(n)?.parallel();
            strategy(n, opts.workers.filter(|_| parallel))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if let Some(cfg) = cfgs.last_mut() {
        cfg.fault = opts.fault;
    }
    Ok(cfgs)
}

/// Runs every configuration on one pair and checks each against the first.
fn check_pair(w: &ModelWeights, x: &QTensor, cfgs: &[StrategyConfig], pair: &str) -> Result<Vec<RunOutput>, CliError> {
    let runs = cfgs.iter().map(|c| run_inference(x, w, c)).collect::<Result<Vec<_>, _>>()?;
    for (run, cfg) in runs.iter().zip(cfgs).skip(1) {
        if let Some((location, expected, found)) = first_difference(w, &runs[0], run) {
            return Err(CliError::Mismatch {
                pair: pair.to_string(),
                strategy: cfg.to_string(),
                reference: cfgs[0].to_string(),
                location,
                expected,
                found,
            });
        }
    }
    Ok(runs)
}

/// Side-by-side counters of every run, with the first-to-last ratio and
/// reduction.
pub fn counter_table(runs: &[RunOutput]) -> Result<String, CliError> {
    let (first, last) = (&runs[0].report, &runs[runs.len() - 1].report);
    let mut head = vec!["counter".to_string()];
    head.extend(runs.iter().map(|r| r.report.strategy.clone()));
    head.push(format!("{}/{}", first.strategy, last.strategy));
    head.push("reduction".into());
    let mut rows = vec![head];
    let mut workers = vec!["workers".to_string()];
    workers.extend(runs.iter().map(|r| r.report.workers.to_string()));
    rows.push(workers);
    let span = compare_reports(first, last)?;
    let columns = runs.iter().map(|r| compare_reports(first, &r.report)).collect::<Result<Vec<_>, _>>()?;
    for (i, c) in span.counters.iter().enumerate() {
        let mut row = vec![c.name.to_string()];
        row.extend(columns.iter().map(|col| col.counters[i].b.to_string()));
        row.push(c.ratio().map_or("-".into(), |r| format!("{r:.1}x")));
        row.push(c.reduction_percent().map_or("-".into(), |p| format!("{p:.2}%")));
        rows.push(row);
    }
    Ok(render_table(&rows))
}

pub fn cmd_compare(weights: &Path, input: &Path, opts: &CompareOptions, out: &mut impl Write) -> Result<(), CliError> {
    let (w, t) = load_pair(weights, input)?;
    let x = t.to_qtensor(&w.shape, w.input_scale)?;
    let cfgs = ladder(opts)?;
    let runs = check_pair(&w, &x, &cfgs, "")?;
    writeln!(out, "logits: {} (identical across {} strategies)", join(&runs[0].logits), runs.len())?;
    write!(out, "{}", counter_table(&runs)?)?;
    Ok(())
}

/// Seed sweep on synthetic data: weights from each seed, `trials` synthetic
/// trials per weight set.
pub fn cmd_compare_sweep(seeds: u64, trials: u64, opts: &CompareOptions, out: &mut impl Write) -> Result<(), CliError> {
    let cfgs = ladder(opts)?;
    let mut first = None;
    for seed in 0..seeds {
        let w = synth_weights(seed);
        for t in 0..trials {
            let x = synth_trial(seed << 32 | t, w.input_scale);
            let runs = check_pair(&w, &x, &cfgs, &format!("seed {seed} trial {t}: "))?;
            first.get_or_insert(runs);
        }
    }
    writeln!(out, "{} pairs x {} strategies: bit-exact", seeds * trials, cfgs.len())?;
    if let Some(runs) = first {
        write!(out, "{}", counter_table(&runs)?)?;
    }
    Ok(())
}

pub fn cmd_gen(seed: u64, out_weights: &Path, out_trial: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let w = synth_weights(seed);
    save_weights(&w, out_weights)?;
    let x = synth_trial(seed, w.input_scale);
    TrialFile::from_qtensor(&x).write(out_trial)?;
    writeln!(out, "weights: {} ({} parameters)", out_weights.display(), param_count(&w))?;
    writeln!(out, "trial: {} ({}x{} i8, scale {})", out_trial.display(), w.shape.channels, w.shape.samples, w.input_scale)?;
    Ok(())
}

/// Largest absolute difference and where it occurs.
fn max_diff(a: &[f64], b: &[f64]) -> (f64, usize) {
    if a.len() != b.len() {
        return (f64::INFINITY, a.len().min(b.len()));
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).enumerate().fold((0.0, 0), |m, (i, d)| if d > m.0 { (d, i) } else { m })
}

pub fn cmd_oracle(weights: &Path, input: &Path, cfg: &StrategyConfig, out: &mut impl Write) -> Result<(), CliError> {
    let (w, t) = load_pair(weights, input)?;
    let x = t.to_qtensor(&w.shape, w.input_scale)?;
    let real = t.to_real(&w.shape, w.input_scale)?;
    if !w.all_scales_dyadic() {
        writeln!(out, "note: some scales are not powers of two; the float oracle may round differently")?;
    }
    let run = run_inference(&x, &w, cfg)?;
    let fq = infer_fakequant(&w, &real)?;
    let deq = |q: &[i8], s: qeegnet::model::Scale| q.iter().map(|&v| v as f64 * s.value()).collect::<Vec<_>>();
    let logits: Vec<f64> = run.logits.iter().map(|&z| z as f64 * w.logit_scale().value()).collect();
    let layers: [(&'static str, Vec<f64>, &[f64]); 5] = [
        ("input", deq(&x.to_dense(), w.input_scale), &fq.input),
        ("spatial", deq(&run.trace.spatial, w.spatial_bn.out_scale), &fq.spatial),
        ("depthwise", deq(&run.trace.depthwise, w.depthwise_out_scale()), &fq.depthwise),
        ("separable", deq(&run.trace.separable, w.separable_bn.out_scale), &fq.separable),
        ("logits", logits, &fq.logits),
    ];
    let mut rows = vec![vec!["layer".to_string(), "elements".into(), "max |diff|".into(), "bridge".into()]];
    let mut failure = None;
    for (layer, engine, oracle) in &layers {
        let (diff, index) = max_diff(engine, oracle);
        let exact = diff == 0.0;
        rows.push(vec![layer.to_string(), engine.len().to_string(), format!("{diff}"), if exact { "exact" } else { "VIOLATED" }.into()]);
        if !exact && failure.is_none() {
            failure = Some(CliError::Bridge { layer, diff, index });
        }
    }
    write!(out, "{}", render_table(&rows))?;
    match failure {
        Some(e) => Err(e),
        None => {
            writeln!(out, "bridge: exact on all layers (class {}, strategy {cfg})", run.class)?;
            Ok(())
        }
    }
}
