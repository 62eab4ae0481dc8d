use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qeegnet", version, about = "Deterministic 8-bit Q-EEGNet inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn worker_count(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a worker count"))?;
    if (1..=qeegnet::kernels::MAX_WORKERS).contains(&n) {
        Ok(n)
    } else {
        Err(format!("worker count must be between 1 and {}", qeegnet::kernels::MAX_WORKERS))
    }
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// QEEG1 weight file.
    #[arg(long)]
    pub weights: PathBuf,
    /// QTRL1 trial file.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify one trial under one strategy.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "h", value_parser = ["baseline", "ab", "c", "d", "efg", "h"])]
        strategy: String,
        /// Defaults to the strategy's own count (1 or 8).
        #[arg(long, env = "QEEGNET_WORKERS", value_parser = worker_count)]
        workers: Option<usize>,
        /// Where to write the key=value run report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run strategies side by side and check they agree bit for bit.
    Compare {
        /// QEEG1 weight file.
        #[arg(long, required_unless_present = "seeds", requires = "input")]
        weights: Option<PathBuf>,
        /// QTRL1 trial file.
        #[arg(long, required_unless_present = "seeds", requires = "weights")]
        input: Option<PathBuf>,
        /// Every ladder rung instead of just baseline and h.
        #[arg(long)]
        all_strategies: bool,
        /// Sweep synthetic weight seeds instead of reading files.
        #[arg(long, conflicts_with_all = ["weights", "input"])]
        seeds: Option<u64>,
        /// Synthetic trials per seed.
        #[arg(long, default_value_t = 1, requires = "seeds")]
        trials: u64,
        #[arg(long, env = "QEEGNET_WORKERS", value_parser = worker_count)]
        workers: Option<usize>,
        /// Corrupt this spatial element in the last strategy.
        #[arg(long, hide = true)]
        inject_fault: Option<usize>,
    },
    /// Write synthetic weights and a synthetic trial.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_weights: PathBuf,
        #[arg(long)]
        out_trial: PathBuf,
    },
    /// Check the engine against the fake-quantized float oracle.
    Oracle {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "h", value_parser = ["baseline", "ab", "c", "d", "efg", "h"])]
        strategy: String,
        #[arg(long, env = "QEEGNET_WORKERS", value_parser = worker_count)]
        workers: Option<usize>,
    },
}
