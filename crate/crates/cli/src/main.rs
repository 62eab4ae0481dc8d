use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use qeegnet_cli::args::{Cli, Command};
use qeegnet_cli::commands::{self, CompareOptions};

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Run { inputs, strategy, workers, report } => {
            let cfg = commands::strategy(&strategy, workers)?;
            commands::cmd_run(&inputs.weights, &inputs.input, &cfg, report.as_deref(), &mut out)?;
        }
        Command::Compare { weights, input, all_strategies, seeds, trials, workers, inject_fault } => {
            let opts = CompareOptions { all_strategies, workers, fault: inject_fault };
            match (seeds, weights, input) {
                (Some(seeds), _, _) => commands::cmd_compare_sweep(seeds, trials, &opts, &mut out)?,
                (None, Some(w), Some(i)) => commands::cmd_compare(&w, &i, &opts, &mut out)?,
                _ => unreachable!("clap requires --weights and --input without --seeds"),
            }
        }
        Command::Gen { seed, out_weights, out_trial } => commands::cmd_gen(seed, &out_weights, &out_trial, &mut out)?,
        Command::Oracle { inputs, strategy, workers } => {
            let cfg = commands::strategy(&strategy, workers)?;
            commands::cmd_oracle(&inputs.weights, &inputs.input, &cfg, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
