//! `sprl`: train, ensemble, predict and evaluate proto-role labelers.
//!
//! Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use sprl_core::ErrorKind;

use args::{Cli, Command};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // Built explicitly so no environment variable changes behaviour.
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn run(cli: Cli) -> sprl_core::Result<()> {
    match cli.command {
        Command::Train { data, train, out } => commands::cmd_train(&data, &train, &out),
        Command::Ensemble {
            data,
            train,
            n_voters,
            out,
        } => commands::cmd_ensemble(&data, &train, n_voters, &out),
        Command::Predict {
            model,
            data,
            split,
            out,
        } => commands::cmd_predict(&model, &data, split, &out),
        Command::Evaluate {
            predictions,
            gold,
            mode,
            out,
        } => commands::cmd_evaluate(&predictions, &gold, mode, out.as_deref()),
        Command::Significance { a, b, gold, out } => {
            commands::cmd_significance(&a, &b, &gold, out.as_deref())
        }
        Command::Ablate {
            data,
            train,
            n_voters,
            out,
        } => commands::cmd_ablate(&data, &train, n_voters, &out),
        Command::Convergence {
            model,
            data,
            split,
            out,
        } => commands::cmd_convergence(&model, &data, split, &out),
        Command::Synth {
            kind,
            size,
            dim,
            noise,
            seed,
            out,
        } => commands::cmd_synth(kind, size, dim, noise, seed, &out),
        Command::Verify { manifest } => commands::cmd_verify(&manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}
