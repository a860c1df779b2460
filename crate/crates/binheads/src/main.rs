//! Thin CLI over the experiment pipeline. Every subcommand takes the same
//! three flags and reads/writes one artifact directory, so the stages can
//! run individually or via `run`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error (bad files,
//! bad arguments, I/O), 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use binheads::harness::experiment;

#[derive(Parser)]
#[command(
    name = "binheads",
    version,
    about = "One-vs-rest classification with per-class-threshold OOD detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config file (`key = value` with [data]/[model]/[train]/
    /// [calibrate]/[sweep] sections); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed; stage seeds derive from it unless the config pins them.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Artifact directory all stages share.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write the three split CSVs.
    GenData(StageArgs),
    /// Train the sigmoid-head model and the softmax competitor.
    Train(StageArgs),
    /// Fit per-class thresholds, the MSP and energy thresholds, and the
    /// energy temperature on the validation split.
    Calibrate(StageArgs),
    /// Evaluate every configured method on the full test split.
    Eval(StageArgs),
    /// Run the OOD-count sweep over the configured methods.
    Sweep(StageArgs),
    /// Aggregate sweep.csv into the comparison table, charts and manifest.
    Report(StageArgs),
    /// Run gen-data, train, calibrate, sweep and report in order.
    Run(StageArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: &Command) -> binheads::Result<()> {
    let (args, stage): (&StageArgs, fn(&str, u64, &std::path::Path) -> binheads::Result<()>) =
        match command {
            Command::GenData(a) => (a, experiment::cli_gen_data),
            Command::Train(a) => (a, experiment::cli_train),
            Command::Calibrate(a) => (a, experiment::cli_calibrate),
            Command::Eval(a) => (a, experiment::cli_eval),
            Command::Sweep(a) => (a, experiment::cli_sweep),
            Command::Report(a) => (a, experiment::cli_report),
            Command::Run(a) => (a, |text, seed, out| {
                experiment::run_experiment(text, seed, out).map(|_| ())
            }),
        };
    let config_text = match &args.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    stage(&config_text, args.seed, &args.out)
}
