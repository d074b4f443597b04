use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use varflow_cli::run::{write_error_record, EXIT_IO};
use varflow_cli::{config_hash, run_experiment, Command, RunError, RunOptions};

/// Runs solver, stability, convergence and function-space experiments
/// from a TOML config and writes CSV results.
#[derive(Debug, Parser)]
#[command(name = "varflow", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    #[arg(long)]
    config: PathBuf,

    /// output directory
    #[arg(long, env = "VARFLOW_OUT", default_value = "varflow-out")]
    out: PathBuf,

    /// overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,

    /// worker threads for independent solves, 0 for all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(source) => {
            let err = RunError::Io {
                action: "read",
                path: args.config.clone(),
                source,
            };
            let record = err.record(None, args.seed);
            eprintln!("{record}");
            write_error_record(&args.out, &record);
            return ExitCode::from(EXIT_IO as u8);
        }
    };
    let opts = RunOptions {
        command: Some(args.command),
        out: args.out.clone(),
        seed: args.seed,
        threads: args.threads,
    };
    match run_experiment(&text, &opts) {
        Ok(summary) => {
            println!("{}", summary.message);
            ExitCode::SUCCESS
        }
        Err(err) => {
            let seed = args.seed.or_else(|| {
                varflow_cli::ExperimentConfig::parse(&text)
                    .ok()
                    .and_then(|c| c.seed)
            });
            let record = err.record(Some(&config_hash(&text)), seed);
            eprintln!("{record}");
            write_error_record(&args.out, &record);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
