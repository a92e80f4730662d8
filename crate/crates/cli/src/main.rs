use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kecausal_cli::{run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "kecausal", version, about = "Kernel mean embedding causal estimators and tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate interventional means and embeddings.
    Estimate(Args),
    /// Run a kernel independence or two-sample test.
    Test(Args),
    /// Sample a scenario to CSV.
    Simulate(Args),
    /// Estimator error against the oracle over sample sizes and seeds.
    Benchmark(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Report path; overrides the config. Stdout when neither is set.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, args) = match cli.command {
        Command::Estimate(a) => ("estimate", a),
        Command::Test(a) => ("test", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Benchmark(a) => ("benchmark", a),
    };
    match invoke(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn invoke(name: &str, args: Args) -> Result<(), CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if config.task.name() != name {
        return Err(CliError::config(
            "task.kind",
            format!("config describes a `{}` task but `{name}` was invoked", config.task.name()),
        ));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.output.is_some() {
        config.output = args.output;
    }
    let report = run(&config)?;
    if config.output.is_none() {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    Ok(())
}
