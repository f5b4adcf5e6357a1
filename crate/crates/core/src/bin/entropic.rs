use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entropic::engine::{self, io, run_ablation_suite, EngineConfig};

#[derive(Parser)]
#[command(name = "entropic", version, about = "Entropy-driven decoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration from a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the five-arm ablation on a workload preset.
    Ablate {
        /// decisive_drops, noisy_plateau or mixed
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a run or ablation directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Command) -> entropic::Result<()> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = EngineConfig::from_toml_str(&std::fs::read_to_string(&config)?)?;
            let output = engine::run(&cfg)?;
            io::write_run(&out, &output)?;
            print!("{}", io::describe_report(&output.report));
        }
        Command::Ablate { preset, seed, out } => {
            let cfg = EngineConfig::preset_named(&preset, seed)?;
            let suite = run_ablation_suite(&cfg)?;
            let table = io::write_ablation(&out, &suite)?;
            print!("{}", table.to_csv());
        }
        Command::Report { input } => print!("{}", io::describe_dir(&input)?),
    }
    Ok(())
}
