use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dfmheat_cli::run::{coarsen_cmd, gen_network, plan, run, RunOptions};
use dfmheat_cli::scenario::{BasisChoice, Scenario};
use dfmheat_cli::CliError;

#[derive(Parser)]
#[command(name = "dfmheat", version, about = "Fine and upscaled heat transport in fractured rock")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the scenario).
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, overrides_with = "no_fine_ref")]
        fine_ref: bool,
        /// Skip the fine reference run; no errors are reported then.
        #[arg(long)]
        no_fine_ref: bool,
        #[arg(long, value_parser = BasisChoice::parse)]
        basis: Option<BasisChoice>,
        /// Print the resolved plan as JSON and exit.
        #[arg(long)]
        dry_run: bool,
        #[arg(short, long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a fracture network from a spec and write it as a segment file.
    GenNetwork {
        spec: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Coarsen a scenario's first level and write the labels.
    Coarsen {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out, fine_ref, no_fine_ref, basis, dry_run, jobs, seed } => {
            let scenario = Scenario::load(&config)?;
            let fine_reference = match (fine_ref, no_fine_ref) {
                (_, true) => Some(false),
                (true, _) => Some(true),
                _ => None,
            };
            let opts = RunOptions { out_dir: out, fine_reference, basis, seed, jobs, dry_write: false };
            if dry_run {
                let p = plan(&scenario, &opts)?;
                println!("{}", serde_json::to_string_pretty(&p).expect("plan serializes"));
                return Ok(());
            }
            let report = run(&scenario, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
            log::info!("artifacts in {}", report.out_dir.display());
            Ok(())
        }
        Command::GenNetwork { spec, out, seed } => gen_network(&spec, &out, seed),
        Command::Coarsen { config, out } => coarsen_cmd(&config, &out),
    }
}
