use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hopfzero_cli::cache::Cache;
use hopfzero_cli::commands;
use hopfzero_cli::config;

#[derive(Parser)]
#[command(name = "hopfzero", version, about = "Exponentially small splitting near a Hopf-zero singularity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Working precision in bits
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Neither read nor write the result cache
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the integral lattice by quadrature, closed form and asymptotics
    Integrals,
    /// Melnikov coefficients per delta and mode
    Melnikov,
    /// Measure the manifold splitting per delta
    Splitting,
    /// Compare cached splitting samples with the predictions
    Report,
    /// Validate the configuration and describe it
    CheckConfig,
}

fn run(cli: Cli) -> Result<bool> {
    let path = cli.config.ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let run = config::load(&path)?.resolve(cli.out.as_deref(), cli.precision)?;
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let cache = Cache::new(&run.cache_dir, !cli.no_cache);
    match cli.command {
        Command::CheckConfig => {
            print!("{}", commands::describe(&run));
            Ok(true)
        }
        Command::Integrals => {
            println!("{}", commands::cmd_integrals(&run)?.display());
            Ok(true)
        }
        Command::Melnikov => {
            println!("{}", commands::cmd_melnikov(&run)?.display());
            Ok(true)
        }
        Command::Splitting => {
            for p in commands::cmd_splitting(&run, &cache)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Report => {
            let (report, _) = commands::cmd_report(&run, &cache)?;
            print!("{}", report.summary());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
