use clap::{Parser, Subcommand};
use sqg_lab::harness::{self, CliOverrides, ReportFormat};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

/// Experiment runner for the fractional surface quasi-geostrophic toolkit.
///
/// Exit codes: 0 when every verdict passes, 1 when any fails (failures are
/// listed on stderr), 2 for config or runtime errors.
#[derive(Parser)]
#[command(name = "sqg-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct CommonFlags {
    /// Config file (TOML key = value sections, or JSON)
    config: PathBuf,
    /// Output root; overrides the config and the SQG_LAB_OUT variable
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and ensembles
    #[arg(long)]
    jobs: Option<usize>,
    /// Replaces the stochastic inputs (initial-data / ensemble seeds)
    #[arg(long)]
    seed: Option<u64>,
    /// csv | json | both
    #[arg(long, value_parser = ReportFormat::from_str)]
    format: Option<ReportFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its reports
    Run(CommonFlags),
    /// Run a parameter grid, one report per cell plus an aggregate
    Sweep(CommonFlags),
}

fn overrides(flags: &CommonFlags) -> CliOverrides {
    CliOverrides {
        out: flags.out.clone(),
        seed: flags.seed,
        format: flags.format,
        jobs: flags.jobs,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pass, dir, failures) = match &cli.command {
        Command::Run(flags) => match harness::run(&flags.config, &overrides(flags)) {
            Ok(o) => (o.pass, o.dir, o.failures),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        Command::Sweep(flags) => match harness::sweep(&flags.config, &overrides(flags)) {
            Ok(o) => (o.pass, o.dir, o.failures),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    println!("reports: {}", dir.display());
    if pass {
        ExitCode::SUCCESS
    } else {
        for f in &failures {
            eprintln!("FAIL {f}");
        }
        ExitCode::from(1)
    }
}
