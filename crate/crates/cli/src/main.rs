use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use reflectbench::analysis::LatencyStat;
use reflectbench::economics::PricingTable;
use reflectbench_cli::report::{report, ReportKind, ReportOptions};
use reflectbench_cli::{config, runner, CliError};

#[derive(Parser)]
#[command(name = "reflectbench", version, about = "Benchmark iterative self-reflection of chat models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Latency {
    Mean,
    P50,
    P95,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sample, strategy) pair not already in the output traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the plan without calling any provider.
        #[arg(long)]
        dry_run: bool,
    },
    /// Aggregate a traces file into CSV and JSON tables.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum)]
        kind: ReportKind,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long)]
        pricing: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mean")]
        latency: Latency,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
    },
    /// Check a config and everything it references.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, dry_run } => {
            let c = config::load(&config)?;
            let out = runner::run(&c, dry_run)?;
            if !dry_run {
                println!(
                    "{} traces written to {} ({} already present, {} truncated)",
                    out.executed,
                    out.traces_path.display(),
                    out.skipped,
                    out.truncated
                );
            }
            Ok(())
        }
        Command::Validate { config } => {
            config::load(&config)?;
            println!("ok");
            Ok(())
        }
        Command::Report { traces, kind, family, out, pricing, latency, seed, replicates } => {
            let pricing = match pricing {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    Some(PricingTable::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            if replicates < 2 {
                return Err(CliError::Config("--replicates must be at least 2".into()));
            }
            let traces = runner::read_trace_file(&traces)?;
            let opts = ReportOptions {
                kind,
                family,
                out_dir: out,
                pricing,
                latency: match latency {
                    Latency::Mean => LatencyStat::Mean,
                    Latency::P50 => LatencyStat::P50,
                    Latency::P95 => LatencyStat::P95,
                },
                replicates,
                seed,
            };
            for f in report(&traces, &opts)? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
