use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use clocksync_cli::{
    parse_seeds, run_collective, run_scenarios, run_sync_batch, CollectiveSummary,
    ExperimentConfig, Pattern,
};
use clocksync_core::agents::{Protocol, Scenario};
use clocksync_core::collectives::SyncMethod;

#[derive(Parser)]
#[command(name = "clocksync", version, about = "Clock synchronisation simulator")]
struct Cli {
    /// TOML experiment file with [common], [scenario.X] and [sync] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed count (`10` means 0..10) or comma-separated list (`3,5,8`).
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Proposed,
    Baseline,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Leader,
    LeaderRecursive,
    Distributed,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Build a collective schedule, check it and write it as CSV.
    Collective {
        #[arg(long, value_enum)]
        pattern: Vec<Pattern>,
        #[arg(long, short = 'n', default_value_t = 8)]
        nodes: usize,
    },
    /// Synchronise one simulated network per seed.
    Sync {
        #[arg(long, short = 'n')]
        nodes: Option<usize>,
        #[arg(long, value_enum, default_value = "all")]
        method: MethodArg,
    },
    /// Run the mobile-agent scenarios.
    Scenario {
        /// Scenarios to run; all three when omitted.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Vec<Scenario>,
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<()> {
    let config = ExperimentConfig::load_or_default(cli.config.as_deref())?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Collective { pattern, nodes } => {
            let patterns = if pattern.is_empty() {
                Pattern::value_variants().to_vec()
            } else {
                pattern
            };
            let (summaries, _) = run_collective(&patterns, nodes, &cli.out)?;
            writeln!(stdout, "{}", CollectiveSummary::CSV_HEADER)?;
            for s in summaries {
                writeln!(stdout, "{}", s.csv_row())?;
            }
        }
        Command::Sync { nodes, method } => {
            let seeds = parse_seeds(cli.seeds.as_deref().unwrap_or("1"))?;
            let methods = match method {
                MethodArg::Leader => vec![SyncMethod::Leader],
                MethodArg::LeaderRecursive => vec![SyncMethod::LeaderRecursive],
                MethodArg::Distributed => vec![SyncMethod::Distributed],
                MethodArg::All => SyncMethod::ALL.to_vec(),
            };
            let mut base = config.sync.clone();
            if let Some(n) = nodes {
                base.nodes = n;
            }
            let (reports, _) =
                run_sync_batch(&base, &methods, &seeds, &cli.out, cli.config.as_deref())?;
            for (seed, r) in reports {
                writeln!(
                    stdout,
                    "{} n={} seed={} rounds={} spread {} -> {}",
                    r.method,
                    r.node_count,
                    seed,
                    r.comm_rounds,
                    r.pre_max_pairwise_offset,
                    r.post_max_pairwise_offset
                )?;
            }
        }
        Command::Scenario { scenario, protocol } => {
            let seeds = parse_seeds(cli.seeds.as_deref().unwrap_or("10"))?;
            let scenarios = if scenario.is_empty() {
                Scenario::ALL.to_vec()
            } else {
                scenario
            };
            let protocols = match protocol {
                ProtocolArg::Proposed => vec![Protocol::Proposed],
                ProtocolArg::Baseline => vec![Protocol::Baseline],
                ProtocolArg::Both => Protocol::ALL.to_vec(),
            };
            let out = run_scenarios(
                &config,
                &scenarios,
                &protocols,
                &seeds,
                &cli.out,
                cli.config.as_deref(),
            )?;
            for a in &out.aggregates {
                writeln!(
                    stdout,
                    "scenario {} {:<8} steady-state {:.3} +- {:.3} over {} runs",
                    a.scenario, a.protocol, a.mean, a.stddev, a.runs
                )?;
            }
            writeln!(
                stdout,
                "wrote {} files to {}",
                out.manifest.files.len() + 1,
                cli.out.display()
            )?;
        }
    }
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
