use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bsonata_core::graphs::{gen_erdos_renyi, gen_erdos_renyi_undirected};
use bsonata_core::harness::{
    completion_time_sweep, metrics_csv_string, pushsum_demo, run_experiment, stream_rng, streams, write_metrics_csv,
    write_sweep_csv, PushSumDemo, RunConfig, ScheduleName,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bsonata", version, about = "Block-wise push-sum and B-SONATA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    RoundRobin,
    ShuffledCyclic,
}

impl From<Rule> for ScheduleName {
    fn from(r: Rule) -> Self {
        match r {
            Rule::RoundRobin => ScheduleName::RoundRobin,
            Rule::ShuffledCyclic => ScheduleName::ShuffledCyclic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a strongly connected Erdős–Rényi graph and print its edge list.
    GenGraph {
        #[arg(short = 'n', long)]
        nodes: usize,
        #[arg(short, long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_retries: usize,
        /// Sample an undirected graph (symmetric edge list).
        #[arg(long)]
        undirected: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block-wise push-sum on a random digraph; prints `round,error`.
    PushsumDemo {
        #[arg(short = 'n', long, default_value_t = 5)]
        agents: usize,
        #[arg(short = 'b', long, default_value_t = 3)]
        blocks: usize,
        #[arg(short, long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = Rule::RoundRobin)]
        rule: Rule,
        #[arg(long, default_value_t = 1)]
        block_len: usize,
    },
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Metrics CSV destination; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check every per-round invariant and fail on the first violation.
        #[arg(long)]
        verify: bool,
    },
    /// Completion time `t_end` (first round with J < 1e-3) per block count.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,6")]
        blocks: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenGraph { nodes, p, seed, max_retries, undirected, out } => {
            let mut rng = stream_rng(seed, streams::GRAPH);
            let g = if undirected {
                gen_erdos_renyi_undirected(nodes, p, &mut rng, max_retries)?
            } else {
                gen_erdos_renyi(nodes, p, &mut rng, max_retries)?
            };
            match out {
                Some(path) => g.write_edge_list(&path)?,
                None => print!("{}", g.to_edge_list()),
            }
        }
        Command::PushsumDemo { agents, blocks, p, seed, rounds, rule, block_len } => {
            let rows =
                pushsum_demo(&PushSumDemo { agents, blocks, p, seed, rounds, schedule: rule.into(), block_len })?;
            println!("round,error");
            for (t, e) in rows {
                println!("{t},{e:?}");
            }
        }
        Command::Run { config, out, verify } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            cfg.run.verify |= verify;
            let result = run_experiment(&cfg)?;
            match out {
                Some(path) => {
                    write_metrics_csv(&result.trace, &path)?;
                    let last = result.last();
                    eprintln!(
                        "t={} message_exchanges={} J={:e} D={:e} R={:e}",
                        last.t, last.message_exchanges, last.j, last.d, last.r
                    );
                }
                None => print!("{}", metrics_csv_string(&result.trace)),
            }
        }
        Command::Sweep { config, blocks, out } => {
            if blocks.is_empty() {
                bail!("--blocks must list at least one block count");
            }
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let rows = completion_time_sweep(&cfg, &blocks)?;
            write_sweep_csv(&rows, &out)?;
            for r in &rows {
                eprintln!("B={} t_end={:?} t_end/B={}", r.blocks, r.t_end, r.normalized());
            }
        }
    }
    Ok(())
}
