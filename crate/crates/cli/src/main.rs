//! `dse`: runs simulated scenarios and the loopback microbenchmark, checks
//! traces, and writes machine-readable results.

mod report;
mod spec;

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dse_core::ObjectId;
use dse_sim::real::{microbench, CoordinatorServer};
use dse_sim::{check, run, SimConfig, TraceLog, Workload};

use crate::spec::{RunArgs, Scenario};

#[derive(Parser)]
#[command(name = "dse", version, about = "Speculative execution scenarios, traces and oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario for every seed and write results.
    Run(RunArgs),
    /// Run every oracle over a trace file.
    CheckTrace {
        file: PathBuf,
    },
}

/// Exit status when an oracle fails.
const ORACLE_FAILED: u8 = 1;
/// Exit status for bad input.
const INVALID: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(&args),
        Command::CheckTrace { file } => check_trace(&file),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(ORACLE_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INVALID)
        }
    }
}

/// Ok(false) when some oracle failed.
fn run_command(args: &RunArgs) -> Result<bool> {
    let dir = args.out_dir();
    if args.scenario == Scenario::Microbench {
        return run_microbench(args, &dir);
    }
    let plan = args.plan()?;
    let runs = run_seeds(&plan.workload, &plan.configs)?;
    let name = args.scenario.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string());
    let summary = report::write_run(&dir, &name, &plan.workload, &runs)?;
    for s in &summary.seeds {
        let failed: Vec<&str> = s.oracles.iter().filter(|o| !o.ok).map(|o| o.name.as_str()).collect();
        println!(
            "seed {}: {} completed, mean {:.2} ms, p95 {:.2} ms, {} rollbacks, oracles {}",
            s.seed,
            s.metrics.completed,
            s.metrics.latency.mean_ms,
            s.metrics.latency.p95_ms,
            s.failure_seq,
            if failed.is_empty() { "pass".to_string() } else { format!("FAIL ({})", failed.join(", ")) }
        );
    }
    println!("results in {}", dir.display());
    Ok(summary.ok)
}

/// Runs seeds on all cores; each simulation stays single-threaded.
fn run_seeds(w: &Workload, configs: &[SimConfig]) -> Result<Vec<(SimConfig, dse_sim::RunOutput, dse_sim::OracleReport)>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<_>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = run(cfg, w)
                    .with_context(|| format!("seed {}", cfg.seed))
                    .map(|out| {
                        let report = check(&out.trace);
                        (cfg.clone(), out, report)
                    });
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every seed ran")).collect()
}

fn run_microbench(args: &RunArgs, dir: &std::path::Path) -> Result<bool> {
    let contexts = args.contexts()?;
    let server = CoordinatorServer::start().context("starting the coordinator")?;
    let mut results = Vec::new();
    for (i, &n) in contexts.iter().enumerate() {
        let r = microbench(server.addr(), ObjectId(i as u64 + 1), n, Duration::from_millis(args.duration))?;
        println!("{n} contexts: {:.0} ops/s", r.ops_per_sec);
        results.push(r);
    }
    let summary = report::write_bench(dir, results)?;
    println!("results in {}", dir.display());
    Ok(summary.ok)
}

fn check_trace(file: &PathBuf) -> Result<bool> {
    let f = File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let trace = TraceLog::read_jsonl(BufReader::new(f))?;
    let report = check(&trace);
    print!("{report}");
    Ok(report.ok())
}
