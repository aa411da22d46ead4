//! Result files: `requests.csv`, `throughput.csv`, `summary.json` and one
//! `trace-<seed>.jsonl` per seed.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use dse_services::Outcome;
use dse_sim::metrics::{is_success, BUCKET_MS};
use dse_sim::real::BenchResult;
use dse_sim::{Metrics, OracleReport, RunOutput, SimConfig, Workload};
use serde::Serialize;

#[derive(Serialize)]
struct RequestRow {
    seed: u64,
    client: u64,
    req: u64,
    start_ms: f64,
    end_ms: f64,
    latency_ms: f64,
    outcome: String,
    success: bool,
    aborted: bool,
    attempts: u32,
}

#[derive(Serialize)]
struct ThroughputRow {
    seed: u64,
    bucket_start_ms: u64,
    completed: u64,
}

#[derive(Serialize)]
pub struct OracleSummary {
    pub name: String,
    pub ok: bool,
    pub violations: usize,
    /// One-based line of the first violating record.
    pub first_line: Option<usize>,
    pub first_reason: Option<String>,
}

#[derive(Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub ok: bool,
    pub trace: String,
    pub trace_digest: String,
    pub failure_seq: u64,
    pub oracles: Vec<OracleSummary>,
    pub metrics: Metrics,
}

#[derive(Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub ok: bool,
    pub workload: Workload,
    pub seeds: Vec<SeedSummary>,
    /// Over successful requests of every seed.
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub mean_recovery_ms: Option<f64>,
}

#[derive(Serialize)]
pub struct BenchSummary {
    pub scenario: String,
    pub ok: bool,
    pub results: Vec<BenchResult>,
}

fn outcome_name(o: &Option<Outcome>) -> String {
    match o {
        None => "abandoned".into(),
        Some(Outcome::Done) => "done".into(),
        Some(Outcome::Value(v)) => format!("value:{v}"),
        Some(Outcome::Committed) => "committed".into(),
        Some(Outcome::Aborted) => "aborted".into(),
        Some(Outcome::Rejected) => "rejected".into(),
    }
}

pub fn oracle_summary(r: &OracleReport) -> Vec<OracleSummary> {
    r.results
        .iter()
        .map(|o| OracleSummary {
            name: o.name.clone(),
            ok: o.violations == 0,
            violations: o.violations,
            first_line: o.first.as_ref().map(|f| f.0),
            first_reason: o.first.as_ref().map(|f| f.1.clone()),
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes every result file for a finished run and returns the summary.
pub fn write_run(
    dir: &Path,
    scenario: &str,
    workload: &Workload,
    runs: &[(SimConfig, RunOutput, OracleReport)],
) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut requests = csv::Writer::from_writer(create(dir, "requests.csv")?);
    let mut throughput = csv::Writer::from_writer(create(dir, "throughput.csv")?);
    let mut seeds = Vec::new();
    let mut ok_lat = Vec::new();
    let mut recovery = Vec::new();
    for (cfg, out, report) in runs {
        for c in &out.completed {
            let latency_ms = (c.end_us - c.start_us) as f64 / 1000.0;
            if is_success(&c.outcome) {
                ok_lat.push(latency_ms);
            }
            requests.serialize(RequestRow {
                seed: cfg.seed,
                client: c.client.0,
                req: c.req,
                start_ms: c.start_us as f64 / 1000.0,
                end_ms: c.end_us as f64 / 1000.0,
                latency_ms,
                outcome: outcome_name(&c.outcome),
                success: is_success(&c.outcome),
                aborted: !is_success(&c.outcome),
                attempts: c.attempts,
            })?;
        }
        for (i, n) in out.metrics.throughput.iter().enumerate() {
            throughput.serialize(ThroughputRow { seed: cfg.seed, bucket_start_ms: i as u64 * BUCKET_MS, completed: *n })?;
        }
        recovery.extend(out.metrics.recovery_ms.iter().copied());
        let trace = format!("trace-{}.jsonl", cfg.seed);
        out.trace.write_jsonl(create(dir, &trace)?).with_context(|| format!("writing {trace}"))?;
        seeds.push(SeedSummary {
            seed: cfg.seed,
            ok: report.ok(),
            trace,
            trace_digest: out.trace.digest(),
            failure_seq: out.failure_seq,
            oracles: oracle_summary(report),
            metrics: out.metrics.clone(),
        });
    }
    requests.flush()?;
    throughput.flush()?;
    let stats = dse_sim::LatencyStats::of(&ok_lat);
    let summary = RunSummary {
        scenario: scenario.into(),
        ok: seeds.iter().all(|s| s.ok),
        workload: workload.clone(),
        seeds,
        mean_latency_ms: stats.mean_ms,
        p95_latency_ms: stats.p95_ms,
        mean_recovery_ms: (!recovery.is_empty()).then(|| recovery.iter().sum::<f64>() / recovery.len() as f64),
    };
    serde_json::to_writer_pretty(create(dir, "summary.json")?, &summary)?;
    Ok(summary)
}

pub fn write_bench(dir: &Path, results: Vec<BenchResult>) -> Result<BenchSummary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv::Writer::from_writer(create(dir, "microbench.csv")?);
    for r in &results {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = BenchSummary { scenario: "microbench".into(), ok: true, results };
    serde_json::to_writer_pretty(create(dir, "summary.json")?, &summary)?;
    Ok(summary)
}
