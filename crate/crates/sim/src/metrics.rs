use dse_runtime::RuntimeStats;
use dse_services::Outcome;
use serde::{Deserialize, Serialize};

use crate::clients::Completed;
use crate::config::SimConfig;
use crate::scenario::{ScenarioKind, Workload};
use crate::trace::{DropReason, Event, Target, TraceLog};

/// Throughput is reported in buckets of this many milliseconds.
pub const BUCKET_MS: u64 = 100;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn of(samples_ms: &[f64]) -> Self {
        if samples_ms.is_empty() {
            return Self::default();
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        Self {
            count: s.len(),
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            p50_ms: q(0.5),
            p95_ms: q(0.95),
            p99_ms: q(0.99),
            max_ms: s[s.len() - 1],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub scenario: Option<ScenarioKind>,
    pub mode: String,
    pub completed: usize,
    /// Requests answered with a success outcome.
    pub succeeded: usize,
    /// Aborted, rejected or abandoned requests.
    pub aborted: usize,
    pub unfinished_clients: usize,
    pub latency: LatencyStats,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub dropped_loss: u64,
    pub dropped_down: u64,
    /// Some client never finished and messages were lost on the way.
    pub delivery_starvation: bool,
    pub persisted_bytes: u64,
    pub persists: u64,
    pub forced_persists: u64,
    pub rollbacks_restored: u64,
    pub rollbacks_skipped: u64,
    pub coordinator_appends: u64,
    pub crashes: u64,
    /// Per crash: time until every object applied the resulting rollback,
    /// or until the coordinator announced a boundary again.
    pub recovery_ms: Vec<f64>,
    /// Successful completions per bucket, from the first request on.
    pub throughput: Vec<u64>,
    pub virtual_ms: f64,
}

pub fn is_success(o: &Option<Outcome>) -> bool {
    matches!(o, Some(Outcome::Done | Outcome::Value(_) | Outcome::Committed))
}

impl Metrics {
    pub fn compute(
        cfg: &SimConfig,
        w: &Workload,
        trace: &TraceLog,
        completed: &[Completed],
        stats: &RuntimeStats,
        persisted_bytes: u64,
        unfinished_clients: usize,
    ) -> Self {
        let ok: Vec<&Completed> = completed.iter().filter(|c| is_success(&c.outcome)).collect();
        let lat: Vec<f64> = ok.iter().map(|c| (c.end_us - c.start_us) as f64 / 1000.0).collect();
        let mut m = Metrics {
            seed: cfg.seed,
            scenario: Some(w.kind),
            mode: format!("{:?}", w.mode).to_lowercase(),
            completed: completed.len(),
            succeeded: ok.len(),
            aborted: completed.len() - ok.len(),
            unfinished_clients,
            latency: LatencyStats::of(&lat),
            persisted_bytes,
            persists: stats.persists,
            forced_persists: stats.forced_persists,
            virtual_ms: trace.records.last().map_or(0.0, |r| r.t as f64 / 1000.0),
            ..Default::default()
        };
        let mut crash_at: Vec<(Target, u64)> = Vec::new();
        let mut plan_of_crash: Vec<(u64, u64)> = Vec::new();
        let mut last_rollback: std::collections::BTreeMap<u64, u64> = Default::default();
        let mut first_boundary_after: Vec<(u64, Option<u64>)> = Vec::new();
        for r in &trace.records {
            match &r.ev {
                Event::Send { .. } => m.messages_sent += 1,
                Event::Deliver { .. } => m.messages_delivered += 1,
                Event::Drop { reason: DropReason::Loss, .. } => m.dropped_loss += 1,
                Event::Drop { reason: DropReason::Down, .. } => m.dropped_down += 1,
                Event::Rollback { skipped, seq, .. } => {
                    if *skipped {
                        m.rollbacks_skipped += 1;
                    } else {
                        m.rollbacks_restored += 1;
                    }
                    last_rollback.insert(*seq, r.t);
                }
                Event::CoordinatorAppend { .. } => m.coordinator_appends += 1,
                Event::Crash { target } => {
                    m.crashes += 1;
                    crash_at.push((*target, r.t));
                    if *target == Target::Coordinator {
                        first_boundary_after.push((r.t, None));
                    }
                }
                Event::Plan { seq, failed, .. } => {
                    if let Some(&(_, t)) = crash_at.iter().rev().find(|(tg, _)| *tg == Target::Object(*failed)) {
                        plan_of_crash.push((*seq, t));
                    }
                }
                Event::Boundary { .. } => {
                    for b in first_boundary_after.iter_mut().filter(|b| b.1.is_none()) {
                        b.1 = Some(r.t);
                    }
                }
                _ => {}
            }
        }
        for (seq, t) in plan_of_crash {
            if let Some(&done) = last_rollback.get(&seq) {
                m.recovery_ms.push(done.saturating_sub(t) as f64 / 1000.0);
            }
        }
        for (t, b) in first_boundary_after {
            if let Some(b) = b {
                m.recovery_ms.push((b - t) as f64 / 1000.0);
            }
        }
        m.delivery_starvation = unfinished_clients > 0 && m.dropped_loss > 0;
        if let Some(first) = completed.iter().map(|c| c.start_us).min() {
            let bucket = BUCKET_MS * 1000;
            for c in &ok {
                let i = ((c.end_us - first) / bucket) as usize;
                if m.throughput.len() <= i {
                    m.throughput.resize(i + 1, 0);
                }
                m.throughput[i] += 1;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_of_a_known_sample() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let l = LatencyStats::of(&s);
        assert_eq!(l.count, 100);
        assert!((l.mean_ms - 50.5).abs() < 1e-9);
        assert_eq!(l.max_ms, 100.0);
        assert_eq!(l.p95_ms, 95.0);
        assert_eq!(LatencyStats::of(&[]), LatencyStats::default());
    }
}
