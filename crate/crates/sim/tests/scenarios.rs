use dse_services::Mode;
use dse_sim::trace::Target;
use dse_sim::{
    check, random_faults, run, Event, Fault, FaultKind, RunOutput, ScenarioKind, SimConfig, TraceLog, Workload,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(kind: ScenarioKind, mode: Mode) -> Workload {
    Workload { requests: 60, ..Workload::new(kind, mode) }
}

fn crash(object: u64, at_ms: f64, down_ms: f64) -> Vec<Fault> {
    vec![
        Fault { at_ms, kind: FaultKind::CrashObject { object } },
        Fault { at_ms: at_ms + down_ms, kind: FaultKind::RestartObject { object } },
    ]
}

fn assert_clean(out: &RunOutput) {
    let report = check(&out.trace);
    assert!(report.ok(), "{report}");
}

/// A chain run in which some survivor lost state to another object's crash.
fn run_with_cascade() -> RunOutput {
    for seed in 0..50 {
        let w = small(ScenarioKind::Chain, Mode::Speculative);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let faults = random_faults(&mut rng, &w.objects(), 600, 2);
        let cfg = SimConfig { seed, horizon_ms: 600, faults, ..SimConfig::default() };
        let out = run(&cfg, &w).unwrap();
        let cascades = out.trace.records.iter().any(|r| match &r.ev {
            Event::Plan { failed, lost, .. } => lost.iter().any(|v| v[0] != *failed),
            _ => false,
        });
        if cascades {
            return out;
        }
    }
    panic!("no seed produced a cascading rollback");
}

#[test]
fn same_config_gives_same_trace() {
    let w = small(ScenarioKind::Tpc, Mode::Speculative);
    let cfg = SimConfig { seed: 7, loss: 0.05, faults: crash(2, 150.0, 30.0), ..SimConfig::default() };
    let a = run(&cfg, &w).unwrap();
    let b = run(&cfg, &w).unwrap();
    assert_eq!(a.trace.digest(), b.trace.digest());
    let c = run(&SimConfig { seed: 8, ..cfg }, &w).unwrap();
    assert_ne!(a.trace.digest(), c.trace.digest());
}

#[test]
fn every_scenario_finishes_cleanly_without_faults() {
    for kind in [ScenarioKind::Chain, ScenarioKind::Tpc, ScenarioKind::Counter, ScenarioKind::Workflow, ScenarioKind::Log] {
        for mode in [Mode::Speculative, Mode::Baseline] {
            let out = run(&SimConfig::default(), &small(kind, mode)).unwrap();
            assert_clean(&out);
            assert_eq!(out.metrics.unfinished_clients, 0, "{kind:?} {mode:?}");
            assert_eq!(out.metrics.completed, 60, "{kind:?} {mode:?}");
            assert!(out.coordinator_log.is_empty(), "{kind:?} {mode:?}");
        }
    }
}

#[test]
fn total_loss_is_reported_as_starvation() {
    let cfg = SimConfig { loss: 1.0, horizon_ms: 200, ..SimConfig::default() };
    let out = run(&cfg, &small(ScenarioKind::Chain, Mode::Speculative)).unwrap();
    assert!(out.metrics.delivery_starvation);
    assert_eq!(out.metrics.completed, 0);
    assert!(out.metrics.unfinished_clients > 0);
    assert_clean(&out);
}

#[test]
fn speculation_hides_persistence_latency_along_a_chain() {
    let mean = |mode| {
        let w = Workload { services: 5, ..small(ScenarioKind::Chain, mode) };
        run(&SimConfig::default(), &w).unwrap().metrics.latency.mean_ms
    };
    let (spec, base) = (mean(Mode::Speculative), mean(Mode::Baseline));
    assert!(spec * 2.0 < base, "speculative {spec} ms, baseline {base} ms");
}

#[test]
fn crash_after_the_workload_drains_lets_survivors_skip() {
    let w = Workload { requests: 20, ..small(ScenarioKind::Chain, Mode::Speculative) };
    let cfg = SimConfig { horizon_ms: 2000, faults: crash(2, 1500.0, 20.0), ..SimConfig::default() };
    let out = run(&cfg, &w).unwrap();
    assert_clean(&out);
    assert_eq!(out.metrics.completed, 20);
    assert_eq!(out.failure_seq, 1);
    let survivors: Vec<(u64, bool)> = out
        .trace
        .records
        .iter()
        .filter_map(|r| match r.ev {
            Event::Rollback { object, skipped, .. } if object != 2 => Some((object, skipped)),
            _ => None,
        })
        .collect();
    assert_eq!(survivors.len(), 2);
    assert!(survivors.iter().all(|(_, skipped)| *skipped), "{survivors:?}");
}

#[test]
fn crash_under_load_rolls_back_dependents() {
    let out = run_with_cascade();
    assert_clean(&out);
    assert!(out.metrics.rollbacks_restored > 0);
    assert_eq!(out.metrics.unfinished_clients, 0);
}

#[test]
fn coordinator_crash_alone_logs_nothing() {
    let w = small(ScenarioKind::Workflow, Mode::Speculative);
    let cfg = SimConfig { faults: vec![Fault { at_ms: 200.0, kind: FaultKind::CrashCoordinator }], ..SimConfig::default() };
    let out = run(&cfg, &w).unwrap();
    assert_clean(&out);
    assert_eq!(out.metrics.unfinished_clients, 0);
    assert!(out.coordinator_log.is_empty());
    let restarts = out
        .trace
        .records
        .iter()
        .filter(|r| matches!(r.ev, Event::Restart { target: Target::Coordinator, .. }))
        .count();
    assert_eq!(restarts, 1);
}

#[test]
fn corrupted_edge_into_a_removed_vertex_is_caught() {
    let mut out = run_with_cascade();
    let lost = out
        .trace
        .records
        .iter()
        .find_map(|r| match &r.ev {
            Event::Plan { lost, .. } => lost.first().copied(),
            _ => None,
        })
        .unwrap();
    let durable: Vec<[u64; 3]> = out
        .trace
        .records
        .iter()
        .filter_map(|r| if let Event::PersistDone { vertex } = r.ev { Some(vertex) } else { None })
        .collect();
    let plans_remove = |v: &[u64; 3]| {
        out.trace.records.iter().any(|r| match &r.ev {
            Event::Plan { seq, targets, .. } => {
                v[1] < *seq && v[2] > targets.iter().find(|t| t[0] == v[0]).map_or(0, |t| t[2])
            }
            _ => false,
        })
    };
    let line = out
        .trace
        .records
        .iter()
        .position(|r| match &r.ev {
            Event::PersistStart { vertex, .. } => durable.contains(vertex) && !plans_remove(vertex),
            _ => false,
        })
        .unwrap();
    if let Event::PersistStart { edges, .. } = &mut out.trace.records[line].ev {
        edges.push(lost);
    }
    let report = check(&out.trace);
    let closure = report.get("closure").unwrap();
    assert_eq!(closure.violations, 1, "{report}");
    assert_eq!(closure.first.as_ref().unwrap().0, line + 1);
    assert!(report.to_string().contains(&format!("FAIL closure (1 violations; first at line {}", line + 1)));
}

#[test]
fn released_removed_vertex_is_caught() {
    let mut out = run_with_cascade();
    let lost = out
        .trace
        .records
        .iter()
        .find_map(|r| match &r.ev {
            Event::Plan { lost, .. } => lost.first().copied(),
            _ => None,
        })
        .unwrap();
    let line = out.trace.records.iter().rposition(|r| matches!(r.ev, Event::Reply { .. })).unwrap();
    if let Event::Reply { released, .. } = &mut out.trace.records[line].ev {
        released.push(lost);
    }
    let report = check(&out.trace);
    assert_eq!(report.get("barrier_transparency").unwrap().first.as_ref().unwrap().0, line + 1, "{report}");
}

#[test]
fn traces_survive_a_jsonl_round_trip() {
    let out = run_with_cascade();
    let bytes = out.trace.to_jsonl();
    let back = TraceLog::read_jsonl(&bytes[..]).unwrap();
    assert_eq!(back, out.trace);
    assert_eq!(check(&back).to_string(), check(&out.trace).to_string());
    let mut broken = bytes.clone();
    broken.extend_from_slice(b"{\"t\": 1, \"ev\": \"nonsense\"}\n");
    assert!(TraceLog::read_jsonl(&broken[..]).is_err());
}

#[test]
fn recovered_state_comes_from_the_device() {
    let w = small(ScenarioKind::Counter, Mode::Speculative);
    let cfg = SimConfig { faults: crash(1, 300.0, 20.0), ..SimConfig::default() };
    let out = run(&cfg, &w).unwrap();
    assert_clean(&out);
    let restored = out
        .trace
        .records
        .iter()
        .find_map(|r| match r.ev {
            Event::Connected { object: 1, incarnation: 2, vertex } => Some(vertex),
            _ => None,
        })
        .unwrap();
    let durable_before_crash = out
        .trace
        .records
        .iter()
        .take_while(|r| !matches!(r.ev, Event::Crash { .. }))
        .filter_map(|r| match r.ev {
            Event::PersistDone { vertex } if vertex[0] == 1 => Some(vertex[2]),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    assert!(restored[2] <= durable_before_crash + 1, "resumed at {restored:?}, durable {durable_before_crash}");
}
