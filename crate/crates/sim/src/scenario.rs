//! Workloads: which services run on which objects, and what their clients do.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::{Runtime, StateObjectBackend};
use dse_services::{
    ChainNode, CounterNode, CounterStore, LogDevice, LogServiceNode, LogStore, Mode, NodeCore, Outcome, ServiceNode,
    SpecLog, TpcCoordinatorNode, TpcParticipantNode, TpcStore, WorkflowNode, WorkflowStore,
};
use serde::{Deserialize, Serialize};

use crate::clients::{Client, ClosedLoop, OpenLoop, TpcClient};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Request chain through `services` objects; open-loop clients.
    Chain,
    /// Commit coordinator plus `participants`; closed-loop clients.
    Tpc,
    /// `services` counters; closed-loop clients.
    Counter,
    /// Orchestrator plus `services` step services; closed-loop clients.
    Workflow,
    /// One speculative log; open-loop appenders.
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub kind: ScenarioKind,
    pub mode: Mode,
    pub services: usize,
    pub participants: usize,
    pub clients: usize,
    /// Total requests across all clients.
    pub requests: usize,
    /// Aggregate arrival rate of open-loop clients, per second.
    pub rate: f64,
    /// Steps per workflow.
    pub steps: u32,
    /// Trace every action start and end.
    pub trace_actions: bool,
}

impl Workload {
    pub fn new(kind: ScenarioKind, mode: Mode) -> Self {
        Self {
            kind,
            mode,
            services: 3,
            participants: 4,
            clients: 4,
            requests: 200,
            rate: 100.0,
            steps: 3,
            trace_actions: true,
        }
    }

    pub fn validate(&self) -> Result<(), crate::config::ConfigError> {
        let bad = |field: &str, reason: &str| crate::config::ConfigError { field: field.into(), reason: reason.into() };
        if self.clients == 0 {
            return Err(bad("clients", "must be positive"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(bad("rate", "must be positive"));
        }
        match self.kind {
            ScenarioKind::Chain | ScenarioKind::Counter | ScenarioKind::Workflow if self.services == 0 => {
                Err(bad("services", "must be positive"))
            }
            ScenarioKind::Tpc if self.participants == 0 => Err(bad("participants", "must be positive")),
            _ => Ok(()),
        }
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        let n = match self.kind {
            ScenarioKind::Chain | ScenarioKind::Counter => self.services,
            ScenarioKind::Tpc => self.participants + 1,
            ScenarioKind::Workflow => self.services + 1,
            ScenarioKind::Log => 1,
        };
        (1..=n as u64).map(ObjectId).collect()
    }

    pub fn client_ids(&self) -> Vec<ObjectId> {
        (0..self.clients as u64).map(|i| ObjectId(CLIENT_BASE + i)).collect()
    }

    pub fn open(&self, o: ObjectId, dev: Arc<dyn LogDevice>) -> Store {
        match self.kind {
            ScenarioKind::Chain => Store::Log(Arc::new(SpecLog::open(dev))),
            ScenarioKind::Counter => Store::Counter(Arc::new(CounterStore::open(dev))),
            ScenarioKind::Tpc => Store::Tpc(Arc::new(TpcStore::open(dev))),
            ScenarioKind::Workflow if o == ObjectId(1) => Store::Workflow(Arc::new(WorkflowStore::open(dev))),
            ScenarioKind::Workflow | ScenarioKind::Log => Store::Steps(Arc::new(LogStore::open(dev))),
        }
    }

    pub fn host(&self, o: ObjectId, rt: Arc<Runtime>, store: &Store) -> Box<dyn ServiceNode> {
        let core = NodeCore::new(rt, self.mode);
        match store {
            Store::Log(log) => Box::new(ChainNode::new(core, log.clone(), self.objects())),
            Store::Counter(s) => Box::new(CounterNode::new(core, s.clone())),
            Store::Tpc(s) if o == ObjectId(1) => Box::new(TpcCoordinatorNode::new(core, s.clone())),
            Store::Tpc(s) => Box::new(TpcParticipantNode::new(core, s.clone())),
            Store::Workflow(s) => Box::new(WorkflowNode::new(core, s.clone(), self.objects()[1..].to_vec())),
            Store::Steps(s) => Box::new(LogServiceNode::new(core, s.clone())),
        }
    }

    pub fn clients(&self) -> Vec<Box<dyn Client>> {
        let n = self.clients;
        let share = |i: usize| self.requests / n + usize::from(i < self.requests % n);
        let objects = self.objects();
        (0..n)
            .map(|i| -> Box<dyn Client> {
                let quota = share(i);
                match self.kind {
                    ScenarioKind::Chain => Box::new(OpenLoop::chain(i, ObjectId(1), self.rate / n as f64, quota)),
                    ScenarioKind::Log => Box::new(OpenLoop::append(i, ObjectId(1), self.rate / n as f64, quota)),
                    ScenarioKind::Counter => Box::new(ClosedLoop::counter(i, objects[i % objects.len()], quota)),
                    ScenarioKind::Workflow => Box::new(ClosedLoop::workflow(i, ObjectId(1), self.steps, quota)),
                    ScenarioKind::Tpc => Box::new(TpcClient::new(i, ObjectId(1), objects[1..].to_vec(), quota)),
                }
            })
            .collect()
    }

    /// Compares every reply a client received against the final state.
    pub fn check(&self, stores: &BTreeMap<ObjectId, Store>, replies: &[ReplySeen]) -> Vec<StateCheck> {
        let mut out = Vec::new();
        let mut fail = |object: ObjectId, detail: String| out.push(StateCheck { object, ok: false, detail });
        match self.kind {
            ScenarioKind::Chain => {
                let logs: BTreeMap<ObjectId, BTreeSet<Vec<u8>>> =
                    stores.iter().map(|(&o, s)| (o, s.speclog().entries().into_iter().collect())).collect();
                for r in replies.iter().filter(|r| r.outcome == Outcome::Done) {
                    for (o, entries) in &logs {
                        if !entries.contains(&r.req.to_le_bytes().to_vec()) {
                            fail(*o, format!("request {} released but missing from the log", r.req));
                        }
                    }
                }
            }
            ScenarioKind::Counter => {
                for r in replies {
                    let (Outcome::Value(v), Some(Store::Counter(s))) = (r.outcome, stores.get(&r.from)) else { continue };
                    let (value, applied) = s.read(|c| (c.value, c.applied.contains(&r.req)));
                    if !applied || value < v {
                        fail(r.from, format!("increment {} released with value {v}; final value {value}", r.req));
                    }
                }
            }
            ScenarioKind::Tpc => {
                let Some(Store::Tpc(coord)) = stores.get(&ObjectId(1)) else { return out };
                for r in replies {
                    let decision = coord.read(|j| j.decisions.get(&r.req).copied());
                    match r.outcome {
                        Outcome::Committed => {
                            if decision != Some(true) {
                                fail(ObjectId(1), format!("tx {} released as committed; decision {decision:?}", r.req));
                            }
                            for (&o, s) in stores.iter().filter(|(&o, _)| o != ObjectId(1)) {
                                let Store::Tpc(p) = s else { continue };
                                if !p.read(|j| j.started.contains(&r.req) && j.prepared.contains(&r.req)) {
                                    fail(o, format!("tx {} released as committed; start record lost", r.req));
                                }
                            }
                        }
                        Outcome::Aborted if decision == Some(true) => {
                            fail(ObjectId(1), format!("tx {} released as aborted but committed", r.req));
                        }
                        _ => {}
                    }
                }
            }
            ScenarioKind::Workflow => {
                let Some(Store::Workflow(wf)) = stores.get(&ObjectId(1)) else { return out };
                for r in replies.iter().filter(|r| matches!(r.outcome, Outcome::Value(_))) {
                    if !wf.read(|j| j.status.get(&r.req).is_some_and(|s| s.finished)) {
                        fail(ObjectId(1), format!("workflow {} released but not finished", r.req));
                    }
                }
            }
            ScenarioKind::Log => {
                let Some(Store::Steps(log)) = stores.get(&ObjectId(1)) else { return out };
                for r in replies.iter().filter(|r| r.outcome == Outcome::Done) {
                    if !log.read(|j| j.appended.contains(&r.req)) {
                        fail(ObjectId(1), format!("append {} released but missing", r.req));
                    }
                }
            }
        }
        if out.is_empty() {
            for o in stores.keys() {
                out.push(StateCheck { object: *o, ok: true, detail: String::new() });
            }
        }
        out
    }
}

/// Client addresses start here; objects sit below.
pub const CLIENT_BASE: u64 = 1000;

/// The state object behind one simulated object.
#[derive(Clone)]
pub enum Store {
    Log(Arc<SpecLog>),
    Counter(Arc<CounterStore>),
    Tpc(Arc<TpcStore>),
    Workflow(Arc<WorkflowStore>),
    Steps(Arc<LogStore>),
}

impl Store {
    pub fn backend(&self) -> Arc<dyn StateObjectBackend> {
        match self {
            Store::Log(s) => s.clone(),
            Store::Counter(s) => s.clone(),
            Store::Tpc(s) => s.clone(),
            Store::Workflow(s) => s.clone(),
            Store::Steps(s) => s.clone(),
        }
    }

    pub fn speclog(&self) -> &SpecLog {
        match self {
            Store::Log(s) => s,
            Store::Counter(s) => s.log(),
            Store::Tpc(s) => s.log(),
            Store::Workflow(s) => s.log(),
            Store::Steps(s) => s.log(),
        }
    }
}

/// A reply as the client saw it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplySeen {
    pub from: ObjectId,
    pub client: ObjectId,
    pub req: u64,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateCheck {
    pub object: ObjectId,
    pub ok: bool,
    pub detail: String,
}
