//! The deterministic simulator.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use dse_coordinator::{Coordinator, CoordinatorConfig, DurableLog, MemLog, Output};
use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use dse_core::{ClusterEvent, ClusterEventKind, ObjectId};
use dse_runtime::{ManualClock, QueueLink, Runtime, RuntimeConfig, RuntimeStats};
use dse_services::{AppMessage, Body, Envelope, ServiceNode};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clients::{is_client, Client, ClientCx, Completed, Timer};
use crate::config::{ConfigError, FaultKind, SimConfig};
use crate::device::SimDevice;
use crate::metrics::Metrics;
use crate::observer::{SharedTrace, TraceObserver};
use crate::scenario::{ReplySeen, StateCheck, Store, Workload};
use crate::trace::{v, DropReason, Event, Target, TraceLog};

/// Clients start once every object had time to join.
const WARMUP_US: u64 = 20_000;
/// Hard stop this long after the horizon plus settle time.
const GRACE_US: u64 = 2_000_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown fault target {0}")]
    UnknownTarget(u64),
    #[error("scenario panic at {at_us}us: {reason}")]
    ScenarioPanic { at_us: u64, reason: String },
}

pub struct RunOutput {
    pub trace: TraceLog,
    pub metrics: Metrics,
    pub completed: Vec<Completed>,
    pub replies: Vec<ReplySeen>,
    pub checks: Vec<StateCheck>,
    pub coordinator_log: Vec<ClusterEvent>,
    /// Final world-line of every object that is up at the end.
    pub world_lines: BTreeMap<ObjectId, u64>,
    pub failure_seq: u64,
}

enum Ev {
    Tick,
    App { id: u64, from: ObjectId, to: ObjectId, msg: AppMessage },
    ToCoordinator { epoch: u64, msg: MemberMessage },
    ToMember { to: ObjectId, msg: CoordinatorMessage },
    DeviceDone { object: ObjectId, incarnation: u64, write: u64 },
    Appended { epoch: u64 },
    Fault(usize),
    CoordinatorRestart { epoch: u64 },
    ClientStart { client: usize },
    ClientTimer { client: usize, t: Timer },
}

struct Obj {
    incarnation: u64,
    device: SimDevice,
    store: Store,
    node: Option<Box<dyn ServiceNode>>,
    link: Arc<QueueLink>,
    /// Completion time of the last scheduled write; keeps durability ordered.
    last_durable: u64,
    shadow: Option<(Vec<u8>, Vec<u64>)>,
    /// Stats of earlier incarnations.
    past: RuntimeStats,
}

struct Coord {
    c: Option<Coordinator>,
    epoch: u64,
    log: MemLog,
    pending: Option<Vec<ClusterEvent>>,
    last_boundary: Option<(u64, u64, Vec<[u64; 3]>)>,
}

pub struct World {
    cfg: SimConfig,
    workload: Workload,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Ev>,
    rng: ChaCha8Rng,
    clock: Arc<ManualClock>,
    trace: SharedTrace,
    objects: BTreeMap<ObjectId, Obj>,
    coord: Coord,
    clients: Vec<Box<dyn Client>>,
    next_msg: u64,
    completed: Vec<Completed>,
    replies: Vec<ReplySeen>,
    stopped: bool,
    end_at: Option<u64>,
}

fn body_kind(b: &Body) -> &'static str {
    match b {
        Body::ChainRequest { .. } => "chain_request",
        Body::ChainCall { .. } => "chain_call",
        Body::ChainReturn { .. } => "chain_return",
        Body::Increment { .. } => "increment",
        Body::WorkflowRequest { .. } => "workflow_request",
        Body::StepCall { .. } => "step_call",
        Body::StepReturn { .. } => "step_return",
        Body::TxStart { .. } => "tx_start",
        Body::TxStartAck { .. } => "tx_start_ack",
        Body::TxCommit { .. } => "tx_commit",
        Body::Prepare { .. } => "prepare",
        Body::Vote { .. } => "vote",
        Body::Append { .. } => "append",
        Body::Reply { .. } => "reply",
    }
}

fn event_kind(e: &ClusterEvent) -> String {
    match &e.kind {
        ClusterEventKind::MemberJoin { .. } => "member_join".into(),
        ClusterEventKind::MemberRejoin { .. } => "member_rejoin".into(),
        ClusterEventKind::RollbackDecision(_) => "rollback_decision".into(),
    }
}

/// Runs `workload` under `cfg` to quiescence or the hard stop.
pub fn run(cfg: &SimConfig, workload: &Workload) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    workload.validate()?;
    for f in &cfg.faults {
        let o = match f.kind {
            FaultKind::CrashObject { object } | FaultKind::RestartObject { object } => object,
            FaultKind::CrashCoordinator => continue,
        };
        if !workload.objects().contains(&ObjectId(o)) {
            return Err(SimError::UnknownTarget(o));
        }
    }
    let mut w = World::new(cfg.clone(), workload.clone());
    w.run()?;
    Ok(w.finish())
}

impl World {
    fn new(cfg: SimConfig, workload: Workload) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let clients = workload.clients();
        Self {
            cfg,
            workload,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            rng,
            clock: Arc::new(ManualClock::new()),
            trace: Arc::new(Mutex::new(TraceLog::default())),
            objects: BTreeMap::new(),
            coord: Coord { c: None, epoch: 0, log: MemLog::new(), pending: None, last_boundary: None },
            clients,
            next_msg: 0,
            completed: Vec::new(),
            replies: Vec::new(),
            stopped: false,
            end_at: None,
        }
    }

    fn at(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.queue.insert((t, self.seq), ev);
    }

    fn record(&self, ev: Event) {
        self.trace.lock().push(self.now, ev);
    }

    fn panic(&self, reason: impl Into<String>) -> SimError {
        SimError::ScenarioPanic { at_us: self.now, reason: reason.into() }
    }

    fn delay(&mut self) -> u64 {
        self.cfg.net_delay.sample(&mut self.rng)
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.coord.c = Some(Coordinator::new(CoordinatorConfig::with_members(self.workload.objects())));
        for o in self.workload.objects() {
            let device = SimDevice::new();
            let store = self.workload.open(o, Arc::new(device.clone()));
            let obj = Obj {
                incarnation: 0,
                device,
                store,
                node: None,
                link: Arc::new(QueueLink::new()),
                last_durable: 0,
                shadow: None,
                past: RuntimeStats::default(),
            };
            self.objects.insert(o, obj);
            self.boot(o)?;
        }
        for i in 0..self.clients.len() {
            self.at(WARMUP_US, Ev::ClientStart { client: i });
        }
        for (i, f) in self.cfg.faults.clone().iter().enumerate() {
            self.at((f.at_ms * 1000.0).round() as u64, Ev::Fault(i));
        }
        self.at(0, Ev::Tick);
        let horizon = self.cfg.horizon_ms * 1000;
        let hard_end = horizon + self.cfg.settle_ms * 1000 + GRACE_US;
        let last_fault = self.cfg.faults.last().map_or(0, |f| (f.at_ms * 1000.0) as u64);
        while let Some(((t, _), ev)) = self.queue.pop_first() {
            if t > hard_end || self.end_at.is_some_and(|e| t > e) {
                self.queue.insert((t, 0), ev);
                break;
            }
            self.now = t;
            self.clock.set(Duration::from_micros(t));
            if !self.stopped && t >= horizon {
                self.stopped = true;
                for c in &mut self.clients {
                    c.stop();
                }
            }
            self.dispatch(ev)?;
            if self.end_at.is_none() && t > WARMUP_US && t >= last_fault && self.clients.iter().all(|c| c.finished()) {
                self.end_at = Some(t + self.cfg.settle_ms * 1000);
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Tick => {
                let ids: Vec<ObjectId> = self.objects.keys().copied().collect();
                for o in ids {
                    self.touch(o)?;
                }
                if let Some(c) = self.coord.c.as_mut() {
                    let out = c.tick();
                    self.route_coordinator(out);
                }
                let next = self.now + 1000;
                self.at(next, Ev::Tick);
            }
            Ev::App { id, from, to, msg } => self.deliver(id, from, to, msg)?,
            Ev::ToCoordinator { epoch, msg } => {
                if epoch == self.coord.epoch {
                    if let Some(c) = self.coord.c.as_mut() {
                        let out = c.handle(msg);
                        self.route_coordinator(out);
                    }
                }
            }
            Ev::ToMember { to, msg } => {
                let Some(obj) = self.objects.get(&to) else { return Ok(()) };
                if obj.node.is_some() {
                    obj.link.deliver(msg);
                    self.touch(to)?;
                }
            }
            Ev::DeviceDone { object, incarnation, write } => {
                let obj = &self.objects[&object];
                if obj.incarnation == incarnation && obj.node.is_some() {
                    obj.device.complete(write);
                    self.touch(object)?;
                }
            }
            Ev::Appended { epoch } => {
                if epoch != self.coord.epoch {
                    return Ok(());
                }
                let Some(events) = self.coord.pending.take() else { return Ok(()) };
                self.coord.log.append(&events).map_err(|e| self.panic(e.to_string()))?;
                self.record(Event::CoordinatorAppend { kinds: events.iter().map(event_kind).collect() });
                for e in &events {
                    if let ClusterEventKind::RollbackDecision(p) = &e.kind {
                        self.record(Event::Plan {
                            seq: p.failure_seq,
                            failed: p.failed.0,
                            targets: p.targets.iter().map(|(o, c)| [o.0, c.world_line, c.version]).collect(),
                            lost: p.lost.iter().map(v).collect(),
                        });
                    }
                }
                let out = self.coord.c.as_mut().map(|c| c.on_appended()).unwrap_or_default();
                self.route_coordinator(out);
            }
            Ev::Fault(i) => self.fault(i)?,
            Ev::CoordinatorRestart { epoch } => {
                if epoch != self.coord.epoch || self.coord.c.is_some() {
                    return Ok(());
                }
                let events = self.coord.log.read_all().map_err(|e| self.panic(e.to_string()))?;
                let (c, out) =
                    Coordinator::recover(CoordinatorConfig::with_members(self.workload.objects()), &events).map_err(|e| self.panic(e.to_string()))?;
                self.coord.c = Some(c);
                self.record(Event::Restart { target: Target::Coordinator, incarnation: epoch });
                self.route_coordinator(out);
            }
            Ev::ClientStart { client } => self.client_step(client, |c, cx| c.start(cx)),
            Ev::ClientTimer { client, t } => self.client_step(client, |c, cx| c.on_timer(cx, t)),
        }
        Ok(())
    }

    /// Starts a new incarnation of `o` from its durable device contents.
    fn boot(&mut self, o: ObjectId) -> Result<(), SimError> {
        let obj = self.objects.get_mut(&o).expect("known object");
        obj.incarnation += 1;
        obj.link = Arc::new(QueueLink::new());
        let mut config = RuntimeConfig::new(o, obj.incarnation);
        config.commit_period = Duration::from_millis(self.cfg.commit_period_ms);
        config.query_period = Duration::from_millis(self.cfg.query_period_ms);
        let observer = TraceObserver { trace: self.trace.clone(), clock: self.clock.clone(), actions: self.workload.trace_actions };
        let rt = Runtime::new(config, obj.store.backend(), obj.link.clone(), self.clock.clone()).with_observer(Arc::new(observer));
        let rt = Arc::new(rt);
        rt.connect().map_err(|e| SimError::ScenarioPanic { at_us: self.now, reason: e.to_string() })?;
        obj.node = Some(self.workload.host(o, rt, &obj.store));
        self.drain(o);
        Ok(())
    }

    /// Refreshes and polls `o`, then ships whatever it produced.
    fn touch(&mut self, o: ObjectId) -> Result<(), SimError> {
        let Some(node) = self.objects.get_mut(&o).and_then(|x| x.node.as_mut()) else { return Ok(()) };
        if let Err(e) = node.runtime().refresh() {
            return Err(self.panic(format!("refresh of {o}: {e}")));
        }
        let out = node.poll();
        for env in out {
            self.send_app(o, env);
        }
        self.drain(o);
        Ok(())
    }

    /// Moves coordinator traffic and device writes of `o` into the queue.
    fn drain(&mut self, o: ObjectId) {
        let (msgs, writes, inc) = {
            let obj = &self.objects[&o];
            (obj.link.take_outbound(), obj.device.take_issued(), obj.incarnation)
        };
        for msg in msgs {
            let t = self.now + self.delay();
            let epoch = self.coord.epoch;
            self.at(t, Ev::ToCoordinator { epoch, msg });
        }
        for write in writes {
            let lat = self.cfg.persist_latency.sample(&mut self.rng);
            let obj = self.objects.get_mut(&o).expect("known object");
            let t = (self.now + lat).max(obj.last_durable);
            obj.last_durable = t;
            self.at(t, Ev::DeviceDone { object: o, incarnation: inc, write });
        }
    }

    fn route_coordinator(&mut self, out: Vec<Output>) {
        for o in out {
            match o {
                Output::Send { to, msg } => {
                    let t = self.now + self.delay();
                    self.at(t, Ev::ToMember { to, msg });
                }
                Output::Append(events) => {
                    self.coord.pending = Some(events);
                    let t = self.now + self.cfg.coordinator_log_latency.sample(&mut self.rng);
                    let epoch = self.coord.epoch;
                    self.at(t, Ev::Appended { epoch });
                }
            }
        }
        let Some(c) = &self.coord.c else { return };
        let b = c.announced();
        let cur = (b.epoch, b.failure_seq, b.cutoffs.iter().map(|(o, c)| [o.0, c.world_line, c.version]).collect());
        if self.coord.last_boundary.as_ref() != Some(&cur) && !cur.2.is_empty() {
            self.record(Event::Boundary { seq: cur.1, epoch: cur.0, cutoffs: cur.2.clone() });
            self.coord.last_boundary = Some(cur);
        }
    }

    fn send_app(&mut self, from: ObjectId, env: Envelope) {
        let id = self.next_msg;
        self.next_msg += 1;
        let (wl, deps) = match &env.msg.header {
            Some(h) => (Some(h.world_line), h.deps.iter().map(v).collect()),
            None => (None, Vec::new()),
        };
        let kind = body_kind(&env.msg.body).to_string();
        self.record(Event::Send { id, from: from.0, to: env.to.0, kind, wl, deps });
        let p = self.cfg.loss_for(from, env.to);
        if p > 0.0 && self.rng.gen_bool(p) {
            self.record(Event::Drop { id, reason: DropReason::Loss });
            return;
        }
        let t = self.now + self.delay();
        // Messages cross the wire in their encoded form.
        let msg = AppMessage::from_bytes(&env.msg.to_bytes()).expect("own encoding");
        self.at(t, Ev::App { id, from, to: env.to, msg });
    }

    fn deliver(&mut self, id: u64, from: ObjectId, to: ObjectId, msg: AppMessage) -> Result<(), SimError> {
        if is_client(to) {
            self.record(Event::Deliver { id });
            if let Body::Reply { req, outcome, released } = &msg.body {
                self.record(Event::Reply {
                    client: to.0,
                    req: *req,
                    outcome: format!("{outcome:?}"),
                    released: released.iter().map(v).collect(),
                });
                self.replies.push(ReplySeen { from, client: to, req: *req, outcome: *outcome });
            }
            let i = self.workload.client_ids().iter().position(|&c| c == to).expect("known client");
            self.client_step(i, |c, cx| c.on_message(cx, from, msg));
            return Ok(());
        }
        let Some(node) = self.objects.get_mut(&to).and_then(|x| x.node.as_mut()) else {
            self.record(Event::Drop { id, reason: DropReason::Down });
            return Ok(());
        };
        let out = node.handle(from, msg);
        self.record(Event::Deliver { id });
        for env in out {
            self.send_app(to, env);
        }
        self.touch(to)
    }

    fn client_step(&mut self, i: usize, f: impl FnOnce(&mut dyn Client, &mut ClientCx)) {
        let id = self.workload.client_ids()[i];
        let mut cx = ClientCx {
            now: self.now,
            id,
            rng: &mut self.rng,
            timeout_us: self.cfg.request_timeout_ms * 1000,
            out: Vec::new(),
            timers: Vec::new(),
            started: Vec::new(),
            completed: Vec::new(),
        };
        f(self.clients[i].as_mut(), &mut cx);
        let ClientCx { out, timers, started, completed, .. } = cx;
        for req in started {
            self.record(Event::Request { client: id.0, req });
        }
        self.completed.extend(completed);
        for env in out {
            self.send_app(id, env);
        }
        for (d, t) in timers {
            let at = self.now + d;
            self.at(at, Ev::ClientTimer { client: i, t });
        }
    }

    fn fault(&mut self, i: usize) -> Result<(), SimError> {
        match self.cfg.faults[i].kind {
            FaultKind::CrashObject { object } => self.crash(ObjectId(object)),
            FaultKind::RestartObject { object } => {
                let o = ObjectId(object);
                if self.objects[&o].node.is_some() {
                    self.crash(o);
                }
                self.restart(o)?;
            }
            FaultKind::CrashCoordinator => {
                if self.coord.c.take().is_some() {
                    self.coord.epoch += 1;
                    self.coord.pending = None;
                    self.record(Event::Crash { target: Target::Coordinator });
                    let t = self.now + (self.cfg.coordinator_restart_ms * 1000.0).round() as u64;
                    let epoch = self.coord.epoch;
                    self.at(t, Ev::CoordinatorRestart { epoch });
                }
            }
        }
        Ok(())
    }

    fn crash(&mut self, o: ObjectId) {
        let obj = self.objects.get_mut(&o).expect("validated target");
        let Some(node) = obj.node.take() else { return };
        let stats = node.runtime().stats();
        add_stats(&mut obj.past, &stats);
        let log = obj.store.speclog();
        obj.shadow = Some((log.contents(), log.commit_offsets().into_values().collect()));
        obj.link.close();
        obj.device = obj.device.after_crash();
        self.record(Event::Crash { target: Target::Object(o.0) });
    }

    fn restart(&mut self, o: ObjectId) -> Result<(), SimError> {
        let obj = self.objects.get_mut(&o).expect("validated target");
        obj.store = self.workload.open(o, Arc::new(obj.device.clone()));
        obj.last_durable = 0;
        if let Some((shadow, offsets)) = obj.shadow.take() {
            let got = obj.store.speclog().contents();
            let ev = Event::LogCheck {
                object: o.0,
                shadow_len: shadow.len() as u64,
                recovered_len: got.len() as u64,
                prefix: shadow.starts_with(&got),
                at_commit: got.is_empty() || offsets.contains(&(got.len() as u64)),
            };
            self.record(ev);
        }
        self.boot(o)?;
        let inc = self.objects[&o].incarnation;
        self.record(Event::Restart { target: Target::Object(o.0), incarnation: inc });
        Ok(())
    }

    fn finish(self) -> RunOutput {
        let stores: BTreeMap<ObjectId, Store> = self.objects.iter().map(|(&o, x)| (o, x.store.clone())).collect();
        let checks = self.workload.check(&stores, &self.replies);
        for c in &checks {
            self.record(Event::StateCheck { object: c.object.0, ok: c.ok, detail: c.detail.clone() });
        }
        let in_flight = self.queue.values().filter_map(|e| if let Ev::App { id, .. } = e { Some(*id) } else { None }).collect();
        self.record(Event::End { in_flight });
        let mut stats = RuntimeStats::default();
        let mut world_lines = BTreeMap::new();
        let mut bytes = 0;
        for (&o, x) in &self.objects {
            add_stats(&mut stats, &x.past);
            if let Some(n) = &x.node {
                add_stats(&mut stats, &n.runtime().stats());
                world_lines.insert(o, n.runtime().world_line());
            }
            bytes += x.device.bytes_written();
        }
        let coordinator_log = self.coord.log.read_all().unwrap_or_default();
        let failure_seq = self.coord.c.as_ref().map_or(0, |c| c.failure_seq());
        let trace = std::mem::take(&mut *self.trace.lock());
        let unfinished = self.clients.iter().filter(|c| !c.finished()).count();
        let metrics = Metrics::compute(&self.cfg, &self.workload, &trace, &self.completed, &stats, bytes, unfinished);
        RunOutput {
            trace,
            metrics,
            completed: self.completed,
            replies: self.replies,
            checks,
            coordinator_log,
            world_lines,
            failure_seq,
        }
    }
}

fn add_stats(acc: &mut RuntimeStats, s: &RuntimeStats) {
    acc.persists += s.persists;
    acc.forced_persists += s.forced_persists;
    acc.reports_sent += s.reports_sent;
    acc.rollbacks_restored += s.rollbacks_restored;
    acc.rollbacks_skipped += s.rollbacks_skipped;
    acc.boundaries_applied += s.boundaries_applied;
    acc.send_failures += s.send_failures;
}
