use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use dse_core::{merge_deps, wire, Boundary, DepSet, GraphFragment, Header, ObjectId, RollbackPlan, Vertex};
use parking_lot::{Condvar, Mutex, RwLock};

use crate::backend::{BackendError, StateObjectBackend};
use crate::clock::Clock;
use crate::latch::{ActionLatch, ExclusiveGuard};
use crate::link::CoordinatorLink;
use crate::observer::{RollbackRecord, RuntimeObserver};
use crate::sthread::SThread;

#[derive(Clone, Debug)]
pub struct RuntimeConfig {
    pub object: ObjectId,
    /// Distinguishes process lifetimes of the same object. Must change on
    /// every restart.
    pub incarnation: u64,
    /// Group commit period.
    pub commit_period: Duration,
    /// How often to poll the coordinator for the boundary and re-send
    /// unacknowledged reports.
    pub query_period: Duration,
    /// Capacity hosts should use for their future-world-line buffer.
    pub deferred_capacity: usize,
}

impl RuntimeConfig {
    pub fn new(object: ObjectId, incarnation: u64) -> Self {
        Self {
            object,
            incarnation,
            commit_period: Duration::from_millis(10),
            query_period: Duration::from_millis(50),
            deferred_capacity: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("runtime is not connected")]
    NotConnected,
    #[error("connect was already called in this incarnation")]
    DuplicateConnect,
    #[error("rollback {got} applied out of order; expected {expected}")]
    OutOfOrderRollback { expected: u64, got: u64 },
    #[error("coordinator unreachable")]
    CoordinatorUnreachable,
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("stored metadata for version {0} is corrupt")]
    CorruptMetadata(u64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuntimeStats {
    pub persists: u64,
    pub forced_persists: u64,
    pub reports_sent: u64,
    pub rollbacks_restored: u64,
    pub rollbacks_skipped: u64,
    pub boundaries_applied: u64,
    pub send_failures: u64,
}

/// Result of trying to start an action.
pub enum Admission<'a> {
    Admitted(ActionGuard<'a>),
    /// The message comes from a rolled-back world-line.
    Discard,
    /// The message comes from a world-line this object has not reached yet.
    Defer,
}

impl<'a> Admission<'a> {
    pub fn admitted(self) -> Option<ActionGuard<'a>> {
        match self {
            Admission::Admitted(g) => Some(g),
            _ => None,
        }
    }

    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted(_))
    }
}

impl std::fmt::Debug for Admission<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Admission::Admitted(g) => write!(f, "Admitted({})", g.vertex()),
            Admission::Discard => f.write_str("Discard"),
            Admission::Defer => f.write_str("Defer"),
        }
    }
}

/// Shared action protection. Persist and restore cannot run while a guard
/// is alive.
pub struct ActionGuard<'a> {
    rt: &'a Runtime,
    slot: usize,
    vertex: Vertex,
    live: bool,
}

impl ActionGuard<'_> {
    pub fn vertex(&self) -> Vertex {
        self.vertex
    }

    /// Ends the action and returns the header for outgoing messages.
    pub fn end(mut self) -> Header {
        self.release();
        Header::new(self.vertex.world_line, DepSet::from([self.vertex]))
    }

    /// Ends the action and continues as a detached sthread.
    pub fn detach(mut self) -> SThread {
        self.release();
        SThread::new(self.rt.shared.clone(), self.vertex)
    }

    fn release(&mut self) {
        if self.live {
            self.live = false;
            if let Some(o) = &self.rt.observer {
                o.action_ended(self.vertex);
            }
            self.rt.latch.exit_shared(self.slot, true);
        }
    }
}

impl Drop for ActionGuard<'_> {
    fn drop(&mut self) {
        self.release();
    }
}

/// State visible to sthreads without going through the runtime.
pub(crate) struct Shared {
    pub(crate) object: ObjectId,
    pub(crate) world_line: AtomicU64,
    pub(crate) plans: RwLock<BTreeMap<u64, Arc<RollbackPlan>>>,
    /// Plans skipped by this object, mapped to the version that was current
    /// then. That vertex continues under the plan's world-line.
    pub(crate) aliases: RwLock<BTreeMap<u64, u64>>,
    pub(crate) boundary: RwLock<Boundary>,
    notify: Mutex<u64>,
    cond: Condvar,
}

impl Shared {
    fn signal(&self) {
        *self.notify.lock() += 1;
        self.cond.notify_all();
    }

    /// Waits until the next signal or the timeout. Returns false on timeout.
    pub(crate) fn wait(&self, seen: u64, timeout: Duration) -> bool {
        let mut n = self.notify.lock();
        if *n != seen {
            return true;
        }
        !self.cond.wait_for(&mut n, timeout).timed_out()
    }

    pub(crate) fn signal_count(&self) -> u64 {
        *self.notify.lock()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Disconnected,
    Connecting,
    Connected,
}

struct Unsettled {
    fragment: GraphFragment,
    durable: bool,
    reported_at: Option<Duration>,
}

struct Control {
    phase: Phase,
    generation: u64,
    issued_through: u64,
    pruned_through: u64,
    unsettled: BTreeMap<u64, Unsettled>,
    pending_plans: BTreeMap<u64, RollbackPlan>,
    pending_boundary: Option<Boundary>,
    connect_msg: Option<MemberMessage>,
    next_commit: Duration,
    next_query: Duration,
    stats: RuntimeStats,
}

/// Runtime for one state object.
pub struct Runtime {
    config: RuntimeConfig,
    shared: Arc<Shared>,
    latch: ActionLatch,
    connected: AtomicBool,
    version: AtomicU64,
    ctl: Mutex<Control>,
    completions: Arc<Mutex<Vec<(u64, u64)>>>,
    backend: Arc<dyn StateObjectBackend>,
    link: Arc<dyn CoordinatorLink>,
    clock: Arc<dyn Clock>,
    observer: Option<Arc<dyn RuntimeObserver>>,
}

impl Runtime {
    pub fn new(
        config: RuntimeConfig,
        backend: Arc<dyn StateObjectBackend>,
        link: Arc<dyn CoordinatorLink>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        assert!(!config.commit_period.is_zero(), "commit period must be positive");
        let shared = Arc::new(Shared {
            object: config.object,
            world_line: AtomicU64::new(0),
            plans: RwLock::new(BTreeMap::new()),
            aliases: RwLock::new(BTreeMap::new()),
            boundary: RwLock::new(Boundary::default()),
            notify: Mutex::new(0),
            cond: Condvar::new(),
        });
        Self {
            config,
            shared,
            latch: ActionLatch::new(),
            connected: AtomicBool::new(false),
            version: AtomicU64::new(1),
            ctl: Mutex::new(Control {
                phase: Phase::Disconnected,
                generation: 0,
                issued_through: 0,
                pruned_through: 0,
                unsettled: BTreeMap::new(),
                pending_plans: BTreeMap::new(),
                pending_boundary: None,
                connect_msg: None,
                next_commit: Duration::ZERO,
                next_query: Duration::ZERO,
                stats: RuntimeStats::default(),
            }),
            completions: Arc::new(Mutex::new(Vec::new())),
            backend,
            link,
            clock,
            observer: None,
        }
    }

    pub fn with_observer(mut self, observer: Arc<dyn RuntimeObserver>) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn object(&self) -> ObjectId {
        self.config.object
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::Acquire)
    }

    pub fn world_line(&self) -> u64 {
        self.shared.world_line.load(Ordering::Acquire)
    }

    /// The next version to be persisted.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    pub fn current_vertex(&self) -> Vertex {
        let _g = self.latch.lock_exclusive();
        Vertex::new(self.object(), self.world_line(), self.version())
    }

    pub fn boundary(&self) -> Boundary {
        self.shared.boundary.read().clone()
    }

    /// Applied rollback plans in sequence order.
    pub fn applied_plans(&self) -> Vec<Arc<RollbackPlan>> {
        self.shared.plans.read().values().cloned().collect()
    }

    pub fn stats(&self) -> RuntimeStats {
        self.ctl.lock().stats.clone()
    }

    /// Highest version such that it and every earlier version is durable.
    pub fn durable_through(&self) -> u64 {
        let ctl = self.ctl.lock();
        match ctl.unsettled.iter().find(|(_, u)| !u.durable) {
            Some((&v, _)) => v - 1,
            None => ctl.issued_through,
        }
    }

    pub fn pruned_through(&self) -> u64 {
        self.ctl.lock().pruned_through
    }

    /// Registers with the coordinator. The object becomes usable once the
    /// acknowledgement is processed by [`Runtime::refresh`].
    pub fn connect(&self) -> Result<(), RuntimeError> {
        let mut ctl = self.ctl.lock();
        if ctl.phase != Phase::Disconnected {
            return Err(RuntimeError::DuplicateConnect);
        }
        let mut fragments = Vec::new();
        for (v, meta) in self.backend.list_versions() {
            let f = wire::decode_fragment(&meta).map_err(|_| RuntimeError::CorruptMetadata(v))?;
            if f.vertex.version != v || f.vertex.object != self.object() {
                return Err(RuntimeError::CorruptMetadata(v));
            }
            fragments.push(f);
        }
        let durable_wl = fragments.iter().map(|f| f.vertex.world_line).max().unwrap_or(0);
        let max = fragments.iter().map(|f| f.vertex.version).max().unwrap_or(0);
        let min = fragments.iter().map(|f| f.vertex.version).min().unwrap_or(1);
        {
            let _g = self.latch.lock_exclusive();
            self.shared.world_line.store(durable_wl, Ordering::Release);
            self.version.store(max + 1, Ordering::Release);
        }
        ctl.issued_through = max;
        ctl.pruned_through = min - 1;
        let msg = MemberMessage::Connect {
            object: self.object(),
            incarnation: self.config.incarnation,
            durable_world_line: durable_wl,
            fragments,
        };
        ctl.phase = Phase::Connecting;
        ctl.connect_msg = Some(msg.clone());
        ctl.next_query = self.clock.now() + self.config.query_period;
        drop(ctl);
        self.link.send(msg).map_err(|_| RuntimeError::CoordinatorUnreachable)
    }

    /// Connects and drives refresh until acknowledged, sleeping between
    /// polls. For hosts with a live coordinator.
    pub fn connect_blocking(&self, timeout: Duration) -> Result<(), RuntimeError> {
        let start = std::time::Instant::now();
        match self.connect() {
            Ok(()) | Err(RuntimeError::CoordinatorUnreachable) => {}
            Err(e) => return Err(e),
        }
        while !self.is_connected() {
            self.refresh()?;
            if start.elapsed() > timeout {
                return Err(RuntimeError::CoordinatorUnreachable);
            }
            std::thread::sleep(Duration::from_micros(200));
        }
        Ok(())
    }

    /// Starts an action, optionally consuming a message header.
    pub fn start_action(&self, header: Option<&Header>) -> Result<Admission<'_>, RuntimeError> {
        if !self.is_connected() {
            return Err(RuntimeError::NotConnected);
        }
        loop {
            let slot = self.latch.enter_shared();
            let wl = self.world_line();
            let version = self.version();
            let vertex = Vertex::new(self.object(), wl, version);
            let Some(h) = header else {
                if let Some(o) = &self.observer {
                    o.action_started(vertex, None);
                }
                return Ok(Admission::Admitted(ActionGuard { rt: self, slot, vertex, live: true }));
            };
            if h.world_line != wl {
                self.latch.exit_shared(slot, false);
                return Ok(if h.world_line < wl { Admission::Discard } else { Admission::Defer });
            }
            let need = self.foreign_deps(h).map(|d| d.version).max().unwrap_or(0);
            if need > version {
                self.latch.exit_shared(slot, false);
                self.catch_up(wl, need);
                continue;
            }
            if self.consumes_lost_state(h, wl) {
                self.latch.exit_shared(slot, false);
                return Ok(Admission::Discard);
            }
            self.latch.record_edges(slot, self.foreign_deps(h).copied());
            if let Some(o) = &self.observer {
                o.action_started(vertex, Some(h));
            }
            return Ok(Admission::Admitted(ActionGuard { rt: self, slot, vertex, live: true }));
        }
    }

    /// Brings a detached sthread back as an action. Discards it if the
    /// parent moved to another world-line or its dependencies were lost.
    pub fn merge(&self, mut t: SThread) -> Result<Admission<'_>, RuntimeError> {
        assert_eq!(t.parent(), self.object(), "sthread merged into a foreign object");
        if !self.is_connected() {
            return Err(RuntimeError::NotConnected);
        }
        if t.origin_world_line() != self.world_line() {
            return Ok(Admission::Discard);
        }
        match t.send() {
            Ok(h) => self.start_action(Some(&h)),
            Err(_) => Ok(Admission::Discard),
        }
    }

    fn foreign_deps<'h>(&self, h: &'h Header) -> impl Iterator<Item = &'h Vertex> + 'h {
        let me = self.object();
        h.deps.iter().filter(move |d| d.object != me)
    }

    /// True if some dependency from an older world-line was rolled back.
    fn consumes_lost_state(&self, h: &Header, wl: u64) -> bool {
        let mut old = self.foreign_deps(h).filter(|d| d.world_line < wl).peekable();
        if old.peek().is_none() {
            return false;
        }
        let plans = self.shared.plans.read();
        old.any(|d| plans.range(d.world_line + 1..=wl).any(|(_, p)| p.rolls_back(d)))
    }

    fn catch_up(&self, wl: u64, need: u64) {
        let mut ctl = self.ctl.lock();
        while self.world_line() == wl && self.version() < need {
            let g = self.latch.lock_exclusive();
            self.persist_locked(&mut ctl, &g);
            ctl.stats.forced_persists += 1;
        }
    }

    /// Persists the current version immediately, whether or not anything ran.
    pub fn persist_now(&self) -> Result<(), RuntimeError> {
        if !self.is_connected() {
            return Err(RuntimeError::NotConnected);
        }
        let mut ctl = self.ctl.lock();
        let g = self.latch.lock_exclusive();
        self.persist_locked(&mut ctl, &g);
        Ok(())
    }

    fn persist_locked(&self, ctl: &mut Control, g: &ExclusiveGuard<'_>) {
        let (edges, _) = self.latch.take_edges(g);
        let v = self.version();
        let vertex = Vertex::new(self.object(), self.world_line(), v);
        let edges: DepSet = edges.into_iter().collect();
        let fragment = GraphFragment::new(vertex, merge_deps(&edges, &DepSet::new()));
        let gen = ctl.generation;
        let done = self.completions.clone();
        self.backend.persist(v, wire::encode_fragment(&fragment), Box::new(move || done.lock().push((gen, v))));
        self.version.store(v + 1, Ordering::Release);
        ctl.issued_through = v;
        ctl.stats.persists += 1;
        if let Some(o) = &self.observer {
            o.persist_started(&fragment);
        }
        ctl.unsettled.insert(v, Unsettled { fragment, durable: false, reported_at: None });
    }

    /// Applies one rollback plan. Plans must arrive in sequence.
    pub fn apply_rollback(&self, plan: RollbackPlan) -> Result<(), RuntimeError> {
        let mut ctl = self.ctl.lock();
        self.apply_plan(&mut ctl, plan, false)
    }

    fn apply_plan(&self, ctl: &mut Control, plan: RollbackPlan, forced: bool) -> Result<(), RuntimeError> {
        let wl = self.world_line();
        let seq = plan.failure_seq;
        if seq <= wl {
            return Ok(());
        }
        if seq != wl + 1 {
            return Err(RuntimeError::OutOfOrderRollback { expected: wl + 1, got: seq });
        }
        let g = self.latch.lock_exclusive();
        let target = plan.target_version(self.object());
        let cur = self.version();
        let skip = !forced
            && ctl.issued_through <= target
            && !self.latch.peek_edges(&g).iter().any(|e| plan.rolls_back(e));
        let kept_through = if skip {
            self.shared.aliases.write().insert(seq, cur);
            ctl.stats.rollbacks_skipped += 1;
            target
        } else {
            // A restarted member may already have restored below an older
            // plan's target before it crashed.
            let t = if forced {
                let max = self.backend.list_versions().last().map_or(0, |(v, _)| *v);
                target.min(max)
            } else {
                target
            };
            self.backend.restore(t)?;
            ctl.generation += 1;
            let _ = self.latch.take_edges(&g);
            ctl.unsettled.split_off(&(t + 1));
            ctl.issued_through = t;
            self.version.store(t + 1, Ordering::Release);
            ctl.stats.rollbacks_restored += 1;
            t
        };
        self.shared.plans.write().insert(seq, Arc::new(plan));
        self.shared.world_line.store(seq, Ordering::Release);
        let resumed_at = Vertex::new(self.object(), seq, self.version());
        drop(g);
        if let Some(o) = &self.observer {
            o.rollback_applied(&RollbackRecord {
                object: self.object(),
                incarnation: self.config.incarnation,
                failure_seq: seq,
                skipped: skip,
                kept_through,
                resumed_at,
            });
        }
        self.shared.signal();
        Ok(())
    }

    /// Performs background work: coordinator messages, rollbacks, reports,
    /// group commit and pruning.
    pub fn refresh(&self) -> Result<(), RuntimeError> {
        let mut ctl = self.ctl.lock();
        while let Some(msg) = self.link.try_recv() {
            self.on_message(&mut ctl, msg)?;
        }
        if ctl.phase != Phase::Connected {
            self.resend_connect(&mut ctl);
            return Ok(());
        }
        self.apply_pending(&mut ctl)?;
        self.report_completions(&mut ctl);
        let now = self.clock.now();
        if now >= ctl.next_commit {
            if self.latch.any_dirty() {
                let g = self.latch.lock_exclusive();
                self.persist_locked(&mut ctl, &g);
            }
            let period = self.config.commit_period;
            ctl.next_commit = next_multiple(now, period);
        }
        if now >= ctl.next_query {
            ctl.next_query = now + self.config.query_period;
            let applied_seq = self.world_line();
            self.send(&mut ctl, MemberMessage::BoundaryQuery { object: self.object(), applied_seq });
            let stale = now.saturating_sub(self.config.query_period);
            let again: Vec<GraphFragment> = ctl
                .unsettled
                .values_mut()
                .filter(|u| u.durable && u.reported_at.is_some_and(|t| t <= stale))
                .map(|u| {
                    u.reported_at = Some(now);
                    u.fragment.clone()
                })
                .collect();
            if !again.is_empty() {
                self.report(&mut ctl, again);
            }
        }
        Ok(())
    }

    fn resend_connect(&self, ctl: &mut Control) {
        if ctl.phase != Phase::Connecting {
            return;
        }
        let now = self.clock.now();
        if now >= ctl.next_query {
            ctl.next_query = now + self.config.query_period;
            if let Some(m) = ctl.connect_msg.clone() {
                self.send(ctl, m);
            }
        }
    }

    fn on_message(&self, ctl: &mut Control, msg: CoordinatorMessage) -> Result<(), RuntimeError> {
        match msg {
            CoordinatorMessage::ConnectAck { object, incarnation, world_line, mut plans } => {
                if object != self.object() || incarnation != self.config.incarnation || ctl.phase != Phase::Connecting {
                    return Ok(());
                }
                plans.sort_by_key(|p| p.failure_seq);
                for p in plans {
                    self.apply_plan(ctl, p, true)?;
                }
                if world_line > self.world_line() {
                    let _g = self.latch.lock_exclusive();
                    self.shared.world_line.store(world_line, Ordering::Release);
                }
                ctl.phase = Phase::Connected;
                ctl.connect_msg = None;
                let now = self.clock.now();
                ctl.next_commit = next_multiple(now, self.config.commit_period);
                ctl.next_query = now + self.config.query_period;
                self.connected.store(true, Ordering::Release);
                if let Some(o) = &self.observer {
                    o.connected(self.config.incarnation, Vertex::new(self.object(), self.world_line(), self.version()));
                }
                self.shared.signal();
            }
            CoordinatorMessage::Boundary(b) => {
                if ctl.phase != Phase::Connected || b.failure_seq > self.world_line() {
                    if ctl.pending_boundary.as_ref().is_none_or(|p| p.failure_seq <= b.failure_seq) {
                        ctl.pending_boundary = Some(b);
                    }
                } else {
                    self.apply_boundary(ctl, b);
                }
            }
            CoordinatorMessage::Rollback(plan) => {
                if plan.failure_seq > self.world_line() {
                    ctl.pending_plans.insert(plan.failure_seq, plan);
                }
            }
            CoordinatorMessage::SegmentRequest => {
                let mut fragments = Vec::new();
                for (v, meta) in self.backend.list_versions() {
                    let f = wire::decode_fragment(&meta).map_err(|_| RuntimeError::CorruptMetadata(v))?;
                    fragments.push(f);
                }
                let msg = MemberMessage::Segments {
                    object: self.object(),
                    incarnation: self.config.incarnation,
                    applied_seq: self.world_line(),
                    fragments,
                };
                self.send(ctl, msg);
            }
        }
        Ok(())
    }

    fn apply_pending(&self, ctl: &mut Control) -> Result<(), RuntimeError> {
        loop {
            let wl = self.world_line();
            ctl.pending_plans = ctl.pending_plans.split_off(&(wl + 1));
            let Some(plan) = ctl.pending_plans.remove(&(wl + 1)) else { break };
            self.apply_plan(ctl, plan, false)?;
        }
        if ctl.pending_boundary.as_ref().is_some_and(|b| b.failure_seq <= self.world_line()) {
            let b = ctl.pending_boundary.take().expect("checked above");
            self.apply_boundary(ctl, b);
        }
        Ok(())
    }

    fn apply_boundary(&self, ctl: &mut Control, b: Boundary) {
        let own = {
            let mut cur = self.shared.boundary.write();
            // Epochs restart when the coordinator recovers; cutoffs never
            // shrink, so merging in any order is safe.
            cur.epoch = cur.epoch.max(b.epoch);
            cur.failure_seq = cur.failure_seq.max(b.failure_seq);
            for (o, c) in b.cutoffs {
                let e = cur.cutoffs.entry(o).or_default();
                if c > *e {
                    *e = c;
                }
            }
            cur.cutoffs.get(&self.object()).copied()
        };
        ctl.stats.boundaries_applied += 1;
        if let Some(c) = own {
            let floor = c.version.saturating_sub(1);
            if floor > ctl.pruned_through {
                self.backend.prune(floor);
                ctl.pruned_through = floor;
            }
            let keep = ctl.unsettled.split_off(&(c.version + 1));
            let settled = std::mem::replace(&mut ctl.unsettled, keep);
            for (v, u) in settled {
                if !u.durable {
                    ctl.unsettled.insert(v, u);
                }
            }
        }
        self.shared.signal();
    }

    fn report_completions(&self, ctl: &mut Control) {
        let done: Vec<(u64, u64)> = std::mem::take(&mut *self.completions.lock());
        if done.is_empty() {
            return;
        }
        let now = self.clock.now();
        let mut fragments = Vec::new();
        for (gen, v) in done {
            if gen != ctl.generation {
                continue;
            }
            if let Some(u) = ctl.unsettled.get_mut(&v) {
                if !u.durable {
                    u.durable = true;
                    u.reported_at = Some(now);
                    if let Some(o) = &self.observer {
                        o.persist_completed(u.fragment.vertex);
                    }
                    fragments.push(u.fragment.clone());
                }
            }
        }
        if !fragments.is_empty() {
            self.report(ctl, fragments);
        }
    }

    fn report(&self, ctl: &mut Control, fragments: Vec<GraphFragment>) {
        ctl.stats.reports_sent += 1;
        let msg = MemberMessage::Report { object: self.object(), world_line: self.world_line(), fragments };
        self.send(ctl, msg);
    }

    fn send(&self, ctl: &mut Control, msg: MemberMessage) {
        if self.link.send(msg).is_err() {
            ctl.stats.send_failures += 1;
        }
    }
}

/// Smallest multiple of `period` strictly after `now`.
fn next_multiple(now: Duration, period: Duration) -> Duration {
    let p = period.as_micros().max(1);
    Duration::from_micros(((now.as_micros() / p + 1) * p) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_multiple_is_strictly_later() {
        let p = Duration::from_millis(10);
        assert_eq!(next_multiple(Duration::ZERO, p), p);
        assert_eq!(next_multiple(Duration::from_millis(10), p), Duration::from_millis(20));
        assert_eq!(next_multiple(Duration::from_micros(10_001), p), Duration::from_millis(20));
    }
}
