use std::collections::{BTreeMap, BTreeSet, VecDeque};

use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use dse_core::{Boundary, ClusterEvent, ClusterEventKind, Cutoff, GraphFragment, ObjectId, RollbackPlan};

use crate::{CoordinatorError, DependencyView};

/// Incarnation of a member that has never restarted.
const FIRST_INCARNATION: u64 = 1;

#[derive(Clone, Debug)]
pub struct CoordinatorConfig {
    /// Ticks between repeated segment requests while recovering.
    pub segment_retry_ticks: u32,
    /// Ticks after which a recovery still waiting on members is reported stalled.
    pub recovery_stall_ticks: u32,
    /// Objects deployed in the cluster. Their first incarnation joins without
    /// a log entry; other objects are logged when they join.
    pub members: BTreeSet<ObjectId>,
}

impl CoordinatorConfig {
    pub fn with_members(members: impl IntoIterator<Item = ObjectId>) -> Self {
        Self { members: members.into_iter().collect(), ..Self::default() }
    }
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self { segment_retry_ticks: 10, recovery_stall_ticks: 500, members: BTreeSet::new() }
    }
}

/// Work the host must carry out on the coordinator's behalf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Send { to: ObjectId, msg: CoordinatorMessage },
    /// Append these events as one atomic record, then call
    /// [`Coordinator::on_appended`] (or [`Coordinator::on_append_failed`]).
    Append(Vec<ClusterEvent>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Active,
    /// Rebuilt from the log; waiting for graph segments from every member.
    Recovering,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoordinatorStats {
    pub stale_fragments: u64,
    pub boundary_regressions: u64,
    pub appends: u64,
    pub append_failures: u64,
    pub boundaries_announced: u64,
}

enum Pending {
    Join { object: ObjectId, incarnation: u64, fragments: Vec<GraphFragment> },
    Rejoin { object: ObjectId, incarnation: u64, durable_world_line: u64, plan: RollbackPlan, saved: Box<DependencyView> },
}

pub struct Coordinator {
    config: CoordinatorConfig,
    view: DependencyView,
    /// Latest known incarnation of each member.
    members: BTreeMap<ObjectId, u64>,
    log_len: u64,
    announced: Boundary,
    waiting: Option<BTreeSet<ObjectId>>,
    deferred_connects: Vec<MemberMessage>,
    pending: Option<Pending>,
    queued: VecDeque<MemberMessage>,
    dirty: bool,
    recovery_ticks: u32,
    stats: CoordinatorStats,
}

impl Coordinator {
    pub fn new(config: CoordinatorConfig) -> Self {
        let members = config.members.iter().map(|&o| (o, FIRST_INCARNATION)).collect();
        Self {
            config,
            view: DependencyView::new(),
            members,
            log_len: 0,
            announced: Boundary::default(),
            waiting: None,
            deferred_connects: Vec::new(),
            pending: None,
            queued: VecDeque::new(),
            dirty: false,
            recovery_ticks: 0,
            stats: CoordinatorStats::default(),
        }
    }

    /// Rebuilds membership and decisions from the durable log and asks every
    /// member for its graph segment. Boundaries are withheld until all have
    /// answered.
    pub fn recover(config: CoordinatorConfig, events: &[ClusterEvent]) -> Result<(Self, Vec<Output>), CoordinatorError> {
        let mut members: BTreeMap<ObjectId, u64> = config.members.iter().map(|&o| (o, FIRST_INCARNATION)).collect();
        let mut plans = Vec::new();
        for (i, e) in events.iter().enumerate() {
            if e.sequence != i as u64 {
                return Err(CoordinatorError::CorruptLog(format!("event {i} has sequence {}", e.sequence)));
            }
            match &e.kind {
                ClusterEventKind::MemberJoin { object, incarnation }
                | ClusterEventKind::MemberRejoin { object, incarnation } => {
                    members.insert(*object, *incarnation);
                }
                ClusterEventKind::RollbackDecision(p) => {
                    if p.failure_seq != plans.len() as u64 + 1 {
                        return Err(CoordinatorError::CorruptLog(format!(
                            "decision {} follows {}",
                            p.failure_seq,
                            plans.len()
                        )));
                    }
                    plans.push(p.clone());
                }
            }
        }
        let mut c = Self::new(config);
        c.view = DependencyView::with_plans(plans);
        c.log_len = events.len() as u64;
        c.announced.failure_seq = c.view.failure_seq();
        c.members = members;
        let mut out = Vec::new();
        if !c.members.is_empty() {
            c.waiting = Some(c.members.keys().copied().collect());
            c.request_segments(&mut out);
        }
        Ok((c, out))
    }

    pub fn phase(&self) -> Phase {
        if self.waiting.is_some() {
            Phase::Recovering
        } else {
            Phase::Active
        }
    }

    pub fn failure_seq(&self) -> u64 {
        self.view.failure_seq()
    }

    pub fn announced(&self) -> &Boundary {
        &self.announced
    }

    pub fn view(&self) -> &DependencyView {
        &self.view
    }

    pub fn members(&self) -> &BTreeMap<ObjectId, u64> {
        &self.members
    }

    pub fn log_len(&self) -> u64 {
        self.log_len
    }

    pub fn stats(&self) -> &CoordinatorStats {
        &self.stats
    }

    pub fn has_pending_append(&self) -> bool {
        self.pending.is_some()
    }

    /// Err while recovery has waited too long on some members.
    pub fn recovery_status(&self) -> Result<(), CoordinatorError> {
        match &self.waiting {
            Some(w) if self.recovery_ticks >= self.config.recovery_stall_ticks => {
                Err(CoordinatorError::MemberUnresponsive(w.iter().copied().collect()))
            }
            _ => Ok(()),
        }
    }

    /// Records persisted fragments outside of the message path. Stale
    /// fragments are dropped; the first one is returned as an error.
    pub fn report_persistence(&mut self, fragments: &[GraphFragment]) -> Result<(), CoordinatorError> {
        let mut first_err = None;
        for f in fragments {
            match self.view.report(f) {
                Ok(changed) => self.dirty |= changed,
                Err(e) => {
                    self.stats.stale_fragments += 1;
                    first_err.get_or_insert(e);
                }
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    pub fn handle(&mut self, msg: MemberMessage) -> Vec<Output> {
        let mut out = Vec::new();
        if self.pending.is_some() {
            self.queued.push_back(msg);
        } else {
            self.dispatch(msg, &mut out);
            self.drain_queue(&mut out);
        }
        out
    }

    pub fn tick(&mut self) -> Vec<Output> {
        let mut out = Vec::new();
        if self.pending.is_some() {
            return out;
        }
        if self.waiting.is_some() {
            self.recovery_ticks += 1;
            if self.recovery_ticks.is_multiple_of(self.config.segment_retry_ticks.max(1)) {
                self.request_segments(&mut out);
            }
        } else if self.dirty {
            self.announce(&mut out);
        }
        out
    }

    /// The last requested append is durable.
    pub fn on_appended(&mut self) -> Vec<Output> {
        let mut out = Vec::new();
        match self.pending.take() {
            None => {}
            Some(Pending::Join { object, incarnation, fragments }) => {
                self.log_len += 1;
                self.stats.appends += 1;
                self.members.insert(object, incarnation);
                self.absorb(object, &fragments);
                out.push(Output::Send {
                    to: object,
                    msg: CoordinatorMessage::ConnectAck {
                        object,
                        incarnation,
                        world_line: self.view.failure_seq(),
                        plans: Vec::new(),
                    },
                });
                self.announce(&mut out);
            }
            Some(Pending::Rejoin { object, incarnation, durable_world_line, plan, .. }) => {
                self.log_len += 2;
                self.stats.appends += 1;
                self.members.insert(object, incarnation);
                out.push(self.ack(object, incarnation, durable_world_line));
                for &m in self.members.keys() {
                    if m != object {
                        out.push(Output::Send { to: m, msg: CoordinatorMessage::Rollback(plan.clone()) });
                    }
                }
                self.dirty = true;
                self.announce(&mut out);
            }
        }
        self.drain_queue(&mut out);
        out
    }

    /// The last requested append failed. The triggering connect is dropped;
    /// the member retries it.
    pub fn on_append_failed(&mut self) -> Vec<Output> {
        self.stats.append_failures += 1;
        if let Some(Pending::Rejoin { saved, .. }) = self.pending.take() {
            self.view = *saved;
        }
        let mut out = Vec::new();
        self.drain_queue(&mut out);
        out
    }

    fn drain_queue(&mut self, out: &mut Vec<Output>) {
        while self.pending.is_none() {
            let Some(msg) = self.queued.pop_front() else { break };
            self.dispatch(msg, out);
        }
    }

    fn dispatch(&mut self, msg: MemberMessage, out: &mut Vec<Output>) {
        match msg {
            MemberMessage::Connect { object, incarnation, durable_world_line, fragments } => {
                if let Some(waiting) = &mut self.waiting {
                    waiting.remove(&object);
                    self.absorb(object, &fragments);
                    self.deferred_connects.push(MemberMessage::Connect {
                        object,
                        incarnation,
                        durable_world_line,
                        fragments,
                    });
                    self.maybe_finish_recovery(out);
                    return;
                }
                match self.members.get(&object) {
                    None => {
                        let event = ClusterEvent {
                            sequence: self.log_len,
                            kind: ClusterEventKind::MemberJoin { object, incarnation },
                        };
                        self.pending = Some(Pending::Join { object, incarnation, fragments });
                        out.push(Output::Append(vec![event]));
                    }
                    Some(&known) if known == incarnation => {
                        self.absorb(object, &fragments);
                        out.push(self.ack(object, incarnation, durable_world_line));
                        if self.dirty {
                            self.announce(out);
                        }
                    }
                    Some(_) => {
                        let saved = Box::new(self.view.clone());
                        self.absorb_floor(object, &fragments);
                        let members: BTreeSet<ObjectId> = self.members.keys().copied().collect();
                        let plan = self.view.plan_rollback(object, &fragments, &members);
                        let events = vec![
                            ClusterEvent {
                                sequence: self.log_len,
                                kind: ClusterEventKind::MemberRejoin { object, incarnation },
                            },
                            ClusterEvent {
                                sequence: self.log_len + 1,
                                kind: ClusterEventKind::RollbackDecision(plan.clone()),
                            },
                        ];
                        self.pending =
                            Some(Pending::Rejoin { object, incarnation, durable_world_line, plan, saved });
                        out.push(Output::Append(events));
                    }
                }
            }
            MemberMessage::Report { fragments, .. } => {
                let _ = self.report_persistence(&fragments);
                if self.waiting.is_none() && self.dirty {
                    self.announce(out);
                }
            }
            MemberMessage::BoundaryQuery { object, applied_seq } => {
                if self.waiting.is_some() {
                    out.push(Output::Send { to: object, msg: CoordinatorMessage::SegmentRequest });
                    return;
                }
                self.send_plans_after(object, applied_seq, out);
                if self.dirty {
                    self.announce(out);
                }
                out.push(Output::Send { to: object, msg: CoordinatorMessage::Boundary(self.announced.clone()) });
            }
            MemberMessage::Segments { object, applied_seq, fragments, .. } => {
                self.absorb(object, &fragments);
                match &mut self.waiting {
                    Some(waiting) => {
                        waiting.remove(&object);
                        self.maybe_finish_recovery(out);
                    }
                    None => {
                        if self.dirty {
                            self.announce(out);
                        }
                    }
                }
                if self.waiting.is_none() {
                    self.send_plans_after(object, applied_seq, out);
                }
            }
        }
    }

    fn send_plans_after(&self, object: ObjectId, applied_seq: u64, out: &mut Vec<Output>) {
        for p in self.view.plans_after(applied_seq) {
            out.push(Output::Send { to: object, msg: CoordinatorMessage::Rollback(p.clone()) });
        }
    }

    fn ack(&self, object: ObjectId, incarnation: u64, durable_world_line: u64) -> Output {
        Output::Send {
            to: object,
            msg: CoordinatorMessage::ConnectAck {
                object,
                incarnation,
                world_line: self.view.failure_seq(),
                plans: self.view.plans_after(durable_world_line).to_vec(),
            },
        }
    }

    /// Durable fragments of a member: everything below the lowest one has
    /// been pruned.
    fn absorb_floor(&mut self, object: ObjectId, fragments: &[GraphFragment]) {
        if let Some(min) = fragments.iter().filter(|f| f.vertex.object == object).map(|f| f.vertex.version).min() {
            self.view.raise_floor(object, min - 1);
        }
    }

    fn absorb(&mut self, object: ObjectId, fragments: &[GraphFragment]) {
        self.absorb_floor(object, fragments);
        let _ = self.report_persistence(fragments);
    }

    fn request_segments(&self, out: &mut Vec<Output>) {
        if let Some(waiting) = &self.waiting {
            for &m in waiting {
                out.push(Output::Send { to: m, msg: CoordinatorMessage::SegmentRequest });
            }
        }
    }

    fn maybe_finish_recovery(&mut self, out: &mut Vec<Output>) {
        if self.waiting.as_ref().is_some_and(|w| w.is_empty()) {
            self.waiting = None;
            self.dirty = true;
            self.announce(out);
            for msg in std::mem::take(&mut self.deferred_connects).into_iter().rev() {
                self.queued.push_front(msg);
            }
        }
    }

    /// Recomputes the boundary and, if it moved, pushes it to every member and
    /// prunes the view below it.
    fn announce(&mut self, out: &mut Vec<Output>) {
        self.dirty = false;
        let computed = self.view.compute_boundary();
        let mut merged: BTreeMap<ObjectId, Cutoff> = self.announced.cutoffs.clone();
        for (o, c) in &computed {
            let e = merged.entry(*o).or_insert(*c);
            if c.version >= e.version {
                *e = *c;
            }
        }
        if merged.iter().any(|(o, c)| computed.get(o).is_none_or(|n| n.version < c.version)) {
            self.stats.boundary_regressions += 1;
        }
        let seq = self.view.failure_seq();
        if merged == self.announced.cutoffs && seq == self.announced.failure_seq && self.announced.epoch > 0 {
            return;
        }
        self.announced = Boundary { epoch: self.announced.epoch + 1, failure_seq: seq, cutoffs: merged };
        self.stats.boundaries_announced += 1;
        self.view.prune(&self.announced.cutoffs);
        for &m in self.members.keys() {
            out.push(Output::Send { to: m, msg: CoordinatorMessage::Boundary(self.announced.clone()) });
        }
    }
}
