use std::sync::Arc;

use dse_core::{DepSet, Header, ObjectId, Vertex};
use dse_runtime::{ActionGuard, Admission, DeferredQueue, Runtime, RuntimeError};
use serde::{Deserialize, Serialize};

use crate::message::{AppMessage, Body, Envelope, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Reply before persistence; external replies wait on a barrier.
    Speculative,
    /// Every outgoing message waits until the sending version is durable
    /// and inside the announced boundary.
    Baseline,
}

/// State shared by every service host.
pub struct NodeCore {
    pub rt: Arc<Runtime>,
    pub mode: Mode,
    deferred: DeferredQueue<(ObjectId, AppMessage)>,
    held: Vec<(u64, u64, Envelope)>,
    pub refused: u64,
    pub discarded: u64,
}

/// What became of an incoming message.
pub enum Admit<'a> {
    Run(ActionGuard<'a>),
    /// Stale header; the message was dropped.
    Stale,
    /// Buffered until the object catches up.
    Later,
}

impl NodeCore {
    pub fn new(rt: Arc<Runtime>, mode: Mode) -> Self {
        let cap = rt.config().deferred_capacity;
        Self { rt, mode, deferred: DeferredQueue::new(cap), held: Vec::new(), refused: 0, discarded: 0 }
    }

    /// Starts an action for `msg`, deferring it when the object is not ready.
    pub fn admit<'a>(&mut self, rt: &'a Runtime, from: ObjectId, msg: &AppMessage) -> Admit<'a> {
        match rt.start_action(msg.header.as_ref()) {
            Ok(Admission::Admitted(g)) => Admit::Run(g),
            Ok(Admission::Discard) => {
                self.discarded += 1;
                Admit::Stale
            }
            Ok(Admission::Defer) | Err(RuntimeError::NotConnected) => {
                self.defer(from, msg.clone());
                Admit::Later
            }
            Err(e) => panic!("unexpected runtime error: {e}"),
        }
    }

    pub fn defer(&mut self, from: ObjectId, msg: AppMessage) {
        if self.deferred.push((from, msg)).is_err() {
            self.refused += 1;
        }
    }

    pub fn take_deferred(&mut self) -> Vec<(ObjectId, AppMessage)> {
        self.deferred.drain()
    }

    /// Sends `env` from an action that ran at `header`'s vertex: now in
    /// speculative mode, once that version is recoverable in baseline mode.
    pub fn emit(&mut self, header: &Header, env: Envelope, out: &mut Vec<Envelope>) {
        match self.mode {
            Mode::Speculative => out.push(env),
            Mode::Baseline => {
                let v = header.deps.iter().map(|d| d.version).max().unwrap_or(0);
                self.held.push((header.world_line, v, env));
            }
        }
    }

    /// Messages whose version has become recoverable. Local durability is
    /// not enough: a survivor's unreported versions can still be rolled
    /// back. Messages from an earlier world-line are dropped; a rollback may
    /// have discarded their version.
    pub fn release_held(&mut self) -> Vec<Envelope> {
        if self.held.is_empty() {
            return Vec::new();
        }
        let wl = self.rt.world_line();
        let me = self.rt.object();
        let through = self.rt.durable_through();
        let boundary = self.rt.boundary();
        let mut out = Vec::new();
        self.held.retain(|(w, v, e)| {
            if *w != wl {
                return false;
            }
            if *v <= through && boundary.covers_version(&Vertex::new(me, *w, *v)) {
                out.push(e.clone());
                return false;
            }
            true
        });
        out
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }
}

pub fn reply(to: ObjectId, req: u64, outcome: Outcome, released: DepSet) -> Envelope {
    Envelope::new(to, None, Body::Reply { req, outcome, released: released.into_iter().collect() })
}

/// A sans-IO service host. The embedding loop delivers messages to
/// `handle`, drives `Runtime::refresh`, then calls `poll`.
pub trait ServiceNode: Send {
    fn core(&self) -> &NodeCore;
    fn core_mut(&mut self) -> &mut NodeCore;
    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope>;
    /// Node-specific background work, such as polling barriers.
    fn poll_node(&mut self) -> Vec<Envelope>;

    fn runtime(&self) -> &Arc<Runtime> {
        &self.core().rt
    }

    fn poll(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        for (from, m) in self.core_mut().take_deferred() {
            out.extend(self.handle(from, m));
        }
        out.extend(self.core_mut().release_held());
        out.extend(self.poll_node());
        out
    }
}
