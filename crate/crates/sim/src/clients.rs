//! External clients. They hold no runtime; replies reach them only after a
//! barrier (speculative mode) or after durability (baseline mode).

use std::collections::BTreeMap;

use dse_core::{merge_deps, DepSet, Header, ObjectId};
use dse_services::{AppMessage, Body, Envelope, Outcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::CLIENT_BASE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    /// Open-loop arrival.
    Next,
    Timeout { req: u64, attempt: u32 },
}

/// A finished request.
#[derive(Clone, Debug, PartialEq)]
pub struct Completed {
    pub client: ObjectId,
    pub req: u64,
    pub start_us: u64,
    pub end_us: u64,
    /// `None` when the client gave up.
    pub outcome: Option<Outcome>,
    pub attempts: u32,
}

/// What a client may do in response to an event.
pub struct ClientCx<'a> {
    pub now: u64,
    pub id: ObjectId,
    pub rng: &'a mut ChaCha8Rng,
    pub timeout_us: u64,
    pub out: Vec<Envelope>,
    pub timers: Vec<(u64, Timer)>,
    pub started: Vec<u64>,
    pub completed: Vec<Completed>,
}

impl ClientCx<'_> {
    fn send(&mut self, to: ObjectId, header: Option<Header>, body: Body) {
        self.out.push(Envelope::new(to, header, body));
    }

    fn after(&mut self, delay_us: u64, t: Timer) {
        self.timers.push((delay_us, t));
    }

    fn finish(&mut self, req: u64, f: &InFlight, outcome: Option<Outcome>) {
        let c = Completed { client: self.id, req, start_us: f.start, end_us: self.now, outcome, attempts: f.attempt + 1 };
        self.completed.push(c);
    }
}

pub trait Client: Send {
    fn start(&mut self, cx: &mut ClientCx);
    fn on_message(&mut self, cx: &mut ClientCx, from: ObjectId, msg: AppMessage);
    fn on_timer(&mut self, cx: &mut ClientCx, t: Timer);
    /// Stop issuing new requests.
    fn stop(&mut self);
    /// Nothing left to issue or wait for.
    fn finished(&self) -> bool;
}

struct InFlight {
    start: u64,
    attempt: u32,
}

fn req_id(client: usize, n: u64) -> u64 {
    ((client as u64 + 1) << 32) | n
}

/// Poisson arrivals; each request is retried until it is answered.
pub struct OpenLoop {
    index: usize,
    to: ObjectId,
    rate: f64,
    remaining: usize,
    issued: u64,
    append: bool,
    inflight: BTreeMap<u64, (InFlight, Body)>,
    stopped: bool,
}

impl OpenLoop {
    pub fn chain(index: usize, head: ObjectId, rate: f64, quota: usize) -> Self {
        Self::new(index, head, rate, quota, false)
    }

    pub fn append(index: usize, log: ObjectId, rate: f64, quota: usize) -> Self {
        Self::new(index, log, rate, quota, true)
    }

    fn new(index: usize, to: ObjectId, rate: f64, remaining: usize, append: bool) -> Self {
        Self { index, to, rate, remaining, issued: 0, append, inflight: BTreeMap::new(), stopped: false }
    }

    fn gap(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        (-u.ln() / self.rate * 1e6).round().max(1.0) as u64
    }
}

impl Client for OpenLoop {
    fn start(&mut self, cx: &mut ClientCx) {
        let g = self.gap(cx.rng);
        cx.after(g, Timer::Next);
    }

    fn on_message(&mut self, cx: &mut ClientCx, _from: ObjectId, msg: AppMessage) {
        let Body::Reply { req, outcome, .. } = msg.body else { return };
        if let Some((f, _)) = self.inflight.remove(&req) {
            cx.finish(req, &f, Some(outcome));
        }
    }

    fn on_timer(&mut self, cx: &mut ClientCx, t: Timer) {
        match t {
            Timer::Next => {
                if self.stopped || self.remaining == 0 {
                    return;
                }
                self.remaining -= 1;
                self.issued += 1;
                let req = req_id(self.index, self.issued);
                let body = if self.append {
                    let len = cx.rng.gen_range(8..64);
                    Body::Append { req, payload: (0..len).map(|_| cx.rng.gen()).collect() }
                } else {
                    Body::ChainRequest { req }
                };
                cx.started.push(req);
                cx.send(self.to, None, body.clone());
                cx.after(cx.timeout_us, Timer::Timeout { req, attempt: 0 });
                self.inflight.insert(req, (InFlight { start: cx.now, attempt: 0 }, body));
                let g = self.gap(cx.rng);
                cx.after(g, Timer::Next);
            }
            Timer::Timeout { req, attempt } => {
                let Some((f, body)) = self.inflight.get_mut(&req) else { return };
                if f.attempt != attempt {
                    return;
                }
                f.attempt += 1;
                let (body, attempt) = (body.clone(), f.attempt);
                cx.send(self.to, None, body);
                cx.after(cx.timeout_us, Timer::Timeout { req, attempt });
            }
        }
    }

    fn stop(&mut self) {
        self.stopped = true;
    }

    fn finished(&self) -> bool {
        (self.stopped || self.remaining == 0) && self.inflight.is_empty()
    }
}

/// One request at a time, retried with the same id until answered.
pub struct ClosedLoop {
    index: usize,
    to: ObjectId,
    remaining: usize,
    issued: u64,
    make: fn(u64, u32) -> Body,
    arg: u32,
    current: Option<(u64, InFlight)>,
    stopped: bool,
}

impl ClosedLoop {
    pub fn counter(index: usize, counter: ObjectId, quota: usize) -> Self {
        Self::new(index, counter, quota, |req, _| Body::Increment { req, amount: 1 }, 0)
    }

    pub fn workflow(index: usize, orchestrator: ObjectId, steps: u32, quota: usize) -> Self {
        Self::new(index, orchestrator, quota, |wf, steps| Body::WorkflowRequest { wf, steps }, steps)
    }

    fn new(index: usize, to: ObjectId, remaining: usize, make: fn(u64, u32) -> Body, arg: u32) -> Self {
        Self { index, to, remaining, issued: 0, make, arg, current: None, stopped: false }
    }

    fn next(&mut self, cx: &mut ClientCx) {
        if self.stopped || self.remaining == 0 {
            return;
        }
        self.remaining -= 1;
        self.issued += 1;
        let req = req_id(self.index, self.issued);
        cx.started.push(req);
        cx.send(self.to, None, (self.make)(req, self.arg));
        cx.after(cx.timeout_us, Timer::Timeout { req, attempt: 0 });
        self.current = Some((req, InFlight { start: cx.now, attempt: 0 }));
    }
}

impl Client for ClosedLoop {
    fn start(&mut self, cx: &mut ClientCx) {
        self.next(cx);
    }

    fn on_message(&mut self, cx: &mut ClientCx, _from: ObjectId, msg: AppMessage) {
        let Body::Reply { req, outcome, .. } = msg.body else { return };
        match &self.current {
            Some((r, f)) if *r == req => {
                cx.finish(req, f, Some(outcome));
                self.current = None;
                self.next(cx);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, cx: &mut ClientCx, t: Timer) {
        let Timer::Timeout { req, attempt } = t else { return };
        let Some((r, f)) = &mut self.current else { return };
        if *r != req || f.attempt != attempt {
            return;
        }
        f.attempt += 1;
        let attempt = f.attempt;
        cx.send(self.to, None, (self.make)(req, self.arg));
        cx.after(cx.timeout_us, Timer::Timeout { req, attempt });
    }

    fn stop(&mut self) {
        self.stopped = true;
    }

    fn finished(&self) -> bool {
        (self.stopped || self.remaining == 0) && self.current.is_none()
    }
}

struct Tx {
    id: u64,
    start: u64,
    acks: BTreeMap<ObjectId, Header>,
    committing: bool,
}

/// Closed-loop transaction client: writes a start record at every
/// participant, merges their acknowledgement headers, and asks the commit
/// coordinator to commit. A transaction that times out counts as aborted
/// and the next one starts.
pub struct TpcClient {
    index: usize,
    coordinator: ObjectId,
    participants: Vec<ObjectId>,
    remaining: usize,
    issued: u64,
    current: Option<Tx>,
    stopped: bool,
}

impl TpcClient {
    pub fn new(index: usize, coordinator: ObjectId, participants: Vec<ObjectId>, quota: usize) -> Self {
        Self { index, coordinator, participants, remaining: quota, issued: 0, current: None, stopped: false }
    }

    fn next(&mut self, cx: &mut ClientCx) {
        if self.stopped || self.remaining == 0 {
            return;
        }
        self.remaining -= 1;
        self.issued += 1;
        let tx = req_id(self.index, self.issued);
        cx.started.push(tx);
        for &p in &self.participants {
            cx.send(p, None, Body::TxStart { tx });
        }
        cx.after(cx.timeout_us, Timer::Timeout { req: tx, attempt: 0 });
        self.current = Some(Tx { id: tx, start: cx.now, acks: BTreeMap::new(), committing: false });
    }
}

impl Client for TpcClient {
    fn start(&mut self, cx: &mut ClientCx) {
        self.next(cx);
    }

    fn on_message(&mut self, cx: &mut ClientCx, from: ObjectId, msg: AppMessage) {
        let Some(tx) = &mut self.current else { return };
        match msg.body {
            Body::TxStartAck { tx: id } if id == tx.id && !tx.committing => {
                if let Some(h) = msg.header {
                    tx.acks.insert(from, h);
                }
                if tx.acks.len() == self.participants.len() {
                    let wl = tx.acks.values().map(|h| h.world_line).max().unwrap_or(0);
                    let deps = tx.acks.values().fold(DepSet::new(), |acc, h| merge_deps(&acc, &h.deps));
                    tx.committing = true;
                    let body = Body::TxCommit { tx: tx.id, participants: self.participants.clone() };
                    cx.send(self.coordinator, Some(Header::new(wl, deps)), body);
                }
            }
            Body::Reply { req, outcome, .. } if req == tx.id => {
                let f = InFlight { start: tx.start, attempt: 0 };
                cx.finish(req, &f, Some(outcome));
                self.current = None;
                self.next(cx);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, cx: &mut ClientCx, t: Timer) {
        let Timer::Timeout { req, .. } = t else { return };
        match &self.current {
            Some(tx) if tx.id == req => {
                let f = InFlight { start: tx.start, attempt: 0 };
                cx.finish(req, &f, None);
                self.current = None;
                self.next(cx);
            }
            _ => {}
        }
    }

    fn stop(&mut self) {
        self.stopped = true;
    }

    fn finished(&self) -> bool {
        (self.stopped || self.remaining == 0) && self.current.is_none()
    }
}

pub fn is_client(o: ObjectId) -> bool {
    o.0 >= CLIENT_BASE
}
