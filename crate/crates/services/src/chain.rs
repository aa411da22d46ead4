use std::collections::BTreeMap;
use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::{Receive, SThread};

use crate::message::{AppMessage, Body, Envelope, Outcome};
use crate::node::{reply, Admit, Mode, NodeCore, ServiceNode};
use crate::speclog::SpecLog;

enum Pending {
    /// Waiting for the call to come back down the chain.
    InFlight { client: ObjectId, t: SThread },
    /// Waiting for the barrier before replying.
    Releasing { client: ObjectId, t: SThread },
    /// Baseline: the chain is durable once it returns.
    Baseline { client: ObjectId },
}

/// One service of a request chain. The first service takes client
/// requests, each service logs the request and calls the next, and the last
/// one returns to the first, which replies to the client.
pub struct ChainNode {
    core: NodeCore,
    log: Arc<SpecLog>,
    chain: Vec<ObjectId>,
    index: usize,
    pending: BTreeMap<u64, Pending>,
}

impl ChainNode {
    pub fn new(core: NodeCore, log: Arc<SpecLog>, chain: Vec<ObjectId>) -> Self {
        let me = core.rt.object();
        let index = chain.iter().position(|&o| o == me).expect("node is part of its chain");
        Self { core, log, chain, index, pending: BTreeMap::new() }
    }

    pub fn log(&self) -> &Arc<SpecLog> {
        &self.log
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn on_request(&mut self, from: ObjectId, msg: AppMessage, req: u64, out: &mut Vec<Envelope>) {
        let rt = self.core.rt.clone();
        let g = match self.core.admit(&rt, from, &msg) {
            Admit::Run(g) => g,
            Admit::Stale => return out.push(reply(from, req, Outcome::Rejected, Default::default())),
            Admit::Later => return,
        };
        self.log.append(&req.to_le_bytes());
        let last = self.chain.len() == 1;
        match self.core.mode {
            Mode::Speculative => {
                let mut t = g.detach();
                if last {
                    self.pending.insert(req, Pending::Releasing { client: from, t });
                } else {
                    let h = t.send().expect("fresh sthread");
                    out.push(Envelope::new(self.chain[1], Some(h), Body::ChainCall { req, hop: 1 }));
                    self.pending.insert(req, Pending::InFlight { client: from, t });
                }
            }
            Mode::Baseline => {
                let h = g.end();
                let env = if last {
                    reply(from, req, Outcome::Done, Default::default())
                } else {
                    self.pending.insert(req, Pending::Baseline { client: from });
                    Envelope::new(self.chain[1], Some(h.clone()), Body::ChainCall { req, hop: 1 })
                };
                self.core.emit(&h, env, out);
            }
        }
    }

    fn on_call(&mut self, from: ObjectId, msg: AppMessage, req: u64, hop: u32, out: &mut Vec<Envelope>) {
        let rt = self.core.rt.clone();
        let Admit::Run(g) = self.core.admit(&rt, from, &msg) else { return };
        self.log.append(&req.to_le_bytes());
        let h = g.end();
        let next = hop as usize + 1;
        let env = if next < self.chain.len() {
            Envelope::new(self.chain[next], Some(h.clone()), Body::ChainCall { req, hop: next as u32 })
        } else {
            Envelope::new(self.chain[0], Some(h.clone()), Body::ChainReturn { req })
        };
        self.core.emit(&h, env, out);
    }

    fn on_return(&mut self, from: ObjectId, msg: AppMessage, req: u64, out: &mut Vec<Envelope>) {
        match self.pending.remove(&req) {
            Some(Pending::InFlight { client, mut t }) => {
                let h = msg.header.clone().unwrap_or_default();
                match t.receive(&h) {
                    Ok(Receive::Accepted) => {
                        self.pending.insert(req, Pending::Releasing { client, t });
                    }
                    Ok(Receive::Deferred) => {
                        self.pending.insert(req, Pending::InFlight { client, t });
                        self.core.defer(from, msg);
                    }
                    Ok(Receive::Discarded) => {
                        self.pending.insert(req, Pending::InFlight { client, t });
                    }
                    Err(_) => {}
                }
            }
            Some(Pending::Baseline { client }) => out.push(reply(client, req, Outcome::Done, Default::default())),
            Some(other) => {
                self.pending.insert(req, other);
            }
            None => {}
        }
    }
}

impl ServiceNode for ChainNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        match msg.body {
            Body::ChainRequest { req } if self.index == 0 => self.on_request(from, msg, req, &mut out),
            Body::ChainCall { req, hop } => self.on_call(from, msg, req, hop, &mut out),
            Body::ChainReturn { req } if self.index == 0 => self.on_return(from, msg, req, &mut out),
            _ => {}
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.pending.retain(|&req, p| match p {
            Pending::Releasing { client, t } => match t.poll_barrier() {
                Ok(Some(released)) => {
                    out.push(reply(*client, req, Outcome::Done, released));
                    false
                }
                Ok(None) => true,
                Err(_) => false,
            },
            Pending::InFlight { t, .. } => t.send().is_ok(),
            Pending::Baseline { .. } => true,
        });
        out
    }
}
