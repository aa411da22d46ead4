use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::{Admission, Receive, SThread};
use serde::{Deserialize, Serialize};

use crate::message::{AppMessage, Body, Envelope, Outcome};
use crate::node::{reply, Admit, Mode, NodeCore, ServiceNode};
use crate::store::{Journal, JournaledLog};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TpcRecord {
    Start { tx: u64 },
    Prepared { tx: u64 },
    Begin { tx: u64 },
    Commit { tx: u64 },
    Abort { tx: u64 },
}

#[derive(Default, Debug)]
pub struct TpcJournal {
    pub started: BTreeSet<u64>,
    pub prepared: BTreeSet<u64>,
    pub begun: BTreeSet<u64>,
    /// Decision per transaction: true for commit.
    pub decisions: BTreeMap<u64, bool>,
}

impl Journal for TpcJournal {
    type Record = TpcRecord;

    fn apply(&mut self, r: &TpcRecord) {
        match *r {
            TpcRecord::Start { tx } => {
                self.started.insert(tx);
            }
            TpcRecord::Prepared { tx } => {
                self.prepared.insert(tx);
            }
            TpcRecord::Begin { tx } => {
                self.begun.insert(tx);
            }
            TpcRecord::Commit { tx } => {
                self.decisions.entry(tx).or_insert(true);
            }
            TpcRecord::Abort { tx } => {
                self.decisions.entry(tx).or_insert(false);
            }
        }
    }
}

pub type TpcStore = JournaledLog<TpcJournal>;

/// Participant: logs transaction starts from clients and votes yes on
/// prepare unless the start record is gone.
pub struct TpcParticipantNode {
    core: NodeCore,
    store: Arc<TpcStore>,
}

impl TpcParticipantNode {
    pub fn new(core: NodeCore, store: Arc<TpcStore>) -> Self {
        Self { core, store }
    }

    pub fn store(&self) -> &Arc<TpcStore> {
        &self.store
    }
}

impl ServiceNode for TpcParticipantNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        let rt = self.core.rt.clone();
        match msg.body {
            Body::TxStart { tx } => {
                let Admit::Run(g) = self.core.admit(&rt, from, &msg) else { return out };
                self.store.record(TpcRecord::Start { tx });
                let h = g.end();
                self.core.emit(&h, Envelope::new(from, Some(h.clone()), Body::TxStartAck { tx }), &mut out);
            }
            Body::Prepare { tx } => {
                let Admit::Run(g) = self.core.admit(&rt, from, &msg) else { return out };
                let yes = self.store.read(|j| j.started.contains(&tx));
                if yes {
                    self.store.record(TpcRecord::Prepared { tx });
                }
                let h = g.end();
                self.core.emit(&h, Envelope::new(from, Some(h.clone()), Body::Vote { tx, yes }), &mut out);
            }
            _ => {}
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        Vec::new()
    }
}

enum Stage {
    Voting { t: SThread, waiting: BTreeSet<ObjectId>, yes: bool },
    Releasing { t: SThread, commit: bool },
    BaselineVoting { waiting: BTreeSet<ObjectId>, yes: bool },
}

struct Tx {
    client: ObjectId,
    stage: Stage,
}

/// Commit coordinator. Runs prepare as a detached sthread, logs the
/// decision, and releases it to the client after a barrier.
pub struct TpcCoordinatorNode {
    core: NodeCore,
    store: Arc<TpcStore>,
    txs: BTreeMap<u64, Tx>,
}

impl TpcCoordinatorNode {
    pub fn new(core: NodeCore, store: Arc<TpcStore>) -> Self {
        Self { core, store, txs: BTreeMap::new() }
    }

    pub fn store(&self) -> &Arc<TpcStore> {
        &self.store
    }

    fn abort(client: ObjectId, tx: u64) -> Envelope {
        reply(client, tx, Outcome::Aborted, Default::default())
    }

    fn on_commit(&mut self, from: ObjectId, msg: AppMessage, tx: u64, participants: Vec<ObjectId>, out: &mut Vec<Envelope>) {
        if self.txs.contains_key(&tx) {
            return;
        }
        let rt = self.core.rt.clone();
        let g = match self.core.admit(&rt, from, &msg) {
            Admit::Run(g) => g,
            Admit::Stale => return out.push(Self::abort(from, tx)),
            Admit::Later => return,
        };
        self.store.record(TpcRecord::Begin { tx });
        let waiting: BTreeSet<ObjectId> = participants.iter().copied().collect();
        match self.core.mode {
            Mode::Speculative => {
                let mut t = g.detach();
                let h = t.send().expect("fresh sthread");
                for &p in &waiting {
                    out.push(Envelope::new(p, Some(h.clone()), Body::Prepare { tx }));
                }
                self.txs.insert(tx, Tx { client: from, stage: Stage::Voting { t, waiting, yes: true } });
            }
            Mode::Baseline => {
                let h = g.end();
                for &p in &waiting {
                    out.push(Envelope::new(p, Some(h.clone()), Body::Prepare { tx }));
                }
                self.txs.insert(tx, Tx { client: from, stage: Stage::BaselineVoting { waiting, yes: true } });
            }
        }
    }

    fn on_vote(&mut self, from: ObjectId, msg: AppMessage, tx: u64, vote: bool, out: &mut Vec<Envelope>) {
        let Some(Tx { client, stage }) = self.txs.remove(&tx) else { return };
        match stage {
            Stage::Voting { mut t, mut waiting, mut yes } => {
                let h = msg.header.clone().unwrap_or_default();
                match t.receive(&h) {
                    Ok(Receive::Accepted) => {}
                    Ok(Receive::Deferred) => {
                        self.core.defer(from, msg);
                        self.txs.insert(tx, Tx { client, stage: Stage::Voting { t, waiting, yes } });
                        return;
                    }
                    Ok(Receive::Discarded) => {
                        self.txs.insert(tx, Tx { client, stage: Stage::Voting { t, waiting, yes } });
                        return;
                    }
                    Err(_) => return out.push(Self::abort(client, tx)),
                }
                waiting.remove(&from);
                yes &= vote;
                if !waiting.is_empty() {
                    self.txs.insert(tx, Tx { client, stage: Stage::Voting { t, waiting, yes } });
                    return;
                }
                let rt = self.core.rt.clone();
                let adm = rt.merge(t);
                match adm {
                    Ok(Admission::Admitted(g)) => {
                        self.store.record(if yes { TpcRecord::Commit { tx } } else { TpcRecord::Abort { tx } });
                        let commit = self.store.read(|j| j.decisions.get(&tx).copied().unwrap_or(false));
                        self.txs.insert(tx, Tx { client, stage: Stage::Releasing { t: g.detach(), commit } });
                    }
                    _ => out.push(Self::abort(client, tx)),
                }
            }
            Stage::BaselineVoting { mut waiting, mut yes } => {
                waiting.remove(&from);
                yes &= vote;
                if !waiting.is_empty() {
                    self.txs.insert(tx, Tx { client, stage: Stage::BaselineVoting { waiting, yes } });
                    return;
                }
                let rt = self.core.rt.clone();
                let adm = self.core.admit(&rt, from, &msg);
                match adm {
                    Admit::Run(g) => {
                        self.store.record(if yes { TpcRecord::Commit { tx } } else { TpcRecord::Abort { tx } });
                        let commit = self.store.read(|j| j.decisions.get(&tx).copied().unwrap_or(false));
                        let h = g.end();
                        let outcome = if commit { Outcome::Committed } else { Outcome::Aborted };
                        self.core.emit(&h, reply(client, tx, outcome, Default::default()), out);
                    }
                    Admit::Stale => out.push(Self::abort(client, tx)),
                    Admit::Later => {
                        waiting.insert(from);
                        self.txs.insert(tx, Tx { client, stage: Stage::BaselineVoting { waiting, yes } });
                    }
                }
            }
            stage => {
                self.txs.insert(tx, Tx { client, stage });
            }
        }
    }
}

impl ServiceNode for TpcCoordinatorNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        match msg.body.clone() {
            Body::TxCommit { tx, participants } => self.on_commit(from, msg, tx, participants, &mut out),
            Body::Vote { tx, yes } => self.on_vote(from, msg, tx, yes, &mut out),
            _ => {}
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.txs.retain(|&tx, x| match &mut x.stage {
            Stage::Releasing { t, commit } => match t.poll_barrier() {
                Ok(Some(released)) => {
                    let outcome = if *commit { Outcome::Committed } else { Outcome::Aborted };
                    out.push(reply(x.client, tx, outcome, released));
                    false
                }
                Ok(None) => true,
                Err(_) => {
                    out.push(Self::abort(x.client, tx));
                    false
                }
            },
            Stage::Voting { t, .. } => {
                if t.send().is_err() {
                    out.push(Self::abort(x.client, tx));
                    false
                } else {
                    true
                }
            }
            Stage::BaselineVoting { .. } => true,
        });
        out
    }
}
