use std::collections::BTreeSet;
use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::SThread;
use serde::{Deserialize, Serialize};

use crate::message::{AppMessage, Body, Envelope, Outcome};
use crate::node::{reply, Admit, Mode, NodeCore, ServiceNode};
use crate::store::{Journal, JournaledLog};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogRecord {
    Appended { req: u64, payload: Vec<u8> },
    Step { wf: u64, step: u32 },
}

#[derive(Default, Debug)]
pub struct LogJournal {
    pub appended: BTreeSet<u64>,
    pub steps: BTreeSet<(u64, u32)>,
}

impl Journal for LogJournal {
    type Record = LogRecord;

    fn apply(&mut self, r: &LogRecord) {
        match r {
            LogRecord::Appended { req, .. } => {
                self.appended.insert(*req);
            }
            LogRecord::Step { wf, step } => {
                self.steps.insert((*wf, *step));
            }
        }
    }
}

pub type LogStore = JournaledLog<LogJournal>;

struct Releasing {
    client: ObjectId,
    req: u64,
    t: SThread,
}

/// Append service over a speculative log. Serves client appends and
/// workflow steps; steps are deduplicated by (workflow, step).
pub struct LogServiceNode {
    core: NodeCore,
    store: Arc<LogStore>,
    releasing: Vec<Releasing>,
}

impl LogServiceNode {
    pub fn new(core: NodeCore, store: Arc<LogStore>) -> Self {
        Self { core, store, releasing: Vec::new() }
    }

    pub fn store(&self) -> &Arc<LogStore> {
        &self.store
    }
}

impl ServiceNode for LogServiceNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        let rt = self.core.rt.clone();
        match msg.body.clone() {
            Body::Append { req, payload } => {
                let g = match self.core.admit(&rt, from, &msg) {
                    Admit::Run(g) => g,
                    Admit::Stale => {
                        out.push(reply(from, req, Outcome::Rejected, Default::default()));
                        return out;
                    }
                    Admit::Later => return out,
                };
                self.store.record(LogRecord::Appended { req, payload });
                match self.core.mode {
                    Mode::Speculative => self.releasing.push(Releasing { client: from, req, t: g.detach() }),
                    Mode::Baseline => {
                        let h = g.end();
                        self.core.emit(&h, reply(from, req, Outcome::Done, Default::default()), &mut out);
                    }
                }
            }
            Body::StepCall { wf, step } => {
                let Admit::Run(g) = self.core.admit(&rt, from, &msg) else { return out };
                if !self.store.read(|j| j.steps.contains(&(wf, step))) {
                    self.store.record(LogRecord::Step { wf, step });
                }
                let h = g.end();
                let env = Envelope::new(from, Some(h.clone()), Body::StepReturn { wf, step });
                self.core.emit(&h, env, &mut out);
            }
            _ => {}
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        self.releasing.retain_mut(|r| match r.t.poll_barrier() {
            Ok(Some(released)) => {
                out.push(reply(r.client, r.req, Outcome::Done, released));
                false
            }
            Ok(None) => true,
            Err(_) => false,
        });
        out
    }
}
