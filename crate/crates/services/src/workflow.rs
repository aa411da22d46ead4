use std::collections::BTreeMap;
use std::sync::Arc;

use dse_core::ObjectId;
use dse_runtime::{ActionGuard, Admission, Receive, SThread};
use serde::{Deserialize, Serialize};

use crate::message::{AppMessage, Body, Envelope, Outcome};
use crate::node::{reply, Admit, Mode, NodeCore, ServiceNode};
use crate::store::{Journal, JournaledLog};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkflowRecord {
    Started { wf: u64, steps: u32 },
    StepCompleted { wf: u64, step: u32 },
    Finished { wf: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkflowStatus {
    pub steps: u32,
    pub completed: u32,
    pub finished: bool,
}

#[derive(Default, Debug)]
pub struct WorkflowJournal {
    pub status: BTreeMap<u64, WorkflowStatus>,
}

impl Journal for WorkflowJournal {
    type Record = WorkflowRecord;

    fn apply(&mut self, r: &WorkflowRecord) {
        match *r {
            WorkflowRecord::Started { wf, steps } => {
                self.status.entry(wf).or_insert(WorkflowStatus { steps, completed: 0, finished: false });
            }
            WorkflowRecord::StepCompleted { wf, step } => {
                if let Some(s) = self.status.get_mut(&wf) {
                    if step == s.completed && !s.finished {
                        s.completed += 1;
                    }
                }
            }
            WorkflowRecord::Finished { wf } => {
                if let Some(s) = self.status.get_mut(&wf) {
                    if s.completed == s.steps {
                        s.finished = true;
                    }
                }
            }
        }
    }
}

pub type WorkflowStore = JournaledLog<WorkflowJournal>;

enum Stage {
    Calling { t: SThread, step: u32 },
    Releasing { t: SThread },
    /// Baseline: waiting for the step's reply.
    Waiting { step: u32 },
    /// Needs a fresh action to continue from the journal.
    Resume,
}

struct Flight {
    client: ObjectId,
    steps: u32,
    stage: Stage,
}

/// Workflow orchestrator. Each step is logged, then the workflow detaches,
/// calls a step service, and merges back; the final reply waits on a
/// barrier. A rolled-back workflow resumes from its surviving journal.
pub struct WorkflowNode {
    core: NodeCore,
    store: Arc<WorkflowStore>,
    services: Vec<ObjectId>,
    flights: BTreeMap<u64, Flight>,
    pub resumed: u64,
}

impl WorkflowNode {
    pub fn new(core: NodeCore, store: Arc<WorkflowStore>, services: Vec<ObjectId>) -> Self {
        Self { core, store, services, flights: BTreeMap::new(), resumed: 0 }
    }

    pub fn store(&self) -> &Arc<WorkflowStore> {
        &self.store
    }

    /// Continues `wf` inside the running action `g`.
    fn advance(&mut self, wf: u64, client: ObjectId, steps: u32, g: ActionGuard<'_>, out: &mut Vec<Envelope>) {
        let mut st = self.store.read(|j| j.status.get(&wf).copied());
        if st.is_none() {
            self.store.record(WorkflowRecord::Started { wf, steps });
            st = self.store.read(|j| j.status.get(&wf).copied());
        }
        let st = st.expect("started above");
        if !st.finished && st.completed == st.steps {
            self.store.record(WorkflowRecord::Finished { wf });
        }
        let done = st.completed == st.steps;
        let step = st.completed;
        let target = if self.services.is_empty() { None } else { Some(self.services[step as usize % self.services.len()]) };
        match (self.core.mode, done, target) {
            (Mode::Speculative, true, _) | (Mode::Speculative, false, None) => {
                let stage = Stage::Releasing { t: g.detach() };
                self.flights.insert(wf, Flight { client, steps: st.steps, stage });
            }
            (Mode::Speculative, false, Some(to)) => {
                let mut t = g.detach();
                let h = t.send().expect("fresh sthread");
                out.push(Envelope::new(to, Some(h), Body::StepCall { wf, step }));
                self.flights.insert(wf, Flight { client, steps: st.steps, stage: Stage::Calling { t, step } });
            }
            (Mode::Baseline, true, _) | (Mode::Baseline, false, None) => {
                let h = g.end();
                self.flights.remove(&wf);
                self.core.emit(&h, reply(client, wf, Outcome::Value(st.steps as i64), Default::default()), out);
            }
            (Mode::Baseline, false, Some(to)) => {
                let h = g.end();
                self.core.emit(&h, Envelope::new(to, Some(h.clone()), Body::StepCall { wf, step }), out);
                self.flights.insert(wf, Flight { client, steps: st.steps, stage: Stage::Waiting { step } });
            }
        }
    }

    fn resume(&mut self, wf: u64, out: &mut Vec<Envelope>) {
        let Some(f) = self.flights.get(&wf) else { return };
        let (client, steps) = (f.client, f.steps);
        let rt = self.core.rt.clone();
        let adm = rt.start_action(None);
        match adm {
            Ok(Admission::Admitted(g)) => {
                self.resumed += 1;
                self.advance(wf, client, steps, g, out);
            }
            _ => {
                if let Some(f) = self.flights.get_mut(&wf) {
                    f.stage = Stage::Resume;
                }
            }
        }
    }

    /// A retried request re-sends the outstanding step call, which may
    /// have been lost; step services deduplicate. A baseline call is
    /// reissued from a fresh action since its header may be stale.
    fn retransmit(&mut self, wf: u64, out: &mut Vec<Envelope>) {
        let Some(f) = self.flights.get_mut(&wf) else { return };
        match &mut f.stage {
            Stage::Calling { t, step } => {
                if let Ok(h) = t.send() {
                    let to = self.services[*step as usize % self.services.len()];
                    out.push(Envelope::new(to, Some(h), Body::StepCall { wf, step: *step }));
                }
            }
            Stage::Waiting { .. } => {
                f.stage = Stage::Resume;
                self.resume(wf, out);
            }
            _ => {}
        }
    }

    fn on_step_return(&mut self, from: ObjectId, msg: AppMessage, wf: u64, step: u32, out: &mut Vec<Envelope>) {
        let Some(f) = self.flights.remove(&wf) else { return };
        let (client, steps) = (f.client, f.steps);
        match f.stage {
            Stage::Calling { mut t, step: s } if s == step => {
                let h = msg.header.clone().unwrap_or_default();
                match t.receive(&h) {
                    Ok(Receive::Accepted) => {
                        let rt = self.core.rt.clone();
                        let adm = rt.merge(t);
                        match adm {
                            Ok(Admission::Admitted(g)) => {
                                self.store.record(WorkflowRecord::StepCompleted { wf, step });
                                self.advance(wf, client, steps, g, out);
                            }
                            _ => {
                                self.flights.insert(wf, Flight { client, steps, stage: Stage::Resume });
                                self.resume(wf, out);
                            }
                        }
                    }
                    Ok(Receive::Deferred) => {
                        self.flights.insert(wf, Flight { client, steps, stage: Stage::Calling { t, step } });
                        self.core.defer(from, msg);
                    }
                    Ok(Receive::Discarded) => {
                        self.flights.insert(wf, Flight { client, steps, stage: Stage::Calling { t, step } });
                    }
                    Err(_) => {
                        self.flights.insert(wf, Flight { client, steps, stage: Stage::Resume });
                        self.resume(wf, out);
                    }
                }
            }
            Stage::Waiting { step: s } if s == step => {
                let rt = self.core.rt.clone();
                let adm = self.core.admit(&rt, from, &msg);
                match adm {
                    Admit::Run(g) => {
                        self.store.record(WorkflowRecord::StepCompleted { wf, step });
                        self.advance(wf, client, steps, g, out);
                    }
                    _ => {
                        self.flights.insert(wf, Flight { client, steps, stage: Stage::Waiting { step } });
                    }
                }
            }
            stage => {
                self.flights.insert(wf, Flight { client, steps, stage });
            }
        }
    }
}

impl ServiceNode for WorkflowNode {
    fn core(&self) -> &NodeCore {
        &self.core
    }

    fn core_mut(&mut self) -> &mut NodeCore {
        &mut self.core
    }

    fn handle(&mut self, from: ObjectId, msg: AppMessage) -> Vec<Envelope> {
        let mut out = Vec::new();
        match msg.body {
            Body::WorkflowRequest { wf, steps } => {
                if self.flights.contains_key(&wf) {
                    self.retransmit(wf, &mut out);
                    return out;
                }
                let rt = self.core.rt.clone();
                let adm = self.core.admit(&rt, from, &msg);
                if let Admit::Run(g) = adm {
                    self.advance(wf, from, steps, g, &mut out);
                }
            }
            Body::StepReturn { wf, step } => self.on_step_return(from, msg, wf, step, &mut out),
            _ => {}
        }
        out
    }

    fn poll_node(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        let mut resume = Vec::new();
        let mut done = Vec::new();
        for (&wf, f) in self.flights.iter_mut() {
            match &mut f.stage {
                Stage::Releasing { t } => match t.poll_barrier() {
                    Ok(Some(released)) => {
                        out.push(reply(f.client, wf, Outcome::Value(f.steps as i64), released));
                        done.push(wf);
                    }
                    Ok(None) => {}
                    Err(_) => resume.push(wf),
                },
                Stage::Calling { t, .. } => {
                    if t.send().is_err() {
                        resume.push(wf);
                    }
                }
                Stage::Resume => resume.push(wf),
                Stage::Waiting { .. } => {}
            }
        }
        for wf in done {
            self.flights.remove(&wf);
        }
        for wf in resume {
            self.resume(wf, &mut out);
        }
        out
    }
}
