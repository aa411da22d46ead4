use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dse_core::{merge_deps, DepSet, Header, ObjectId, Vertex};

use crate::runtime::Shared;

/// Some dependency of the sthread was rolled back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("sthread was rolled back")]
pub struct RolledBack;

/// Outcome of offering a header to an sthread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receive {
    Accepted,
    /// The header is from a world-line the sthread has already left.
    Discarded,
    /// The header is from a world-line the parent has not reached yet.
    Deferred,
}

/// A detached thread of execution carrying its own dependency set.
pub struct SThread {
    shared: Arc<Shared>,
    origin_world_line: u64,
    world_line: u64,
    deps: DepSet,
    rolled_back: bool,
}

impl std::fmt::Debug for SThread {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SThread")
            .field("parent", &self.shared.object)
            .field("world_line", &self.world_line)
            .field("deps", &self.deps)
            .field("rolled_back", &self.rolled_back)
            .finish()
    }
}

impl SThread {
    pub(crate) fn new(shared: Arc<Shared>, at: Vertex) -> Self {
        Self {
            shared,
            origin_world_line: at.world_line,
            world_line: at.world_line,
            deps: DepSet::from([at]),
            rolled_back: false,
        }
    }

    pub fn parent(&self) -> ObjectId {
        self.shared.object
    }

    /// World-line of the parent when the sthread was detached.
    pub fn origin_world_line(&self) -> u64 {
        self.origin_world_line
    }

    /// World-line the dependency set has been validated through.
    pub fn world_line(&self) -> u64 {
        self.world_line
    }

    pub fn deps(&self) -> &DepSet {
        &self.deps
    }

    pub fn is_rolled_back(&self) -> bool {
        self.rolled_back
    }

    /// Checks the dependency set against every rollback the parent applied
    /// since the last check.
    fn validate(&mut self) -> Result<(), RolledBack> {
        if self.rolled_back {
            return Err(RolledBack);
        }
        let latest = self.shared.world_line.load(Ordering::Acquire);
        if latest <= self.world_line {
            return Ok(());
        }
        let me = self.shared.object;
        let plans = self.shared.plans.read();
        let aliases = self.shared.aliases.read();
        for (&seq, plan) in plans.range(self.world_line + 1..=latest) {
            let alias = aliases.get(&seq).copied();
            let mut next = DepSet::new();
            for d in &self.deps {
                if d.object == me && d.world_line + 1 == seq && Some(d.version) == alias {
                    next.insert(Vertex::new(me, seq, d.version));
                } else if plan.rolls_back(d) {
                    self.rolled_back = true;
                    return Err(RolledBack);
                } else {
                    next.insert(*d);
                }
            }
            self.deps = merge_deps(&next, &DepSet::new());
        }
        self.world_line = latest;
        Ok(())
    }

    /// Folds a received header into the dependency set.
    pub fn receive(&mut self, h: &Header) -> Result<Receive, RolledBack> {
        self.validate()?;
        if h.world_line < self.world_line {
            return Ok(Receive::Discarded);
        }
        if h.world_line > self.world_line {
            return Ok(Receive::Deferred);
        }
        self.deps = merge_deps(&self.deps, &h.deps);
        Ok(Receive::Accepted)
    }

    /// Header for an outgoing message.
    pub fn send(&mut self) -> Result<Header, RolledBack> {
        self.validate()?;
        Ok(Header::new(self.world_line, self.deps.clone()))
    }

    /// Non-blocking barrier. Returns the released dependencies and clears
    /// them once every one lies inside the recoverable boundary.
    pub fn poll_barrier(&mut self) -> Result<Option<DepSet>, RolledBack> {
        loop {
            self.validate()?;
            if self.deps.is_empty() {
                return Ok(Some(DepSet::new()));
            }
            let b = self.shared.boundary.read();
            if b.failure_seq > self.world_line {
                drop(b);
                continue;
            }
            if self.deps.iter().all(|d| b.covers_version(d)) {
                drop(b);
                return Ok(Some(std::mem::take(&mut self.deps)));
            }
            return Ok(None);
        }
    }

    /// Blocks until the barrier releases or `timeout` passes. The parent's
    /// refresh must be driven by someone else meanwhile.
    pub fn barrier(&mut self, timeout: Duration) -> Result<Option<DepSet>, RolledBack> {
        let deadline = Instant::now() + timeout;
        loop {
            let seen = self.shared.signal_count();
            if let Some(released) = self.poll_barrier()? {
                return Ok(Some(released));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            self.shared.wait(seen, deadline - now);
        }
    }
}
