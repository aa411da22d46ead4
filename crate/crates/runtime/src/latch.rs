//! Biased shared/exclusive latch.
//!
//! Readers announce themselves in one of a fixed set of padded slots, so the
//! uncontended shared path touches only a thread-affine cache line. A writer
//! raises the exclusive flag and waits for every slot to drain. Each slot also
//! buffers the dependency edges recorded by the actions that entered through
//! it; the writer collects them while it holds exclusive access.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};

use crossbeam_utils::{Backoff, CachePadded};
use dse_core::Vertex;
use parking_lot::{Mutex, MutexGuard};

const SLOTS: usize = 64;

static NEXT_SLOT: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static SLOT: usize = NEXT_SLOT.fetch_add(1, Ordering::Relaxed) % SLOTS;
}

#[derive(Default)]
struct Slot {
    active: AtomicU32,
    dirty: AtomicBool,
    edges: Mutex<Vec<Vertex>>,
}

pub(crate) struct ActionLatch {
    slots: Box<[CachePadded<Slot>]>,
    exclusive: AtomicBool,
    writer: Mutex<()>,
}

pub(crate) struct ExclusiveGuard<'a> {
    latch: &'a ActionLatch,
    _writer: MutexGuard<'a, ()>,
}

impl Drop for ExclusiveGuard<'_> {
    fn drop(&mut self) {
        self.latch.exclusive.store(false, Ordering::SeqCst);
    }
}

impl ActionLatch {
    pub(crate) fn new() -> Self {
        Self {
            slots: (0..SLOTS).map(|_| CachePadded::new(Slot::default())).collect(),
            exclusive: AtomicBool::new(false),
            writer: Mutex::new(()),
        }
    }

    /// Enters the shared side; returns the slot to pass to `exit_shared`.
    #[inline]
    pub(crate) fn enter_shared(&self) -> usize {
        let idx = SLOT.with(|s| *s);
        let slot = &self.slots[idx];
        loop {
            slot.active.fetch_add(1, Ordering::SeqCst);
            if !self.exclusive.load(Ordering::SeqCst) {
                return idx;
            }
            slot.active.fetch_sub(1, Ordering::SeqCst);
            let backoff = Backoff::new();
            while self.exclusive.load(Ordering::SeqCst) {
                backoff.snooze();
            }
        }
    }

    #[inline]
    pub(crate) fn exit_shared(&self, idx: usize, dirty: bool) {
        let slot = &self.slots[idx];
        if dirty && !slot.dirty.load(Ordering::Relaxed) {
            slot.dirty.store(true, Ordering::Relaxed);
        }
        slot.active.fetch_sub(1, Ordering::Release);
    }

    /// Records dependency edges for the current vertex. Caller holds `idx`.
    pub(crate) fn record_edges(&self, idx: usize, edges: impl IntoIterator<Item = Vertex>) {
        self.slots[idx].edges.lock().extend(edges);
    }

    /// True when some action has run since the last `take_*` call.
    pub(crate) fn any_dirty(&self) -> bool {
        self.slots.iter().any(|s| s.dirty.load(Ordering::Relaxed))
    }

    pub(crate) fn lock_exclusive(&self) -> ExclusiveGuard<'_> {
        let writer = self.writer.lock();
        self.exclusive.store(true, Ordering::SeqCst);
        for slot in self.slots.iter() {
            let backoff = Backoff::new();
            while slot.active.load(Ordering::SeqCst) != 0 {
                backoff.snooze();
            }
        }
        ExclusiveGuard { latch: self, _writer: writer }
    }

    /// Drains buffered edges and clears the dirty flags. Requires exclusive
    /// access, witnessed by the guard.
    pub(crate) fn take_edges(&self, _guard: &ExclusiveGuard<'_>) -> (Vec<Vertex>, bool) {
        let mut all = Vec::new();
        let mut dirty = false;
        for slot in self.slots.iter() {
            dirty |= slot.dirty.swap(false, Ordering::Relaxed);
            all.append(&mut slot.edges.lock());
        }
        (all, dirty)
    }

    /// Edges recorded so far, without draining them.
    pub(crate) fn peek_edges(&self, _guard: &ExclusiveGuard<'_>) -> Vec<Vertex> {
        self.slots.iter().flat_map(|s| s.edges.lock().clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicI64;
    use std::sync::Arc;

    #[test]
    fn writer_excludes_readers() {
        let latch = Arc::new(ActionLatch::new());
        let inside = Arc::new(AtomicI64::new(0));
        let writer_inside = Arc::new(AtomicBool::new(false));
        let mut handles = Vec::new();
        for _ in 0..4 {
            let (latch, inside, writer_inside) = (latch.clone(), inside.clone(), writer_inside.clone());
            handles.push(std::thread::spawn(move || {
                for _ in 0..20_000 {
                    let s = latch.enter_shared();
                    inside.fetch_add(1, Ordering::SeqCst);
                    assert!(!writer_inside.load(Ordering::SeqCst));
                    inside.fetch_sub(1, Ordering::SeqCst);
                    latch.exit_shared(s, true);
                }
            }));
        }
        for _ in 0..200 {
            let g = latch.lock_exclusive();
            writer_inside.store(true, Ordering::SeqCst);
            assert_eq!(inside.load(Ordering::SeqCst), 0);
            writer_inside.store(false, Ordering::SeqCst);
            drop(g);
            std::thread::yield_now();
        }
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn edges_and_dirty_flags_are_drained() {
        let latch = ActionLatch::new();
        let s = latch.enter_shared();
        latch.record_edges(s, [Vertex::new(dse_core::ObjectId(1), 0, 1)]);
        latch.exit_shared(s, true);
        assert!(latch.any_dirty());
        let g = latch.lock_exclusive();
        let (edges, dirty) = latch.take_edges(&g);
        assert_eq!(edges.len(), 1);
        assert!(dirty);
        assert!(!latch.any_dirty());
    }
}
