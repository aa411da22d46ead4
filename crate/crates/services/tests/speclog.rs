use std::collections::VecDeque;
use std::sync::Arc;

use dse_runtime::{BackendError, PersistCallback, StateObjectBackend};
use dse_services::{frame, FileDevice, LogDevice, MemDevice, SpecLog};
use parking_lot::Mutex;
use proptest::prelude::*;

type PendingWrite = (u64, u64, Vec<u8>, PersistCallback);

/// Device whose writes stay pending until `complete(n)`, in issue order.
#[derive(Default)]
struct SlowDevice {
    durable: Mutex<Vec<u8>>,
    pending: Mutex<VecDeque<PendingWrite>>,
    epoch: Mutex<u64>,
}

impl SlowDevice {
    fn complete(&self, n: usize) {
        for _ in 0..n {
            let Some((epoch, offset, bytes, done)) = self.pending.lock().pop_front() else { return };
            if epoch != *self.epoch.lock() {
                continue;
            }
            {
                let mut d = self.durable.lock();
                d.truncate(offset as usize);
                d.extend_from_slice(&bytes);
            }
            done();
        }
    }
}

impl LogDevice for SlowDevice {
    fn write(&self, offset: u64, bytes: Vec<u8>, done: PersistCallback) {
        let epoch = *self.epoch.lock();
        self.pending.lock().push_back((epoch, offset, bytes, done));
    }

    fn truncate(&self, len: u64) {
        *self.epoch.lock() += 1;
        self.durable.lock().truncate(len as usize);
    }

    fn read(&self) -> Vec<u8> {
        self.durable.lock().clone()
    }
}

fn noop() -> PersistCallback {
    Box::new(|| {})
}

#[test]
fn restore_cuts_back_to_commit_record() {
    let log = SpecLog::open(Arc::new(MemDevice::new()));
    log.append(b"a");
    log.persist(1, b"m1".to_vec(), noop());
    let after_one = log.contents();
    log.append(b"b");
    log.append(b"c");
    log.persist(2, b"m2".to_vec(), noop());
    log.append(b"d");
    assert_eq!(log.entries().len(), 4);
    assert_eq!(log.restore(1).unwrap(), b"m1");
    assert_eq!(log.contents(), after_one);
    assert_eq!(log.entries(), vec![b"a".to_vec()]);
    assert_eq!(log.list_versions(), vec![(1, b"m1".to_vec())]);
    assert_eq!(log.restore(0).unwrap(), Vec::<u8>::new());
    assert!(log.contents().is_empty());
}

#[test]
fn unknown_and_pruned_versions_cannot_be_restored() {
    let log = SpecLog::open(Arc::new(MemDevice::new()));
    for v in 1..=3 {
        log.append(&[v as u8]);
        log.persist(v, Vec::new(), noop());
    }
    assert_eq!(log.restore(9), Err(BackendError::UnknownVersion(9)));
    log.prune(2);
    assert_eq!(log.list_versions().iter().map(|(v, _)| *v).collect::<Vec<_>>(), vec![3]);
    assert_eq!(log.restore(2), Err(BackendError::UnknownVersion(2)));
    assert_eq!(log.restore(0), Err(BackendError::UnknownVersion(0)));
    assert!(log.restore(3).is_ok());
}

#[test]
fn reopen_drops_uncommitted_tail_and_keeps_prune() {
    let dev = Arc::new(MemDevice::new());
    let log = SpecLog::open(dev.clone());
    log.append(b"x");
    log.persist(1, Vec::new(), noop());
    log.append(b"y");
    log.persist(2, Vec::new(), noop());
    log.prune(1);
    log.append(b"z");
    log.persist(3, Vec::new(), noop());
    let committed = log.contents();
    let mut torn = committed.clone();
    frame::encode(frame::KIND_ENTRY, b"half", &mut torn);
    torn.truncate(torn.len() - 3);
    let reopened = SpecLog::open(Arc::new(MemDevice::with_contents(torn)));
    assert_eq!(reopened.contents(), committed);
    assert_eq!(reopened.list_versions().iter().map(|(v, _)| *v).collect::<Vec<_>>(), vec![2, 3]);
}

#[test]
fn file_device_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log");
    {
        let log = SpecLog::open(Arc::new(FileDevice::open(&path).unwrap()));
        log.append(b"one");
        log.persist(1, b"meta".to_vec(), noop());
        log.append(b"lost");
    }
    let log = SpecLog::open(Arc::new(FileDevice::open(&path).unwrap()));
    assert_eq!(log.entries(), vec![b"one".to_vec()]);
    assert_eq!(log.list_versions(), vec![(1, b"meta".to_vec())]);
}

#[test]
fn completion_after_restore_is_ignored() {
    let dev = Arc::new(SlowDevice::default());
    let log = SpecLog::open(dev.clone());
    log.append(b"a");
    log.persist(1, Vec::new(), noop());
    dev.complete(1);
    log.append(b"b");
    let fired = Arc::new(Mutex::new(false));
    let f = fired.clone();
    log.persist(2, Vec::new(), Box::new(move || *f.lock() = true));
    log.restore(1).unwrap();
    dev.complete(1);
    assert!(!*fired.lock());
    assert_eq!(dev.read(), log.contents());
    assert_eq!(log.list_versions().len(), 1);
}

#[derive(Clone, Debug)]
enum Op {
    Append(Vec<u8>),
    Persist,
    Complete(usize),
    Restore(usize),
    Crash,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => proptest::collection::vec(any::<u8>(), 0..12).prop_map(Op::Append),
        2 => Just(Op::Persist),
        2 => (0usize..3).prop_map(Op::Complete),
        1 => (0usize..4).prop_map(Op::Restore),
        1 => Just(Op::Crash),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Recovered contents are always a prefix of the pre-crash contents
    /// that ends at a commit record.
    #[test]
    fn recovery_yields_committed_prefix(ops in proptest::collection::vec(op(), 1..60)) {
        let mut dev = Arc::new(SlowDevice::default());
        let mut log = SpecLog::open(dev.clone());
        let mut next = 1u64;
        for o in ops {
            match o {
                Op::Append(p) => { log.append(&p); }
                Op::Persist => {
                    log.persist(next, next.to_le_bytes().to_vec(), noop());
                    next += 1;
                }
                Op::Complete(n) => dev.complete(n),
                Op::Restore(back) => {
                    let listed: Vec<u64> = log.list_versions().into_iter().map(|(v, _)| v).collect();
                    if let Some(&v) = listed.iter().rev().nth(back.min(listed.len().saturating_sub(1))) {
                        let offsets = log.commit_offsets();
                        log.restore(v).unwrap();
                        prop_assert_eq!(log.contents().len() as u64, offsets[&v]);
                        next = v + 1;
                    }
                }
                Op::Crash => {
                    let shadow = log.contents();
                    let offsets = log.commit_offsets();
                    let durable = dev.read();
                    let fresh = Arc::new(SlowDevice::default());
                    *fresh.durable.lock() = durable;
                    dev = fresh;
                    log = SpecLog::open(dev.clone());
                    let got = log.contents();
                    prop_assert!(shadow.starts_with(&got));
                    prop_assert!(got.is_empty() || offsets.values().any(|&e| e == got.len() as u64));
                    next = log.list_versions().last().map_or(0, |(v, _)| *v).max(next.saturating_sub(1)) + 1;
                }
            }
        }
    }
}
