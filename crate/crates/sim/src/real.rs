//! Loopback TCP transport between runtimes and a coordinator thread, and a
//! throughput benchmark for local actions on real threads.
//!
//! Frames are a little-endian u32 length followed by the wire encoding of a
//! member or coordinator message.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use dse_coordinator::{Coordinator, CoordinatorConfig, DurableLog, MemLog, Output};
use dse_core::protocol::{CoordinatorMessage, MemberMessage};
use dse_core::{wire, ObjectId};
use dse_runtime::{
    Admission, BackendError, CoordinatorLink, LinkError, PersistCallback, Runtime, RuntimeConfig, RuntimeError,
    StateObjectBackend, SystemClock,
};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

const MAX_FRAME: usize = 64 << 20;

pub fn write_frame(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    let len = u32::try_from(bytes.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut buf = Vec::with_capacity(4 + bytes.len());
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(bytes);
    w.write_all(&buf)
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn invalid(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

enum Inbound {
    Connection(u64, TcpStream),
    Message(u64, MemberMessage),
}

/// A coordinator serving members over loopback TCP, backed by an in-memory
/// log.
pub struct CoordinatorServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl CoordinatorServer {
    pub fn start() -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let accept = {
            let stop = stop.clone();
            std::thread::spawn(move || accept_loop(listener, tx, stop))
        };
        let serve = {
            let stop = stop.clone();
            std::thread::spawn(move || serve_loop(rx, stop))
        };
        Ok(Self { addr, stop, threads: vec![accept, serve] })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for CoordinatorServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn accept_loop(listener: TcpListener, tx: mpsc::Sender<Inbound>, stop: Arc<AtomicBool>) {
    let mut next = 0u64;
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let id = next;
                next += 1;
                let Ok(reader) = stream.try_clone() else { continue };
                if tx.send(Inbound::Connection(id, stream)).is_err() {
                    return;
                }
                let tx = tx.clone();
                std::thread::spawn(move || {
                    let mut reader = reader;
                    while let Ok(frame) = read_frame(&mut reader) {
                        let Ok(msg) = wire::decode_member_message(&frame) else { return };
                        if tx.send(Inbound::Message(id, msg)).is_err() {
                            return;
                        }
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(1)),
            Err(_) => return,
        }
    }
}

fn serve_loop(rx: mpsc::Receiver<Inbound>, stop: Arc<AtomicBool>) {
    let mut coord = Coordinator::new(CoordinatorConfig::default());
    let mut log = MemLog::new();
    let mut conns: BTreeMap<u64, TcpStream> = BTreeMap::new();
    let mut routes: BTreeMap<ObjectId, u64> = BTreeMap::new();
    let mut last_tick = Instant::now();
    while !stop.load(Ordering::Acquire) {
        let mut outputs = Vec::new();
        match rx.recv_timeout(Duration::from_millis(1)) {
            Ok(Inbound::Connection(id, s)) => {
                conns.insert(id, s);
            }
            Ok(Inbound::Message(id, msg)) => {
                routes.insert(msg.object(), id);
                outputs = coord.handle(msg);
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => return,
        }
        if last_tick.elapsed() >= Duration::from_millis(10) {
            last_tick = Instant::now();
            outputs.extend(coord.tick());
        }
        let mut queue: VecDeque<Output> = outputs.into();
        while let Some(o) = queue.pop_front() {
            match o {
                Output::Send { to, msg } => {
                    let Some(s) = routes.get(&to).and_then(|id| conns.get_mut(id)) else { continue };
                    let _ = write_frame(s, &wire::encode_coordinator_message(&msg));
                }
                Output::Append(events) => {
                    let next = match log.append(&events) {
                        Ok(()) => coord.on_appended(),
                        Err(_) => coord.on_append_failed(),
                    };
                    queue.extend(next);
                }
            }
        }
    }
}

/// Member side of the TCP transport.
pub struct TcpLink {
    writer: Mutex<TcpStream>,
    inbound: Arc<Mutex<VecDeque<CoordinatorMessage>>>,
    closed: Arc<AtomicBool>,
}

impl TcpLink {
    pub fn connect(addr: SocketAddr) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let inbound = Arc::new(Mutex::new(VecDeque::new()));
        let closed = Arc::new(AtomicBool::new(false));
        {
            let inbound = inbound.clone();
            let closed = closed.clone();
            std::thread::spawn(move || {
                loop {
                    let msg = read_frame(&mut reader).and_then(|f| wire::decode_coordinator_message(&f).map_err(invalid));
                    match msg {
                        Ok(m) => inbound.lock().push_back(m),
                        Err(_) => break,
                    }
                }
                closed.store(true, Ordering::Release);
            });
        }
        Ok(Self { writer: Mutex::new(stream), inbound, closed })
    }
}

impl CoordinatorLink for TcpLink {
    fn send(&self, msg: MemberMessage) -> Result<(), LinkError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(LinkError);
        }
        write_frame(&mut *self.writer.lock(), &wire::encode_member_message(&msg)).map_err(|_| LinkError)
    }

    fn try_recv(&self) -> Option<CoordinatorMessage> {
        self.inbound.lock().pop_front()
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.writer.lock().shutdown(std::net::Shutdown::Both);
    }
}

/// State with no content: persists complete at once and only metadata is
/// kept.
#[derive(Default)]
pub struct NullBackend {
    versions: Mutex<BTreeMap<u64, Vec<u8>>>,
}

impl StateObjectBackend for NullBackend {
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback) {
        self.versions.lock().insert(version, metadata);
        done();
    }

    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError> {
        let mut v = self.versions.lock();
        v.split_off(&(version + 1));
        if version == 0 {
            return Ok(Vec::new());
        }
        v.get(&version).cloned().ok_or(BackendError::UnknownVersion(version))
    }

    fn prune(&self, version: u64) {
        let mut v = self.versions.lock();
        *v = v.split_off(&(version + 1));
    }

    fn list_versions(&self) -> Vec<(u64, Vec<u8>)> {
        self.versions.lock().iter().map(|(&k, m)| (k, m.clone())).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("runtime: {0}")]
    Runtime(#[from] RuntimeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub contexts: usize,
    pub ops: u64,
    pub seconds: f64,
    pub ops_per_sec: f64,
}

/// Runs `contexts` threads doing empty start/end action pairs on one
/// runtime connected to the coordinator at `addr`, while a separate thread
/// drives refresh (group commit and boundary queries).
pub fn microbench(addr: SocketAddr, object: ObjectId, contexts: usize, duration: Duration) -> Result<BenchResult, BenchError> {
    let link = Arc::new(TcpLink::connect(addr)?);
    let rt = Arc::new(Runtime::new(
        RuntimeConfig::new(object, 1),
        Arc::new(NullBackend::default()),
        link,
        Arc::new(SystemClock::new()),
    ));
    rt.connect_blocking(Duration::from_secs(5))?;
    let stop = Arc::new(AtomicBool::new(false));
    let ops = Arc::new(AtomicU64::new(0));
    let refresher = {
        let (rt, stop) = (rt.clone(), stop.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::Acquire) {
                let _ = rt.refresh();
                std::thread::sleep(Duration::from_millis(1));
            }
        })
    };
    let start = Instant::now();
    let workers: Vec<_> = (0..contexts.max(1))
        .map(|_| {
            let (rt, stop, ops) = (rt.clone(), stop.clone(), ops.clone());
            std::thread::spawn(move || {
                let mut n = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    for _ in 0..256 {
                        if let Ok(Admission::Admitted(g)) = rt.start_action(None) {
                            g.end();
                            n += 1;
                        }
                    }
                }
                ops.fetch_add(n, Ordering::Relaxed);
            })
        })
        .collect();
    std::thread::sleep(duration);
    stop.store(true, Ordering::Release);
    for w in workers {
        let _ = w.join();
    }
    let seconds = start.elapsed().as_secs_f64();
    let _ = refresher.join();
    let ops = ops.load(Ordering::Relaxed);
    Ok(BenchResult { contexts: contexts.max(1), ops, seconds, ops_per_sec: ops as f64 / seconds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), b"abc");
        assert_eq!(read_frame(&mut r).unwrap(), b"");
        assert!(read_frame(&mut r).is_err());
    }

    #[test]
    fn oversized_frame_is_rejected() {
        let mut r = &(u32::MAX.to_le_bytes())[..];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn null_backend_restore_discards_later_versions() {
        let b = NullBackend::default();
        for v in 1..=3 {
            b.persist(v, vec![v as u8], Box::new(|| {}));
        }
        assert_eq!(b.restore(2).unwrap(), vec![2]);
        assert_eq!(b.list_versions().len(), 2);
        b.prune(1);
        assert_eq!(b.list_versions(), vec![(2, vec![2])]);
        assert!(b.restore(0).unwrap().is_empty());
    }
}
