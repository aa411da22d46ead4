//! Deterministic simulation of speculative services: virtual time, seeded
//! randomness, lossy links, crash and restart injection, a full event trace
//! and post-hoc oracles over it. Also a loopback TCP transport for
//! measuring the runtime on real threads.

pub mod clients;
pub mod config;
pub mod device;
pub mod metrics;
pub mod observer;
pub mod oracle;
pub mod real;
pub mod scenario;
pub mod trace;
pub mod world;

pub use config::{random_faults, ConfigError, Dist, Fault, FaultKind, LinkLoss, SimConfig};
pub use metrics::{LatencyStats, Metrics};
pub use oracle::{check, OracleReport, OracleResult};
pub use scenario::{ScenarioKind, Workload};
pub use trace::{Event, Record, TraceLog};
pub use world::{run, RunOutput, SimError};
