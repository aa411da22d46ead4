use dse_core::ObjectId;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A delay distribution in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist {
    Fixed { ms: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Dist {
    pub fn fixed(ms: f64) -> Self {
        Dist::Fixed { ms }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Dist::Uniform { lo, hi }
    }

    /// Sample in microseconds.
    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let ms = match *self {
            Dist::Fixed { ms } => ms,
            Dist::Uniform { lo, hi } if hi > lo => rng.gen_range(lo..hi),
            Dist::Uniform { lo, .. } => lo,
        };
        (ms * 1000.0).round() as u64
    }

    fn is_valid(&self) -> bool {
        match *self {
            Dist::Fixed { ms } => ms.is_finite() && ms >= 0.0,
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    CrashObject { object: u64 },
    RestartObject { object: u64 },
    /// The coordinator restarts from its log `coordinator_restart_ms` later.
    CrashCoordinator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub at_ms: f64,
    #[serde(flatten)]
    pub kind: FaultKind,
}

/// Loss probability for messages from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkLoss {
    pub from: u64,
    pub to: u64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub net_delay: Dist,
    /// Loss probability for application messages.
    pub loss: f64,
    pub link_loss: Vec<LinkLoss>,
    pub persist_latency: Dist,
    pub coordinator_log_latency: Dist,
    pub commit_period_ms: u64,
    pub query_period_ms: u64,
    pub faults: Vec<Fault>,
    pub coordinator_restart_ms: f64,
    /// No new requests after this point.
    pub horizon_ms: u64,
    /// Extra time after the last client finishes, to reach quiescence.
    pub settle_ms: u64,
    pub request_timeout_ms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            net_delay: Dist::uniform(0.1, 0.5),
            loss: 0.0,
            link_loss: Vec::new(),
            persist_latency: Dist::fixed(1.0),
            coordinator_log_latency: Dist::fixed(1.0),
            commit_period_ms: 10,
            query_period_ms: 50,
            faults: Vec::new(),
            coordinator_restart_ms: 20.0,
            horizon_ms: 5_000,
            settle_ms: 300,
            request_timeout_ms: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config: {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

fn bad(field: &str, reason: &str) -> ConfigError {
    ConfigError { field: field.into(), reason: reason.into() }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.loss) {
            return Err(bad("loss", "must lie in [0, 1]"));
        }
        if self.link_loss.iter().any(|l| !prob(l.p)) {
            return Err(bad("link_loss", "probabilities must lie in [0, 1]"));
        }
        for (name, d) in [
            ("net_delay", &self.net_delay),
            ("persist_latency", &self.persist_latency),
            ("coordinator_log_latency", &self.coordinator_log_latency),
        ] {
            if !d.is_valid() {
                return Err(bad(name, "delays must be finite and non-negative"));
            }
        }
        if self.commit_period_ms == 0 || self.query_period_ms == 0 {
            return Err(bad("commit_period_ms", "periods must be positive"));
        }
        if !(self.coordinator_restart_ms.is_finite() && self.coordinator_restart_ms >= 0.0) {
            return Err(bad("coordinator_restart_ms", "must be non-negative"));
        }
        if self.faults.iter().any(|f| !(f.at_ms.is_finite() && f.at_ms >= 0.0)) {
            return Err(bad("faults", "times must be non-negative"));
        }
        if self.faults.windows(2).any(|w| w[1].at_ms <= w[0].at_ms) {
            return Err(bad("faults", "times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn loss_for(&self, from: ObjectId, to: ObjectId) -> f64 {
        self.link_loss.iter().find(|l| l.from == from.0 && l.to == to.0).map_or(self.loss, |l| l.p)
    }
}

/// Up to `max_crashes` crashes between 20% and 80% of `horizon_ms`. Each
/// crash picks the coordinator or one of `objects` with equal weight; an
/// object restarts 5 to 50 ms after its crash.
pub fn random_faults(rng: &mut impl Rng, objects: &[ObjectId], horizon_ms: u64, max_crashes: usize) -> Vec<Fault> {
    let n = rng.gen_range(1..=max_crashes.max(1));
    let lo = horizon_ms as f64 * 0.2;
    let hi = horizon_ms as f64 * 0.8;
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi).round()).collect();
    times.sort_by(f64::total_cmp);
    let mut out: Vec<Fault> = Vec::new();
    let mut last = -1.0;
    for t in times {
        let t = if t <= last { last + 1.0 } else { t };
        let pick = rng.gen_range(0..=objects.len());
        if pick == objects.len() {
            out.push(Fault { at_ms: t, kind: FaultKind::CrashCoordinator });
            last = t;
        } else {
            let object = objects[pick].0;
            let back = t + rng.gen_range(5..=50) as f64;
            out.push(Fault { at_ms: t, kind: FaultKind::CrashObject { object } });
            out.push(Fault { at_ms: back, kind: FaultKind::RestartObject { object } });
            last = back;
        }
    }
    out
}
