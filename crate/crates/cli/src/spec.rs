//! Turning command-line arguments into runnable simulations.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dse_core::ObjectId;
use dse_services::Mode;
use dse_sim::{random_faults, Fault, FaultKind, ScenarioKind, SimConfig, Workload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Chain,
    Tpc,
    Counter,
    Workflow,
    Log,
    /// Chain with one object crashing half way through.
    RecoveryChain,
    /// Two-phase commit with one participant crashing half way through.
    RecoveryTpc,
    /// Real threads and loopback TCP; no simulation.
    Microbench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Speculative,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Speculative => Mode::Speculative,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, value_enum, default_value = "speculative")]
    pub mode: ModeArg,
    /// Services in a chain, counters, or workflow steps.
    #[arg(long, default_value_t = 3)]
    pub services: usize,
    /// Two-phase commit participants.
    #[arg(long, default_value_t = 4)]
    pub participants: usize,
    #[arg(long, default_value_t = 4)]
    pub clients: usize,
    /// Total requests across all clients.
    #[arg(long, default_value_t = 200)]
    pub requests: usize,
    /// Group commit period in milliseconds.
    #[arg(long, default_value_t = 10)]
    pub commit_period: u64,
    /// Aggregate open-loop arrival rate per second.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    /// Virtual horizon in milliseconds; for microbench, wall time per point.
    #[arg(long, default_value_t = 1000)]
    pub duration: u64,
    /// Fixed persistence latency in milliseconds.
    #[arg(long, default_value_t = 1.0)]
    pub persist_latency: f64,
    /// Message loss probability on application links.
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed list: `0..10` (end exclusive) or `1,4,9`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// JSON array of faults applied to every seed.
    #[arg(long, conflicts_with = "fault_density")]
    pub faults: Option<PathBuf>,
    /// Random fault schedule per seed with up to this many crashes.
    #[arg(long)]
    pub fault_density: Option<usize>,
    /// Output directory; `DSE_OUT` takes precedence.
    #[arg(long, default_value = "dse-out")]
    pub out: PathBuf,
    /// Concurrent contexts for microbench: `1,2,4,8,16`.
    #[arg(long, default_value = "1,2,4,8,16")]
    pub contexts: String,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid spec: --{field}: {reason}")]
pub struct InvalidSpec {
    pub field: String,
    pub reason: String,
}

fn invalid(field: &str, reason: impl Into<String>) -> InvalidSpec {
    InvalidSpec { field: field.into(), reason: reason.into() }
}

pub fn parse_list(field: &str, s: &str) -> Result<Vec<u64>, InvalidSpec> {
    let bad = |_| invalid(field, format!("cannot parse {s:?}"));
    let out: Vec<u64> = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect(),
        None => s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?,
    };
    if out.is_empty() {
        return Err(invalid(field, "empty list"));
    }
    Ok(out)
}

/// One fully resolved simulation per seed.
pub struct Plan {
    pub workload: Workload,
    pub configs: Vec<SimConfig>,
}

impl RunArgs {
    pub fn seeds(&self) -> Result<Vec<u64>, InvalidSpec> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => parse_list("seeds", s),
            (None, Some(s)) => Ok(vec![s]),
            (None, None) => Ok(vec![0]),
        }
    }

    pub fn contexts(&self) -> Result<Vec<usize>, InvalidSpec> {
        let c = parse_list("contexts", &self.contexts)?;
        if c.contains(&0) {
            return Err(invalid("contexts", "must be positive"));
        }
        Ok(c.into_iter().map(|n| n as usize).collect())
    }

    pub fn out_dir(&self) -> PathBuf {
        std::env::var_os("DSE_OUT").map_or_else(|| self.out.clone(), PathBuf::from)
    }

    fn kind(&self) -> ScenarioKind {
        match self.scenario {
            Scenario::Chain | Scenario::RecoveryChain | Scenario::Microbench => ScenarioKind::Chain,
            Scenario::Tpc | Scenario::RecoveryTpc => ScenarioKind::Tpc,
            Scenario::Counter => ScenarioKind::Counter,
            Scenario::Workflow => ScenarioKind::Workflow,
            Scenario::Log => ScenarioKind::Log,
        }
    }

    pub fn plan(&self) -> Result<Plan, InvalidSpec> {
        if self.duration == 0 {
            return Err(invalid("duration", "must be positive"));
        }
        if self.commit_period == 0 {
            return Err(invalid("commit-period", "must be positive"));
        }
        if self.requests == 0 {
            return Err(invalid("requests", "must be positive"));
        }
        let workload = Workload {
            services: self.services,
            participants: self.participants,
            clients: self.clients,
            requests: self.requests,
            rate: self.rate,
            ..Workload::new(self.kind(), self.mode.into())
        };
        workload.validate().map_err(|e| invalid(&e.field, e.reason))?;
        let fixed = match &self.faults {
            Some(path) => read_faults(path)?,
            None => self.default_faults(&workload),
        };
        let mut configs = Vec::new();
        for seed in self.seeds()? {
            let faults = match self.fault_density {
                Some(n) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfa);
                    random_faults(&mut rng, &workload.objects(), self.duration, n)
                }
                None => fixed.clone(),
            };
            let cfg = SimConfig {
                seed,
                loss: self.loss,
                persist_latency: dse_sim::Dist::fixed(self.persist_latency),
                commit_period_ms: self.commit_period,
                horizon_ms: self.duration,
                faults,
                ..SimConfig::default()
            };
            cfg.validate().map_err(|e| invalid(&e.field.replace('_', "-"), e.reason))?;
            for f in &cfg.faults {
                if let FaultKind::CrashObject { object } | FaultKind::RestartObject { object } = f.kind {
                    if !workload.objects().contains(&ObjectId(object)) {
                        return Err(invalid("faults", format!("object {object} is not part of the scenario")));
                    }
                }
            }
            configs.push(cfg);
        }
        Ok(Plan { workload, configs })
    }

    /// The recovery scenarios crash object 2 at half the horizon and
    /// restart it 20 ms later.
    fn default_faults(&self, w: &Workload) -> Vec<Fault> {
        if !matches!(self.scenario, Scenario::RecoveryChain | Scenario::RecoveryTpc) {
            return Vec::new();
        }
        let object = w.objects().iter().map(|o| o.0).find(|&o| o == 2).unwrap_or(1);
        let at_ms = (self.duration / 2) as f64;
        vec![
            Fault { at_ms, kind: FaultKind::CrashObject { object } },
            Fault { at_ms: at_ms + 20.0, kind: FaultKind::RestartObject { object } },
        ]
    }
}

fn read_faults(path: &Path) -> Result<Vec<Fault>, InvalidSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("faults", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid("faults", format!("{}: {e}", path.display())))
}
