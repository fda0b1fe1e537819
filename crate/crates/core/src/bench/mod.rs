//! Benchmark harness: the matrix-multiplication suite run in three modes,
//! one CSV row per run, and summary tables over the CSV.
//!
//! Modes:
//! - `local`: the task runs on the calling thread, under the client
//!   compute throttle, with no coordinator involved.
//! - `local-pmco`: the task runs under the checkpoint coordinator as a
//!   migration-aware worker that is never offloaded.
//! - `pmco`: the task is offloaded to the edge at its first marker (the
//!   entry is forced so every run migrates; the benefit is still recorded).

mod report;
pub mod stats;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

pub use report::{report, Bounded, CellSummary, Comparison, Report};

use crate::checkpoint::{run_inline, Coordinator, CoordinatorOptions, Launcher};
use crate::client::{select_server, Agent, AgentOptions, ModeTaken, OffloadOutcome, PhaseTimes, ServerEntry};
use crate::decision::{benefit_eq1, AppPreferences, GlobalPreferences, MigrationType, OffloadFlag};
use crate::energy::{energy_of, PowerProfile};
use crate::protocol::{Hello, SessionOptions};
use crate::registry::{DeviceInfo, PreferenceRegistry};
use crate::tasks::TaskSpec;

pub const STANDARD_SIZES: [usize; 8] = [300, 400, 500, 600, 700, 800, 900, 1000];
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_ITERATIONS: usize = 30;

pub const FLAG_OK: &str = "ok";
pub const FLAG_FALLBACK: &str = "fallback";
pub const FLAG_LOCAL: &str = "local";
pub const FLAG_FAILED: &str = "failed";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown mode `{0}` (local|local-pmco|pmco)")]
    UnknownMode(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Local,
    LocalPmco,
    Pmco,
}

impl ExecMode {
    pub const ALL: [ExecMode; 3] = [ExecMode::Local, ExecMode::LocalPmco, ExecMode::Pmco];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExecMode::Local => "local",
            ExecMode::LocalPmco => "local-pmco",
            ExecMode::Pmco => "pmco",
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        ExecMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BenchError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub name: String,
    pub n: usize,
    pub seed: u64,
}

impl Workload {
    pub fn matmul(n: usize, seed: u64) -> Self {
        Self {
            name: format!("matmul{n}"),
            n,
            seed,
        }
    }

    pub fn task(&self) -> TaskSpec {
        TaskSpec::Matmul {
            n: self.n,
            seed: self.seed,
        }
    }

    /// Registry entry for this workload: size from the catalog estimate,
    /// transfer sizes from the state held at each marker (both inputs up,
    /// the product down).
    pub fn app(&self, p_f: OffloadFlag) -> AppPreferences {
        let task = self.task();
        let cells = (self.n * self.n) as f64;
        AppPreferences {
            app_id: self.name.clone(),
            i: task.approx_mi(),
            task,
            alpha: 16.0 * cells,
            gamma: 8.0 * cells,
            p_f,
            p_t: MigrationType::Aware,
            interval_s: 1.0,
        }
    }
}

/// Workloads of a named suite.
pub fn suite(name: &str) -> Result<Vec<Workload>, BenchError> {
    match name {
        "standard" => Ok(STANDARD_SIZES
            .iter()
            .map(|&n| Workload::matmul(n, DEFAULT_SEED))
            .collect()),
        "small" => Ok([50, 100, 200]
            .iter()
            .map(|&n| Workload::matmul(n, DEFAULT_SEED))
            .collect()),
        other => Err(BenchError::UnknownSuite(other.to_string())),
    }
}

/// One CSV row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub workload: String,
    pub mode: ExecMode,
    pub iter: u32,
    pub n: usize,
    pub t_total_s: f64,
    pub t_compute_s: f64,
    pub t_ckpt_s: f64,
    pub t_up_s: f64,
    pub t_remote_s: f64,
    pub t_down_s: f64,
    pub t_restart_s: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub e_total_j: f64,
    pub e_ckpt_j: f64,
    pub e_restart_j: f64,
    pub e_tx_j: f64,
    pub e_rx_j: f64,
    pub benefit_j: f64,
    pub result_digest: String,
    pub flag: String,
}

pub const CSV_HEADER: &str = "workload,mode,iter,n,t_total_s,t_compute_s,t_ckpt_s,t_up_s,t_remote_s,t_down_s,t_restart_s,bytes_up,bytes_down,e_total_j,e_ckpt_j,e_restart_j,e_tx_j,e_rx_j,benefit_j,result_digest,flag";

impl BenchRecord {
    fn new(
        w: &Workload,
        mode: ExecMode,
        iter: u32,
        times: &PhaseTimes,
        profile: &PowerProfile,
        benefit_j: f64,
    ) -> Self {
        let e = energy_of(&times.timeline(), profile);
        Self {
            workload: w.name.clone(),
            mode,
            iter,
            n: w.n,
            t_total_s: times.total_s,
            t_compute_s: times.compute_s,
            t_ckpt_s: times.checkpoint_s,
            t_up_s: times.upload_s,
            t_remote_s: times.remote_s,
            t_down_s: times.download_s,
            t_restart_s: times.restart_s,
            bytes_up: 0,
            bytes_down: 0,
            // + 0.0 turns -0.0 into 0.0 for the CSV
            e_total_j: e.total + 0.0,
            e_ckpt_j: e.terms.e_m_prime_p + 0.0,
            e_restart_j: e.terms.e_m_dprime_p + 0.0,
            e_tx_j: e.terms.e_t_p + 0.0,
            e_rx_j: e.terms.e_r_p + 0.0,
            benefit_j,
            result_digest: String::new(),
            flag: FLAG_OK.into(),
        }
    }

    /// Sum of the attributed phase durations.
    pub fn phase_sum(&self) -> f64 {
        self.t_compute_s
            + self.t_ckpt_s
            + self.t_up_s
            + self.t_remote_s
            + self.t_down_s
            + self.t_restart_s
    }
}

/// Device profile used by the suite unless overridden: 0.6 W active,
/// 0.1 W idle, 1.0 W transmit, 0.8 W receive, a 600 MIPS device and a
/// 2200 MIPS edge. Bandwidths are replaced by probes once connected.
pub fn desk_profile() -> GlobalPreferences {
    GlobalPreferences {
        e_c: 0.6,
        e_i: 0.1,
        e_t: 1.0,
        e_r: 0.8,
        s_m: 600.0,
        s_c: 2200.0,
        beta_u: 1e6,
        beta_d: 2e6,
        b_t: 0.0,
        server_criteria: Default::default(),
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Power ratings and rates for energy accounting and the decision.
    pub profile: GlobalPreferences,
    /// Client compute throttle (1.0 = full speed).
    pub slowdown: f64,
    pub launcher: Launcher,
    pub servers: Vec<ServerEntry>,
    pub session: SessionOptions,
    pub device: DeviceInfo,
}

impl BenchConfig {
    fn coordinator(&self) -> Coordinator {
        Coordinator::new(
            self.launcher.clone(),
            CoordinatorOptions {
                slowdown: self.slowdown,
                ..CoordinatorOptions::default()
            },
        )
    }

    fn agent(&self, app: AppPreferences) -> Agent {
        let mut reg = PreferenceRegistry::new(self.profile);
        reg.device = self.device.clone();
        reg.insert(app).expect("bench entries are valid");
        Agent::new(
            reg,
            self.coordinator(),
            AgentOptions {
                session: self.session.clone(),
            },
        )
    }

    fn reconnect(&self, a: &mut Agent) {
        match select_server(&self.servers, &self.hello(), &self.profile.server_criteria, &self.session) {
            Ok((s, d)) => {
                if let Err(e) = a.attach(s, d) {
                    warn!(error = %e, "probe failed");
                }
            }
            Err(e) => warn!(error = %e, "no edge server"),
        }
    }

    fn hello(&self) -> Hello {
        Hello {
            client_id: self.device.client_id.clone(),
            arch: self.device.arch.clone(),
            platforms: self.device.platforms.clone(),
        }
    }
}

fn outcome_flag(mode: ExecMode, o: &OffloadOutcome) -> &'static str {
    if o.result.is_empty() {
        return FLAG_FAILED;
    }
    match (mode, o.mode) {
        (_, ModeTaken::Fallback) => FLAG_FALLBACK,
        (ExecMode::Pmco, ModeTaken::Local) => FLAG_LOCAL,
        _ => FLAG_OK,
    }
}

/// Runs every (workload, mode) cell `iterations` times, one run at a time,
/// appending a row per run to `out`. Modes alternate within each
/// iteration so slow drift of the host hits every mode alike. Failed runs
/// are flagged and the suite goes on. Returns the records written.
pub fn run_suite<W: Write>(
    cfg: &BenchConfig,
    workloads: &[Workload],
    modes: &[ExecMode],
    iterations: usize,
    out: &mut csv::Writer<W>,
) -> Result<Vec<BenchRecord>, BenchError> {
    let profile = PowerProfile::from(&cfg.profile);
    let mut records = Vec::new();
    for w in workloads {
        info!(workload = %w.name, iterations, "workload");
        let mut agents: Vec<Option<Agent>> = modes
            .iter()
            .map(|mode| match mode {
                ExecMode::Local => None,
                ExecMode::LocalPmco => Some(cfg.agent(w.app(OffloadFlag::Disabled))),
                ExecMode::Pmco => Some(cfg.agent(w.app(OffloadFlag::Forced))),
            })
            .collect();
        for iter in 0..iterations {
            let iter = iter as u32;
            for (&mode, agent) in modes.iter().zip(agents.iter_mut()) {
                let rec = match (mode, agent.as_mut()) {
                    (ExecMode::Local, _) | (_, None) => run_local(cfg, w, iter, &profile),
                    (ExecMode::LocalPmco, Some(a)) => {
                        let app = a.registry().apps()[0].clone();
                        let o = a.run_candidate(&app, false);
                        from_outcome(w, mode, iter, &o, &profile)
                    }
                    (ExecMode::Pmco, Some(a)) => {
                        if !a.is_connected() {
                            cfg.reconnect(a);
                        }
                        let app = a.registry().apps()[0].clone();
                        let o = a.run_candidate(&app, true);
                        from_outcome(w, mode, iter, &o, &profile)
                    }
                };
                out.serialize(&rec)?;
                out.flush()?;
                records.push(rec);
            }
        }
        for a in agents.iter_mut().flatten() {
            a.disconnect();
        }
    }
    Ok(records)
}

fn run_local(cfg: &BenchConfig, w: &Workload, iter: u32, profile: &PowerProfile) -> BenchRecord {
    let app = w.app(OffloadFlag::Disabled);
    let benefit = benefit_eq1(&cfg.profile, &app).unwrap_or(f64::NAN);
    let t = Instant::now();
    let result = run_inline(&app.task, cfg.slowdown);
    let secs = t.elapsed().as_secs_f64();
    let times = PhaseTimes {
        compute_s: secs,
        total_s: secs,
        ..PhaseTimes::default()
    };
    let mut rec = BenchRecord::new(w, ExecMode::Local, iter, &times, profile, benefit);
    rec.result_digest = hex::encode(result);
    rec
}

fn from_outcome(
    w: &Workload,
    mode: ExecMode,
    iter: u32,
    o: &OffloadOutcome,
    profile: &PowerProfile,
) -> BenchRecord {
    let mut rec = BenchRecord::new(w, mode, iter, &o.times, profile, o.benefit_j);
    rec.bytes_up = o.bytes_up;
    rec.bytes_down = o.bytes_down;
    rec.result_digest = hex::encode(&o.result);
    rec.flag = outcome_flag(mode, o).into();
    if let Some(e) = &o.error {
        warn!(workload = %w.name, %mode, iter, error = %e, "run degraded");
    }
    rec
}

/// Row for a run driven outside the suite (e.g. a registry pass), keyed
/// by the app id. `n` is the matrix size for matmul tasks and 0 otherwise.
pub fn outcome_record(
    app: &AppPreferences,
    mode: ExecMode,
    iter: u32,
    o: &OffloadOutcome,
    profile: &GlobalPreferences,
) -> BenchRecord {
    let (n, seed) = match app.task {
        TaskSpec::Matmul { n, seed } => (n, seed),
        _ => (0, 0),
    };
    let w = Workload {
        name: app.app_id.clone(),
        n,
        seed,
    };
    from_outcome(&w, mode, iter, o, &PowerProfile::from(profile))
}

/// CSV writer with the fixed header.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(w)
}
