//! Client agent: server selection, bandwidth probing, and the per-candidate
//! offloading loop with a local fallback that never drops a task.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{debug, info, warn};

use crate::checkpoint::{
    CheckpointError, CheckpointImage, Coordinator, MarkerOutcome, TaskHandle,
};
use crate::decision::{
    benefit_eq1, should_offload, AppPreferences, GlobalPreferences, MigrationType, OffloadFlag,
    ServerCriteria,
};
use crate::energy::{PhaseKind, PhaseTimeline};
use crate::kv::{Document, KvError};
use crate::protocol::{
    port_from_env, Advert, CkptMeta, Direction, ErrorReason, Hello, ProtocolError, Session,
    SessionOptions, TransferStats,
};
use crate::registry::{CandidateFilter, Cursor, PreferenceRegistry};

pub const SERVER_PREFIX: &str = "server:";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no server admitted this client: {}", .0.join("; "))]
    AllRejected(Vec<String>),
    #[error("server list parse error at {0}")]
    Parse(#[from] KvError),
    #[error("server list i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Configured candidate server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerEntry {
    pub name: String,
    pub address: String,
}

/// A candidate together with what it advertised on admission.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerDescriptor {
    pub name: String,
    pub address: String,
    pub cost: f64,
    pub s_c: f64,
    pub platforms: Vec<String>,
}

impl ServerDescriptor {
    fn new(entry: &ServerEntry, advert: &Advert) -> Self {
        Self {
            name: entry.name.clone(),
            address: entry.address.clone(),
            cost: advert.cost,
            s_c: advert.s_c,
            platforms: advert.platforms.clone(),
        }
    }
}

/// Parses a server list: one `[server:<name>]` section per candidate with
/// an `address = host[:port]` key. A missing port means the default port.
pub fn parse_servers(text: &str) -> Result<Vec<ServerEntry>, ClientError> {
    let doc = Document::parse(text)?;
    let mut out = Vec::new();
    for s in &doc.sections {
        let name = s
            .name
            .strip_prefix(SERVER_PREFIX)
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| KvError::new(s.line, format!("unknown section [{}]", s.name)))?;
        let mut r = s.reader();
        let raw: String = r.req("address")?;
        let line = r.line_of("address");
        r.finish()?;
        out.push(ServerEntry {
            name: name.to_string(),
            address: normalize_address(&raw).map_err(|m| KvError::new(line, m))?,
        });
    }
    Ok(out)
}

pub fn load_servers(path: &Path) -> Result<Vec<ServerEntry>, ClientError> {
    parse_servers(&fs::read_to_string(path)?)
}

fn normalize_address(raw: &str) -> Result<String, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.contains(char::is_whitespace) {
        return Err(format!("malformed address `{raw}`"));
    }
    match raw.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && !host.ends_with(':') => {
            port.parse::<u16>()
                .map_err(|_| format!("malformed port in `{raw}`"))?;
            Ok(raw.to_string())
        }
        Some(_) => Err(format!("malformed address `{raw}`")),
        None => Ok(format!("{raw}:{}", port_from_env())),
    }
}

/// Connects to every candidate, keeps those that admit the client and meet
/// the cost bound, and returns the cheapest (first listed on ties).
pub fn select_server(
    candidates: &[ServerEntry],
    hello: &Hello,
    criteria: &ServerCriteria,
    opts: &SessionOptions,
) -> Result<(Session, ServerDescriptor), ClientError> {
    let mut failures = Vec::new();
    let mut best: Option<(Session, ServerDescriptor)> = None;
    for entry in candidates {
        let session = match Session::connect(&entry.address, hello, opts) {
            Ok(s) => s,
            Err(e) => {
                info!(server = %entry.name, error = %e, "candidate unavailable");
                failures.push(format!("{}: {e}", entry.name));
                continue;
            }
        };
        let desc = ServerDescriptor::new(entry, session.advert());
        if criteria.max_cost.is_some_and(|max| desc.cost > max) {
            failures.push(format!("{}: cost {} over bound", entry.name, desc.cost));
            let _ = session.bye();
            continue;
        }
        match &best {
            Some((_, b)) if b.cost <= desc.cost => {
                let _ = session.bye();
            }
            _ => {
                if let Some((old, _)) = best.replace((session, desc)) {
                    let _ = old.bye();
                }
            }
        }
    }
    best.ok_or(ClientError::AllRejected(failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeTaken {
    /// Decided against offloading (or migration disabled).
    Local,
    /// Offloaded because the benefit exceeded the threshold.
    Offloaded,
    /// Offloaded because the entry is forced.
    Forced,
    /// Executed locally after a failure or without a server.
    Fallback,
}

impl std::fmt::Display for ModeTaken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeTaken::Local => "local",
            ModeTaken::Offloaded => "offloaded",
            ModeTaken::Forced => "forced",
            ModeTaken::Fallback => "fallback",
        })
    }
}

/// Device-side durations of one candidate, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub compute_s: f64,
    pub checkpoint_s: f64,
    pub upload_s: f64,
    /// Waiting for the edge: from upload acknowledgement to the first
    /// byte of the result.
    pub remote_s: f64,
    pub download_s: f64,
    pub restart_s: f64,
    pub total_s: f64,
}

impl PhaseTimes {
    pub fn timeline(&self) -> PhaseTimeline {
        let mut t = PhaseTimeline::new();
        for (kind, s) in [
            (PhaseKind::Compute, self.compute_s),
            (PhaseKind::Checkpoint, self.checkpoint_s),
            (PhaseKind::Tx, self.upload_s),
            (PhaseKind::IdleWait, self.remote_s),
            (PhaseKind::Rx, self.download_s),
            (PhaseKind::Restart, self.restart_s),
        ] {
            if s > 0.0 {
                t.push(kind, s).expect("measured durations are non-negative");
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffloadOutcome {
    pub app_id: String,
    pub mode: ModeTaken,
    pub times: PhaseTimes,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Benefit evaluated at decision time (J).
    pub benefit_j: f64,
    pub threshold_j: f64,
    /// Task result; empty when even local execution failed.
    pub result: Vec<u8>,
    /// What went wrong on the way, if anything.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct AgentOptions {
    pub session: SessionOptions,
}

pub struct Agent {
    registry: PreferenceRegistry,
    live: GlobalPreferences,
    coordinator: Coordinator,
    session: Option<Session>,
    server: Option<ServerDescriptor>,
    options: AgentOptions,
}

struct Shipped {
    result: CheckpointImage,
    up: TransferStats,
    down: TransferStats,
    remote_s: f64,
}

impl Agent {
    pub fn new(registry: PreferenceRegistry, coordinator: Coordinator, options: AgentOptions) -> Self {
        Self {
            live: registry.global,
            registry,
            coordinator,
            session: None,
            server: None,
            options,
        }
    }

    pub fn registry(&self) -> &PreferenceRegistry {
        &self.registry
    }

    /// Global preferences as currently used for decisions: registry values
    /// with bandwidths from the latest probes and the server's `s_c`.
    pub fn live_preferences(&self) -> &GlobalPreferences {
        &self.live
    }

    pub fn live_preferences_mut(&mut self) -> &mut GlobalPreferences {
        &mut self.live
    }

    pub fn is_connected(&self) -> bool {
        self.session.is_some()
    }

    pub fn server(&self) -> Option<&ServerDescriptor> {
        self.server.as_ref()
    }

    pub fn hello(&self) -> Hello {
        let d = &self.registry.device;
        Hello {
            client_id: d.client_id.clone(),
            arch: d.arch.clone(),
            platforms: d.platforms.clone(),
        }
    }

    /// Selects a server among `candidates` and probes it.
    pub fn connect(&mut self, candidates: &[ServerEntry]) -> Result<&ServerDescriptor, ClientError> {
        let (session, desc) = select_server(
            candidates,
            &self.hello(),
            &self.registry.global.server_criteria,
            &self.options.session,
        )?;
        self.attach(session, desc)?;
        Ok(self.server.as_ref().expect("just attached"))
    }

    /// Adopts an admitted session and refreshes bandwidths from probes.
    pub fn attach(&mut self, mut session: Session, desc: ServerDescriptor) -> Result<(), ClientError> {
        let up = session.probe_bandwidth(Direction::Up)?;
        let down = session.probe_bandwidth(Direction::Down)?;
        self.live.beta_u = up;
        self.live.beta_d = down;
        self.live.s_c = desc.s_c;
        info!(server = %desc.name, beta_u = up, beta_d = down, "session ready");
        self.session = Some(session);
        self.server = Some(desc);
        Ok(())
    }

    pub fn disconnect(&mut self) {
        if let Some(s) = self.session.take() {
            let _ = s.bye();
        }
        self.server = None;
    }

    /// One pass over the registry while connected. Candidates met after
    /// the session is lost run as fallback.
    pub fn run_offloading_loop(&mut self) -> Vec<OffloadOutcome> {
        let mut out = Vec::new();
        let mut cursor = Cursor::default();
        while let Some((app, next)) = self.registry.next_candidate(cursor, CandidateFilter::All) {
            cursor = next;
            let app = app.clone();
            out.push(self.run_candidate(&app, true));
        }
        out
    }

    /// One pass over the registry without a server: everything runs
    /// locally, forced entries included. After each candidate `reconnect`
    /// is polled; once it yields a session the pass stops so the
    /// connected loop can take over.
    pub fn run_disconnected_loop(
        &mut self,
        reconnect: &mut dyn FnMut() -> Option<(Session, ServerDescriptor)>,
    ) -> Vec<OffloadOutcome> {
        self.disconnect();
        let mut out = Vec::new();
        let mut cursor = Cursor::default();
        while let Some((app, next)) = self.registry.next_candidate(cursor, CandidateFilter::All) {
            cursor = next;
            let app = app.clone();
            out.push(self.run_candidate(&app, true));
            if let Some((session, desc)) = reconnect() {
                match self.attach(session, desc) {
                    Ok(()) => break,
                    Err(e) => warn!(error = %e, "reconnect failed"),
                }
            }
        }
        out
    }

    /// Runs every candidate through the coordinator without ever
    /// offloading; the baseline for migration overhead.
    pub fn run_local_loop(&mut self) -> Vec<OffloadOutcome> {
        let apps: Vec<AppPreferences> = self.registry.apps().to_vec();
        apps.iter().map(|a| self.run_candidate(a, false)).collect()
    }

    fn base_outcome(&self, app: &AppPreferences, benefit_j: f64) -> OffloadOutcome {
        OffloadOutcome {
            app_id: app.app_id.clone(),
            mode: ModeTaken::Local,
            times: PhaseTimes::default(),
            bytes_up: 0,
            bytes_down: 0,
            benefit_j,
            threshold_j: self.live.b_t,
            result: Vec::new(),
            error: None,
        }
    }

    fn decide(&self, app: &AppPreferences) -> (f64, bool) {
        let benefit = benefit_eq1(&self.live, app).unwrap_or(f64::NEG_INFINITY);
        (benefit, should_offload(benefit, self.live.b_t, app.p_f))
    }

    /// Executes one candidate. `may_offload = false` keeps it local
    /// regardless of the decision.
    pub fn run_candidate(&mut self, app: &AppPreferences, may_offload: bool) -> OffloadOutcome {
        let t0 = Instant::now();
        let connected = self.session.is_some();
        let (benefit, wanted) = self.decide(app);
        let mut out = self.base_outcome(app, benefit);
        let offload = may_offload && connected && wanted;
        let local_mode = if may_offload && !connected {
            ModeTaken::Fallback
        } else {
            ModeTaken::Local
        };
        let offload_mode = if app.p_f == OffloadFlag::Forced && benefit.partial_cmp(&self.live.b_t) != Some(std::cmp::Ordering::Greater) {
            ModeTaken::Forced
        } else {
            ModeTaken::Offloaded
        };
        debug!(app = %app.app_id, benefit, offload, "decision");

        let launched = self
            .coordinator
            .launch(&app.app_id, &app.task, app.p_t);
        let mut handle = match launched {
            Ok(h) => h,
            Err(e) => {
                out.mode = local_mode;
                out.error = Some(e.to_string());
                out.times.total_s = t0.elapsed().as_secs_f64();
                return out;
            }
        };

        // Phase 1: run up to the checkpoint, or to completion.
        let checkpoint = match app.p_t {
            MigrationType::Aware => {
                let mut decided_at = None;
                let r = handle.await_marker(|_| {
                    if decided_at.is_some() {
                        return false;
                    }
                    decided_at = Some(Instant::now());
                    offload
                });
                let done = Instant::now();
                let split = decided_at.unwrap_or(done);
                match r {
                    Ok(MarkerOutcome::Checkpoint(img)) => {
                        out.times.compute_s = (split - t0).as_secs_f64();
                        out.times.checkpoint_s = (done - split).as_secs_f64();
                        Ok(Some(img))
                    }
                    Ok(MarkerOutcome::Finished(result)) => {
                        out.times.compute_s = (done - t0).as_secs_f64();
                        out.result = result;
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            }
            MigrationType::NonAware if offload => {
                let t = Instant::now();
                match handle.signal_checkpoint() {
                    Ok(img) => {
                        let done = Instant::now();
                        out.times.compute_s = (t - t0).as_secs_f64();
                        out.times.checkpoint_s = (done - t).as_secs_f64();
                        Ok(Some(img))
                    }
                    Err(CheckpointError::TaskFinishedFirst(result)) => {
                        out.times.compute_s = t0.elapsed().as_secs_f64();
                        out.result = result;
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            }
            MigrationType::NonAware => match handle.wait() {
                Ok(c) => {
                    out.times.compute_s = t0.elapsed().as_secs_f64();
                    out.result = c.result;
                    Ok(None)
                }
                Err(e) => Err(e),
            },
        };
        // The checkpoint is acknowledged; stop the device copy before upload.
        handle.kill();
        drop(handle);

        let img = match checkpoint {
            Ok(Some(img)) => img,
            Ok(None) => {
                out.mode = local_mode;
                out.times.total_s = t0.elapsed().as_secs_f64();
                return out;
            }
            Err(e) => {
                warn!(app = %app.app_id, error = %e, "local execution failed, relaunching");
                out.error = Some(e.to_string());
                self.relaunch(app, &mut out);
                out.mode = local_mode;
                out.times.total_s = t0.elapsed().as_secs_f64();
                return out;
            }
        };

        // Phase 2: ship, wait, bring the result back.
        match self.ship(app, &img) {
            Ok(s) => {
                self.live.beta_u = s.up.throughput;
                self.live.beta_d = s.down.throughput;
                out.bytes_up = s.up.bytes;
                out.bytes_down = s.down.bytes;
                out.times.upload_s = s.up.seconds;
                out.times.download_s = s.down.seconds;
                out.times.remote_s = s.remote_s;
                let t = Instant::now();
                match self.finish_from(&s.result) {
                    Ok(result) => {
                        out.times.restart_s = t.elapsed().as_secs_f64();
                        out.result = result;
                        out.mode = offload_mode;
                    }
                    Err(e) => {
                        out.error = Some(e.to_string());
                        out.mode = ModeTaken::Fallback;
                        self.fallback_from(app, &img, &mut out);
                    }
                }
            }
            Err(e) => {
                warn!(app = %app.app_id, error = %e, "offload failed, falling back");
                out.error = Some(e.to_string());
                out.mode = ModeTaken::Fallback;
                self.fallback_from(app, &img, &mut out);
            }
        }
        out.times.total_s = t0.elapsed().as_secs_f64();
        out
    }

    fn ship(&mut self, app: &AppPreferences, img: &CheckpointImage) -> Result<Shipped, ProtocolError> {
        let session = self.session.as_mut().ok_or(ProtocolError::Closed)?;
        let interval = (app.p_t == MigrationType::NonAware).then_some(app.interval_s);
        let meta = CkptMeta::for_image(
            img.encoded_len(),
            &app.app_id,
            img.migration_aware(),
            interval,
        );
        let r: Result<Shipped, ProtocolError> = (|| {
            let up = session.send_checkpoint(&meta, img)?;
            let t = Instant::now();
            let (_, result, down) = session.recv_checkpoint()?;
            let waited = t.elapsed().as_secs_f64();
            Ok(Shipped {
                result,
                up,
                down,
                remote_s: (waited - down.seconds).max(0.0),
            })
        })();
        if let Err(e) = &r {
            let recoverable = matches!(
                e.reason(),
                Some(ErrorReason::DigestRejected | ErrorReason::RestoreFailure)
            );
            if !recoverable {
                self.session = None;
                self.server = None;
            }
        }
        r
    }

    fn finish_from(&self, img: &CheckpointImage) -> Result<Vec<u8>, CheckpointError> {
        let mut h: TaskHandle = self.coordinator.restart(img, None)?;
        Ok(h.wait()?.result)
    }

    /// Completes a task locally from its own checkpoint, or from scratch
    /// if that fails.
    fn fallback_from(&self, app: &AppPreferences, img: &CheckpointImage, out: &mut OffloadOutcome) {
        let t = Instant::now();
        match self.finish_from(img) {
            Ok(result) => {
                out.result = result;
                out.times.compute_s += t.elapsed().as_secs_f64();
            }
            Err(e) => {
                out.error = Some(e.to_string());
                self.relaunch(app, out);
            }
        }
    }

    fn relaunch(&self, app: &AppPreferences, out: &mut OffloadOutcome) {
        let t = Instant::now();
        let r = self
            .coordinator
            .launch(&app.app_id, &app.task, MigrationType::NonAware)
            .and_then(|mut h| h.wait());
        out.times.compute_s += t.elapsed().as_secs_f64();
        match r {
            Ok(c) => out.result = c.result,
            Err(e) => out.error = Some(e.to_string()),
        }
    }
}

/// Polls `candidates` until one admits the client or `timeout` expires.
pub fn wait_for_server(
    candidates: &[ServerEntry],
    hello: &Hello,
    criteria: &ServerCriteria,
    opts: &SessionOptions,
    timeout: Duration,
) -> Option<(Session, ServerDescriptor)> {
    let until = Instant::now() + timeout;
    loop {
        if let Ok(found) = select_server(candidates, hello, criteria, opts) {
            return Some(found);
        }
        if Instant::now() >= until {
            return None;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
}
