//! Admission policy, FIFO capacity gate and per-client service ledger.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::kv::{Document, KvError};
use crate::protocol::{ErrorReason, Hello};
use crate::registry::{DEFAULT_ARCH, DEFAULT_PLATFORM};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy parse error at {0}")]
    Parse(#[from] KvError),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("policy i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Edge admission and service policy, loaded from a `[edge]` section:
///
/// ```text
/// [edge]
/// name = edge-1
/// archs = portable
/// platforms = matmul-catalog
/// max_sessions = 4
/// quota_s = 60
/// quota_window_s = 3600
/// cost = 1
/// s_c = 2200
/// interval_s = 1
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionPolicy {
    pub name: String,
    /// Architecture tags this server can host.
    pub archs: Vec<String>,
    /// Platform tags this server supports.
    pub platforms: Vec<String>,
    pub max_sessions: usize,
    /// Service seconds each client may use per window.
    pub quota_s: f64,
    pub quota_window_s: f64,
    /// Advertised cost per service.
    pub cost: f64,
    /// Advertised compute rate (MIPS).
    pub s_c: f64,
    /// Recheckpoint interval for non-aware tasks that do not ask for one.
    pub interval_s: f64,
}

impl Default for AdmissionPolicy {
    fn default() -> Self {
        Self {
            name: "edge".into(),
            archs: vec![DEFAULT_ARCH.into()],
            platforms: vec![DEFAULT_PLATFORM.into()],
            max_sessions: 4,
            quota_s: 60.0,
            quota_window_s: 3600.0,
            cost: 1.0,
            s_c: 2200.0,
            interval_s: 1.0,
        }
    }
}

impl AdmissionPolicy {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Invalid(m.into()));
        if !(self.quota_s > 0.0) {
            return bad("quota_s must be > 0");
        }
        if !(self.quota_window_s > 0.0) {
            return bad("quota_window_s must be > 0");
        }
        if self.max_sessions < 1 {
            return bad("max_sessions must be >= 1");
        }
        if !(self.s_c > 0.0) {
            return bad("s_c must be > 0");
        }
        if !(self.cost >= 0.0) {
            return bad("cost must be >= 0");
        }
        if !(self.interval_s > 0.0) {
            return bad("interval_s must be > 0");
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let doc = Document::parse(text)?;
        if let Some(s) = doc.sections.iter().find(|s| s.name != "edge") {
            return Err(KvError::new(s.line, format!("unknown section [{}]", s.name)).into());
        }
        let section = doc
            .section("edge")
            .ok_or_else(|| KvError::new(1, "missing [edge] section"))?;
        let d = Self::default();
        let mut r = section.reader();
        let list_or = |r: &mut crate::kv::SectionReader<'_>, key: &str, dflt: Vec<String>| {
            if section.get(key).is_some() {
                r.list(key)
            } else {
                dflt
            }
        };
        let p = Self {
            name: r.opt("name")?.unwrap_or(d.name),
            archs: list_or(&mut r, "archs", d.archs),
            platforms: list_or(&mut r, "platforms", d.platforms),
            max_sessions: r.opt("max_sessions")?.unwrap_or(d.max_sessions),
            quota_s: r.opt("quota_s")?.unwrap_or(d.quota_s),
            quota_window_s: r.opt("quota_window_s")?.unwrap_or(d.quota_window_s),
            cost: r.opt("cost")?.unwrap_or(d.cost),
            s_c: r.opt("s_c")?.unwrap_or(d.s_c),
            interval_s: r.opt("interval_s")?.unwrap_or(d.interval_s),
        };
        r.finish()?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Capability check of a `HELLO`. Capacity is handled by the gate.
    pub fn check(&self, hello: &Hello) -> Result<(), (ErrorReason, String)> {
        if !self.archs.contains(&hello.arch) {
            return Err((
                ErrorReason::ArchUnsupported,
                format!("architecture `{}` cannot be hosted", hello.arch),
            ));
        }
        if let Some(missing) = hello.platforms.iter().find(|p| !self.platforms.contains(p)) {
            return Err((
                ErrorReason::PlatformUnavailable,
                format!("platform `{missing}` not supported"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct GateState {
    next_ticket: u64,
    now_serving: u64,
    active: usize,
}

/// Counting gate that admits waiters strictly in arrival order.
#[derive(Debug)]
pub struct AdmissionGate {
    max: usize,
    state: Mutex<GateState>,
    cv: Condvar,
}

/// Holds one session slot until dropped.
#[derive(Debug)]
pub struct Permit {
    gate: Arc<AdmissionGate>,
}

impl Drop for Permit {
    fn drop(&mut self) {
        let mut s = self.gate.state.lock().unwrap();
        s.active -= 1;
        self.gate.cv.notify_all();
    }
}

/// Place in the admission queue, taken at arrival.
#[derive(Debug)]
pub struct Ticket(u64);

impl AdmissionGate {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Self {
            max,
            state: Mutex::new(GateState::default()),
            cv: Condvar::new(),
        })
    }

    pub fn ticket(&self) -> Ticket {
        let mut s = self.state.lock().unwrap();
        s.next_ticket += 1;
        Ticket(s.next_ticket - 1)
    }

    /// Blocks until `ticket` is at the head of the queue and a slot is free.
    pub fn wait(self: &Arc<Self>, ticket: Ticket) -> Permit {
        let mut s = self.state.lock().unwrap();
        while !(s.now_serving == ticket.0 && s.active < self.max) {
            s = self.cv.wait(s).unwrap();
        }
        s.now_serving += 1;
        s.active += 1;
        self.cv.notify_all();
        Permit {
            gate: Arc::clone(self),
        }
    }

    pub fn acquire(self: &Arc<Self>) -> Permit {
        let t = self.ticket();
        self.wait(t)
    }

    pub fn active(&self) -> usize {
        self.state.lock().unwrap().active
    }

    pub fn waiting(&self) -> u64 {
        let s = self.state.lock().unwrap();
        s.next_ticket - s.now_serving
    }
}

#[derive(Debug, Default, Clone)]
struct ClientUsage {
    /// Total service seconds ever used; never decreases.
    total_s: f64,
    /// (request start, service seconds) for the quota window.
    requests: Vec<(Instant, f64)>,
}

/// Per-client service-time accounting.
#[derive(Debug)]
pub struct SessionLedger {
    quota: Duration,
    window: Duration,
    clients: Mutex<HashMap<String, ClientUsage>>,
}

impl SessionLedger {
    pub fn new(quota_s: f64, window_s: f64) -> Self {
        Self {
            quota: Duration::from_secs_f64(quota_s),
            window: Duration::from_secs_f64(window_s),
            clients: Mutex::new(HashMap::new()),
        }
    }

    /// Service seconds `client` used in requests started within the window.
    pub fn used_in_window(&self, client: &str, now: Instant) -> f64 {
        let clients = self.clients.lock().unwrap();
        clients
            .get(client)
            .map(|u| {
                u.requests
                    .iter()
                    .filter(|(start, _)| now.saturating_duration_since(*start) < self.window)
                    .map(|(_, s)| s)
                    .sum()
            })
            .unwrap_or(0.0)
    }

    pub fn total(&self, client: &str) -> f64 {
        self.clients
            .lock()
            .unwrap()
            .get(client)
            .map(|u| u.total_s)
            .unwrap_or(0.0)
    }

    /// Whether a request starting `now` may be served.
    pub fn may_start(&self, client: &str, now: Instant) -> bool {
        self.used_in_window(client, now) < self.quota.as_secs_f64()
    }

    pub fn record(&self, client: &str, start: Instant, seconds: f64) {
        let mut clients = self.clients.lock().unwrap();
        let u = clients.entry(client.to_string()).or_default();
        u.total_s += seconds.max(0.0);
        u.requests.push((start, seconds.max(0.0)));
        let window = self.window;
        u.requests
            .retain(|(s, _)| Instant::now().saturating_duration_since(*s) < window);
    }
}
