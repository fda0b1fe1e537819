#![allow(dead_code)]

use std::net::TcpStream;
use std::time::Duration;

use pmco_core::bench::desk_profile;
use pmco_core::checkpoint::{Coordinator, CoordinatorOptions, Launcher};
use pmco_core::client::{Agent, AgentOptions, ServerEntry};
use pmco_core::decision::{AppPreferences, GlobalPreferences, MigrationType, OffloadFlag};
use pmco_core::edge::{AdmissionPolicy, EdgeConfig, EdgeHandle, EdgeServer};
use pmco_core::protocol::{read_frame, write_frame, Frame, Hello, Opcode, SessionOptions};
use pmco_core::registry::{DeviceInfo, PreferenceRegistry};
use pmco_core::tasks::TaskSpec;
use sha2::{Digest, Sha256};

pub fn worker() -> Launcher {
    Launcher::program(env!("CARGO_BIN_EXE_pmco-worker"))
}

pub fn coordinator(slowdown: f64) -> Coordinator {
    Coordinator::new(
        worker(),
        CoordinatorOptions {
            slowdown,
            ..CoordinatorOptions::default()
        },
    )
}

pub fn spawn_edge(policy: AdmissionPolicy) -> EdgeHandle {
    EdgeServer::new(EdgeConfig {
        policy,
        launcher: worker(),
        coordinator: CoordinatorOptions::default(),
    })
    .unwrap()
    .spawn("127.0.0.1:0")
    .unwrap()
}

pub fn entry(name: &str, edge: &EdgeHandle) -> ServerEntry {
    ServerEntry {
        name: name.into(),
        address: edge.addr().to_string(),
    }
}

pub fn hello() -> Hello {
    let d = DeviceInfo::default();
    Hello {
        client_id: d.client_id,
        arch: d.arch,
        platforms: d.platforms,
    }
}

pub fn app(id: &str, task: TaskSpec, p_f: OffloadFlag, p_t: MigrationType) -> AppPreferences {
    AppPreferences {
        app_id: id.into(),
        i: task.approx_mi(),
        task,
        alpha: 1e6,
        gamma: 1e6,
        p_f,
        p_t,
        interval_s: 1.0,
    }
}

pub fn agent(profile: GlobalPreferences, apps: Vec<AppPreferences>, slowdown: f64) -> Agent {
    let mut reg = PreferenceRegistry::new(profile);
    for a in apps {
        reg.insert(a).unwrap();
    }
    Agent::new(
        reg,
        coordinator(slowdown),
        AgentOptions {
            session: SessionOptions::default(),
        },
    )
}

pub fn profile() -> GlobalPreferences {
    desk_profile()
}

/// Raw admitted connection speaking the wire protocol directly.
pub fn raw_admitted(edge: &EdgeHandle, client_id: &str) -> TcpStream {
    let mut s = TcpStream::connect(edge.addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    let mut h = hello();
    h.client_id = client_id.into();
    write_frame(&mut s, &Frame::json(Opcode::Hello, &h)).unwrap();
    let f = read_frame(&mut s).unwrap();
    assert_eq!(f.opcode, Opcode::AdmitOk);
    s
}

/// Matrix-product digest computed from scratch: the generator definition
/// written out again and a textbook inner-product loop.
pub fn reference_digest(n: usize, seed: u64) -> Vec<u8> {
    let mut state = seed;
    let mut draw = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / 9007199254740992.0
    };
    let a: Vec<f64> = (0..n * n).map(|_| draw()).collect();
    let b: Vec<f64> = (0..n * n).map(|_| draw()).collect();
    let mut h = Sha256::new();
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0f64;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            h.update(acc.to_le_bytes());
        }
    }
    h.finalize().to_vec()
}

/// Term-by-term benefit of offloading, evaluated without the library.
/// Returns the value and the sum of the terms' magnitudes, the scale
/// against which a signed sum's relative error is measured.
pub fn oracle_eq1(g: &GlobalPreferences, a: &AppPreferences) -> (f64, f64) {
    let terms = [
        g.e_c * a.i / g.s_m,
        -(g.e_i * a.i / g.s_c),
        -(g.e_t * a.alpha / g.beta_u),
        -(g.e_r * a.gamma / g.beta_d),
    ];
    let value = terms.iter().rev().sum();
    let scale = terms.iter().map(|t| t.abs()).sum();
    (value, scale)
}

/// `|got - want| / scale`, zero when both are exactly zero.
pub fn rel_err(got: f64, want: f64, scale: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / scale
    }
}
