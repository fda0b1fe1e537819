use std::fs;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

const CLIENT: &str = env!("CARGO_BIN_EXE_pmco-client");
const EDGE: &str = env!("CARGO_BIN_EXE_pmco-edge");
const BENCH: &str = env!("CARGO_BIN_EXE_pmco-bench");

const HEADER: &str = "workload,mode,iter,n,t_total_s,t_compute_s,t_ckpt_s,t_up_s,t_remote_s,t_down_s,t_restart_s,bytes_up,bytes_down,e_total_j,e_ckpt_j,e_restart_j,e_tx_j,e_rx_j,benefit_j,result_digest,flag";

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let body = fs::read_to_string(path).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Edge(Child);

impl Drop for Edge {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_edge(port: u16, policy: &Path) -> Edge {
    let child = Command::new(EDGE)
        .args(["--policy", policy.to_str().unwrap(), "--bind", "127.0.0.1"])
        .args(["--port", &port.to_string()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let edge = Edge(child);
    let t = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(t.elapsed() < Duration::from_secs(10), "edge did not come up");
        thread::sleep(Duration::from_millis(20));
    }
    edge
}

const REGISTRY: &str = "\
[global]
e_c = 0.6
s_m = 600
s_c = 2200
beta_u = 1000000
beta_d = 2000000

[app:forced]
task = matmul n=60 seed=42
alpha = 57600
gamma = 28800
p_f = forced

[app:kept]
task = matmul n=40 seed=42
alpha = 25600
gamma = 12800
p_f = disabled
";

#[test]
fn bench_writes_rows_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = run(
        BENCH,
        &["--sizes", "30,40", "--iterations", "2", "--out", csv.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = rows(&csv);
    assert_eq!(rows.len(), 2 * 3 * 2);
    assert!(rows.iter().all(|r| r[20] == "ok"), "{rows:?}");
    for n in ["30", "40"] {
        let digests: Vec<_> = rows.iter().filter(|r| r[3] == n).map(|r| &r[19]).collect();
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
    }
    let shown = text(&out.stdout);
    assert!(shown.contains("matmul30") && shown.contains("local-pmco"), "{shown}");

    let again = run(BENCH, &["--report", csv.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(text(&again.stdout), shown);
}

#[test]
fn bench_rejects_bad_arguments() {
    assert!(!run(BENCH, &["--modes", "warp"]).status.success());
    assert!(!run(BENCH, &["--suite", "huge"]).status.success());
    assert!(!run(BENCH, &["--report", "/nonexistent/r.csv"]).status.success());
}

#[test]
fn client_offloads_through_a_running_edge() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let policy = dir.path().join("edge.ini");
    fs::write(&policy, "[edge]\nname = t\nmax_sessions = 2\n").unwrap();
    let _edge = start_edge(port, &policy);

    let registry = dir.path().join("registry.ini");
    let servers = dir.path().join("servers.ini");
    let csv = dir.path().join("c.csv");
    fs::write(&registry, REGISTRY).unwrap();
    fs::write(&servers, format!("[server:t]\naddress = 127.0.0.1:{port}\n")).unwrap();
    let out = run(
        CLIENT,
        &[
            "--registry", registry.to_str().unwrap(),
            "--servers", servers.to_str().unwrap(),
            "--iterations", "2",
            "--out", csv.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = rows(&csv);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[1], "pmco");
        let up: u64 = r[11].parse().unwrap();
        if r[0] == "forced" {
            assert_eq!(r[20], "ok", "{r:?}");
            assert!(up > 0);
        } else {
            // pmco run that stayed on the device
            assert_eq!(r[20], "local", "{r:?}");
            assert_eq!(up, 0);
        }
    }
    let stdout = text(&out.stdout);
    assert!(stdout.contains("forced\tforced") && stdout.contains("kept\tlocal"), "{stdout}");
}

#[test]
fn client_without_a_server_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry.ini");
    let servers = dir.path().join("servers.ini");
    let csv = dir.path().join("c.csv");
    fs::write(&registry, REGISTRY).unwrap();
    fs::write(&servers, format!("[server:gone]\naddress = 127.0.0.1:{}\n", free_port())).unwrap();
    let out = run(
        CLIENT,
        &[
            "--registry", registry.to_str().unwrap(),
            "--servers", servers.to_str().unwrap(),
            "--out", csv.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[20] == "fallback"), "{rows:?}");
    assert_eq!(rows[0][19], rows_digest_of(&dir, 60));
}

/// Digest of the same task computed by the client in `local` mode.
fn rows_digest_of(dir: &tempfile::TempDir, n: usize) -> String {
    let registry = dir.path().join(format!("one{n}.ini"));
    let servers = dir.path().join("none.ini");
    let csv = dir.path().join(format!("one{n}.csv"));
    fs::write(
        &registry,
        format!("[global]\ne_c = 0.6\ns_m = 600\ns_c = 2200\nbeta_u = 1\nbeta_d = 1\n\n[app:x]\ntask = matmul n={n} seed=42\nalpha = 1\ngamma = 1\n"),
    )
    .unwrap();
    fs::write(&servers, "").unwrap();
    let out = run(
        CLIENT,
        &[
            "--registry", registry.to_str().unwrap(),
            "--servers", servers.to_str().unwrap(),
            "--mode", "local",
            "--out", csv.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    rows(&csv).remove(0)[19].clone()
}

#[test]
fn client_reports_missing_files() {
    let out = run(CLIENT, &["--registry", "/nonexistent.ini", "--servers", "/nonexistent.ini"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("nonexistent"));
}
