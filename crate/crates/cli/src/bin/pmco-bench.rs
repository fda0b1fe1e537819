//! Benchmark harness: runs the matmul suite in the requested modes, writes
//! one CSV row per run and prints the summary tables.

use std::fs::File;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use pmco_cli::{create_csv, init_logging, parse_modes, parse_sizes};
use pmco_core::bench::{
    desk_profile, report, run_suite, suite, BenchConfig, ExecMode, Report, Workload,
    DEFAULT_ITERATIONS, DEFAULT_SEED,
};
use pmco_core::checkpoint::worker::run_if_requested;
use pmco_core::checkpoint::{CoordinatorOptions, Launcher};
use pmco_core::client::{load_servers, ServerEntry};
use pmco_core::edge::{AdmissionPolicy, EdgeConfig, EdgeServer};
use pmco_core::protocol::SessionOptions;
use pmco_core::registry::DeviceInfo;

#[derive(Parser, Debug)]
#[command(name = "pmco-bench", version, about)]
struct Args {
    /// `standard` (n = 300..1000) or `small` (n = 50, 100, 200).
    #[arg(long, default_value = "standard")]
    suite: String,
    /// Comma-separated matrix sizes; replaces the suite.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated subset of local, local-pmco, pmco.
    #[arg(long, default_value = "local,local-pmco,pmco")]
    modes: String,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Edge server list. Without it, pmco runs against an edge started
    /// inside this process on loopback.
    #[arg(long)]
    servers: Option<PathBuf>,
    /// Client compute throttle (1 = full speed).
    #[arg(long, default_value_t = 1.0)]
    slowdown: f64,
    /// Only summarize an existing CSV.
    #[arg(long, value_name = "CSV", conflicts_with_all = ["sizes", "servers"])]
    report: Option<PathBuf>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> anyhow::Result<()> {
    run_if_requested();
    let args = Args::parse();
    init_logging(args.verbose);

    if let Some(path) = &args.report {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        print!("{}", report(f)?);
        return Ok(());
    }
    anyhow::ensure!(args.slowdown >= 1.0, "--slowdown must be at least 1");
    anyhow::ensure!(args.iterations > 0, "--iterations must be positive");

    let modes = parse_modes(&args.modes)?;
    let workloads: Vec<Workload> = match &args.sizes {
        Some(list) => parse_sizes(list)?
            .into_iter()
            .map(|n| Workload::matmul(n, args.seed))
            .collect(),
        None => suite(&args.suite)?
            .into_iter()
            .map(|w| Workload::matmul(w.n, args.seed))
            .collect(),
    };
    let launcher = Launcher::current_exe()?;

    let mut local_edge = None;
    let servers = match &args.servers {
        Some(p) => load_servers(p).with_context(|| format!("loading {}", p.display()))?,
        None if modes.contains(&ExecMode::Pmco) => {
            let edge = EdgeServer::new(EdgeConfig {
                policy: AdmissionPolicy::default(),
                launcher: launcher.clone(),
                coordinator: CoordinatorOptions::default(),
            })?
            .spawn("127.0.0.1:0")?;
            let entry = ServerEntry {
                name: "loopback".into(),
                address: edge.addr().to_string(),
            };
            local_edge = Some(edge);
            vec![entry]
        }
        None => Vec::new(),
    };

    let cfg = BenchConfig {
        profile: desk_profile(),
        slowdown: args.slowdown,
        launcher,
        servers,
        session: SessionOptions::default(),
        device: DeviceInfo::default(),
    };
    let mut out = create_csv(&args.out)?;
    let records = run_suite(&cfg, &workloads, &modes, args.iterations, &mut out)?;
    out.flush()?;
    if let Some(edge) = local_edge {
        edge.shutdown();
    }
    eprintln!("wrote {} rows to {}", records.len(), args.out.display());
    print!("{}", Report::from_records(&records));
    Ok(())
}
