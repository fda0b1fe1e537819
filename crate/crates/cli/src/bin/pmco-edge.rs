//! Edge server: admits clients, restores their checkpoints, runs them to
//! the next marker (or for an interval) and ships the result back.

use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use pmco_cli::init_logging;
use pmco_core::checkpoint::worker::run_if_requested;
use pmco_core::checkpoint::{CoordinatorOptions, Launcher};
use pmco_core::edge::{AdmissionPolicy, EdgeConfig, EdgeServer};
use pmco_core::protocol::port_from_env;

#[derive(Parser, Debug)]
#[command(name = "pmco-edge", version, about)]
struct Args {
    /// Admission policy file; built-in defaults when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Listening port (default 7420, or PMCO_PORT).
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "0.0.0.0")]
    bind: String,
    /// Compute throttle for restored tasks (1 = full speed).
    #[arg(long, default_value_t = 1.0)]
    slowdown: f64,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> anyhow::Result<()> {
    run_if_requested();
    let args = Args::parse();
    init_logging(args.verbose.max(1));
    anyhow::ensure!(args.slowdown >= 1.0, "--slowdown must be at least 1");

    let policy = match &args.policy {
        Some(p) => AdmissionPolicy::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => AdmissionPolicy::default(),
    };
    let server = EdgeServer::new(EdgeConfig {
        policy,
        launcher: Launcher::current_exe()?,
        coordinator: CoordinatorOptions {
            slowdown: args.slowdown,
            ..CoordinatorOptions::default()
        },
    })?;
    let port = args.port.unwrap_or_else(port_from_env);
    let listener = TcpListener::bind((args.bind.as_str(), port))
        .with_context(|| format!("binding {}:{port}", args.bind))?;
    eprintln!("pmco-edge listening on {}", listener.local_addr()?);
    server.serve(listener)?;
    Ok(())
}
