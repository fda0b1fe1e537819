//! Client agent: walks the preference registry, offloading candidates to
//! the cheapest admitting edge server when the energy benefit says so.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use pmco_cli::{create_csv, init_logging};
use pmco_core::bench::{outcome_record, ExecMode};
use pmco_core::checkpoint::worker::run_if_requested;
use pmco_core::checkpoint::{run_inline, Coordinator, CoordinatorOptions, Launcher};
use pmco_core::client::{
    load_servers, select_server, Agent, AgentOptions, ModeTaken, OffloadOutcome, PhaseTimes,
};
use pmco_core::decision::benefit_eq1;
use pmco_core::protocol::SessionOptions;
use pmco_core::registry::PreferenceRegistry;

#[derive(Parser, Debug)]
#[command(name = "pmco-client", version, about)]
struct Args {
    /// Preference registry file.
    #[arg(long)]
    registry: PathBuf,
    /// Edge server list.
    #[arg(long)]
    servers: PathBuf,
    /// `local` runs inline, `local-pmco` under the coordinator without
    /// offloading, `pmco` offloads when worthwhile.
    #[arg(long, default_value = "pmco")]
    mode: ExecMode,
    /// Passes over the registry.
    #[arg(long, default_value_t = 1)]
    iterations: u32,
    /// Append one CSV row per run here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute throttle for this device (1 = full speed).
    #[arg(long, default_value_t = 1.0)]
    slowdown: f64,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> anyhow::Result<()> {
    run_if_requested();
    let args = Args::parse();
    init_logging(args.verbose);
    anyhow::ensure!(args.slowdown >= 1.0, "--slowdown must be at least 1");

    let registry = PreferenceRegistry::load(&args.registry)
        .with_context(|| format!("loading {}", args.registry.display()))?;
    let servers = load_servers(&args.servers)
        .with_context(|| format!("loading {}", args.servers.display()))?;
    let global = registry.global;
    let apps = registry.apps().to_vec();
    let coordinator = Coordinator::new(
        Launcher::current_exe()?,
        CoordinatorOptions {
            slowdown: args.slowdown,
            ..CoordinatorOptions::default()
        },
    );
    let opts = AgentOptions {
        session: SessionOptions::default(),
    };
    let mut agent = Agent::new(registry, coordinator, opts.clone());
    let mut out = args.out.as_deref().map(create_csv).transpose()?;

    for iter in 0..args.iterations {
        let outcomes = match args.mode {
            ExecMode::Local => apps
                .iter()
                .map(|app| {
                    let t = Instant::now();
                    let result = run_inline(&app.task, args.slowdown);
                    let secs = t.elapsed().as_secs_f64();
                    OffloadOutcome {
                        app_id: app.app_id.clone(),
                        mode: ModeTaken::Local,
                        times: PhaseTimes {
                            compute_s: secs,
                            total_s: secs,
                            ..PhaseTimes::default()
                        },
                        bytes_up: 0,
                        bytes_down: 0,
                        benefit_j: benefit_eq1(&global, app).unwrap_or(f64::NAN),
                        threshold_j: global.b_t,
                        result,
                        error: None,
                    }
                })
                .collect(),
            ExecMode::LocalPmco => agent.run_local_loop(),
            ExecMode::Pmco => {
                if !agent.is_connected() {
                    if let Err(e) = agent.connect(&servers) {
                        tracing::warn!(error = %e, "no edge server, running locally");
                    }
                }
                if agent.is_connected() {
                    agent.run_offloading_loop()
                } else {
                    let hello = agent.hello();
                    let criteria = agent.live_preferences().server_criteria;
                    agent.run_disconnected_loop(&mut || {
                        select_server(&servers, &hello, &criteria, &opts.session).ok()
                    })
                }
            }
        };
        for o in &outcomes {
            println!(
                "{iter}\t{}\t{}\t{:.3} s\tbenefit {:.3} J\t{}",
                o.app_id,
                o.mode,
                o.times.total_s,
                o.benefit_j,
                o.error.as_deref().unwrap_or("")
            );
            if let (Some(w), Some(app)) = (out.as_mut(), apps.iter().find(|a| a.app_id == o.app_id)) {
                w.serialize(outcome_record(app, args.mode, iter, o, &global))?;
                w.flush()?;
            }
        }
    }
    agent.disconnect();
    Ok(())
}
