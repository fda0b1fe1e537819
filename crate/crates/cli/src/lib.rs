//! Shared plumbing for the `pmco-*` binaries.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use pmco_core::bench::{csv_writer, ExecMode};
use tracing_subscriber::EnvFilter;

/// Logs to stderr. `RUST_LOG` wins over `-v`.
pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

/// Parses a comma-separated mode list such as `local,pmco`.
pub fn parse_modes(list: &str) -> anyhow::Result<Vec<ExecMode>> {
    let mut modes = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = ExecMode::from_str(part)?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    anyhow::ensure!(!modes.is_empty(), "no modes given");
    Ok(modes)
}

/// Parses a comma-separated list of matrix sizes.
pub fn parse_sizes(list: &str) -> anyhow::Result<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let n: usize = p.parse().with_context(|| format!("bad size {p:?}"))?;
            anyhow::ensure!(n > 0, "size must be positive");
            Ok(n)
        })
        .collect()
}

pub fn create_csv(path: &Path) -> anyhow::Result<csv::Writer<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv_writer(f))
}
