//! Standalone checkpoint worker; speaks the worker protocol on stdin/stdout.

fn main() {
    if let Err(e) = pmco_core::checkpoint::worker::serve_stdio() {
        eprintln!("pmco-worker: {e}");
        std::process::exit(2);
    }
}
