//! Edge server: admission control and the per-session offloading service.
//!
//! Each connection gets a thread. A connection must open with `HELLO`;
//! capability mismatches are rejected at once, otherwise the connection
//! queues FIFO for one of `max_sessions` slots. An admitted session then
//! serves probes and checkpoint pushes until `BYE`, disconnect, or a quota
//! violation. Anything else sent before admission gets `ERROR
//! (not-admitted)` and never reaches the coordinator.

mod admission;

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tracing::{debug, info, warn};

pub use admission::{AdmissionGate, AdmissionPolicy, Permit, PolicyError, SessionLedger, Ticket};

use crate::checkpoint::{
    CheckpointError, CheckpointImage, Coordinator, CoordinatorOptions, Launcher, MarkerOutcome,
};
use crate::protocol::{
    ckpt_frame, decode_verified, probe_payload, read_frame, split_ckpt, write_frame, Ack, Advert,
    CkptMeta, ErrorReason, Frame, Hello, Opcode, ProbeRequest, ProtocolError, MAX_FRAME,
};

/// How long a fresh connection may take to say `HELLO`.
const HELLO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct EdgeConfig {
    pub policy: AdmissionPolicy,
    pub launcher: Launcher,
    pub coordinator: CoordinatorOptions,
}

struct Inner {
    policy: AdmissionPolicy,
    coordinator: Coordinator,
    gate: Arc<AdmissionGate>,
    ledger: SessionLedger,
    workers_spawned: AtomicU64,
    requests_served: AtomicU64,
    shutdown: AtomicBool,
}

#[derive(Clone)]
pub struct EdgeServer {
    inner: Arc<Inner>,
}

enum Flow {
    Continue,
    Close,
}

impl EdgeServer {
    pub fn new(cfg: EdgeConfig) -> Result<Self, PolicyError> {
        cfg.policy.validate()?;
        Ok(Self {
            inner: Arc::new(Inner {
                gate: AdmissionGate::new(cfg.policy.max_sessions),
                ledger: SessionLedger::new(cfg.policy.quota_s, cfg.policy.quota_window_s),
                coordinator: Coordinator::new(cfg.launcher, cfg.coordinator),
                policy: cfg.policy,
                workers_spawned: AtomicU64::new(0),
                requests_served: AtomicU64::new(0),
                shutdown: AtomicBool::new(false),
            }),
        })
    }

    pub fn policy(&self) -> &AdmissionPolicy {
        &self.inner.policy
    }

    pub fn ledger(&self) -> &SessionLedger {
        &self.inner.ledger
    }

    pub fn gate(&self) -> &Arc<AdmissionGate> {
        &self.inner.gate
    }

    /// Workers started on behalf of clients since startup.
    pub fn workers_spawned(&self) -> u64 {
        self.inner.workers_spawned.load(Ordering::SeqCst)
    }

    pub fn requests_served(&self) -> u64 {
        self.inner.requests_served.load(Ordering::SeqCst)
    }

    /// Accept loop; returns after [`EdgeHandle::shutdown`].
    pub fn serve(&self, listener: TcpListener) -> io::Result<()> {
        info!(addr = %listener.local_addr()?, name = %self.inner.policy.name, "edge listening");
        for conn in listener.incoming() {
            if self.inner.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!(error = %e, "accept failed");
                    continue;
                }
            };
            let server = self.clone();
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = server.handle_connection(stream) {
                    debug!(?peer, error = %e, "session ended with error");
                }
            });
        }
        Ok(())
    }

    /// Binds `addr` and serves on a background thread.
    pub fn spawn<A: ToSocketAddrs>(self, addr: A) -> io::Result<EdgeHandle> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let server = self.clone();
        let join = thread::spawn(move || server.serve(listener));
        Ok(EdgeHandle {
            addr: local,
            server: self,
            join: Some(join),
        })
    }

    fn handle_connection(&self, mut stream: TcpStream) -> Result<(), ProtocolError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(HELLO_TIMEOUT))?;
        let first = read_frame(&mut stream)?;
        if first.opcode != Opcode::Hello {
            warn!(opcode = %first.opcode, "frame before admission");
            write_frame(
                &mut stream,
                &Frame::error(ErrorReason::NotAdmitted, "send HELLO first"),
            )?;
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(());
        }
        let hello: Hello = match first.parse_json() {
            Ok(h) => h,
            Err(e) => {
                write_frame(
                    &mut stream,
                    &Frame::error(ErrorReason::ProtocolViolation, e.to_string()),
                )?;
                return Ok(());
            }
        };
        if let Err((reason, detail)) = self.inner.policy.check(&hello) {
            info!(client = %hello.client_id, %reason, "admission rejected");
            write_frame(
                &mut stream,
                &Frame::json(Opcode::AdmitReject, &crate::protocol::ErrorBody { reason, detail }),
            )?;
            return Ok(());
        }
        let permit = self.inner.gate.acquire();
        stream.set_read_timeout(None)?;
        let p = &self.inner.policy;
        let advert = Advert {
            server: p.name.clone(),
            cost: p.cost,
            s_c: p.s_c,
            platforms: p.platforms.clone(),
            quota_s: p.quota_s,
        };
        write_frame(&mut stream, &Frame::json(Opcode::AdmitOk, &advert))?;
        info!(client = %hello.client_id, "admitted");
        let result = self.serve_session(&hello.client_id, &mut stream);
        drop(permit);
        result
    }

    fn serve_session(&self, client: &str, stream: &mut TcpStream) -> Result<(), ProtocolError> {
        loop {
            let frame = match read_frame(stream) {
                Ok(f) => f,
                Err(ProtocolError::Closed) => return Ok(()),
                Err(e) => return Err(e),
            };
            match frame.opcode {
                Opcode::ProbeUp => {
                    let ack = Ack {
                        bytes: frame.payload.len() as u64,
                        digest: None,
                    };
                    write_frame(stream, &Frame::json(Opcode::ProbeAck, &ack))?;
                }
                Opcode::ProbeDown => {
                    let req: ProbeRequest = match frame.parse_json() {
                        Ok(r) => r,
                        Err(e) => {
                            violation(stream, e.to_string())?;
                            continue;
                        }
                    };
                    if req.size > MAX_FRAME as u64 {
                        violation(stream, format!("probe of {} bytes too large", req.size))?;
                        continue;
                    }
                    write_frame(
                        stream,
                        &Frame::new(Opcode::ProbeDown, probe_payload(req.size as usize)),
                    )?;
                }
                // The client's receipt for a download probe.
                Opcode::ProbeAck => {}
                Opcode::CkptPush => {
                    if let Flow::Close = self.serve_push(client, &frame, stream)? {
                        let _ = stream.shutdown(Shutdown::Both);
                        return Ok(());
                    }
                }
                Opcode::Bye => return Ok(()),
                other => violation(stream, format!("unexpected {other} in session"))?,
            }
        }
    }

    fn serve_push(
        &self,
        client: &str,
        frame: &Frame,
        stream: &mut TcpStream,
    ) -> Result<Flow, ProtocolError> {
        let start = Instant::now();
        if !self.inner.ledger.may_start(client, start) {
            info!(client, "quota exceeded");
            let used = self.inner.ledger.used_in_window(client, start);
            write_frame(
                stream,
                &Frame::error(
                    ErrorReason::QuotaExceeded,
                    format!("{used:.3} s used of {} s quota", self.inner.policy.quota_s),
                ),
            )?;
            return Ok(Flow::Close);
        }
        let (meta, image) = match split_ckpt(&frame.payload) {
            Ok(v) => v,
            Err(e) => {
                violation(stream, e.to_string())?;
                return Ok(Flow::Continue);
            }
        };
        let img = match decode_verified(image) {
            Ok(img) => img,
            Err(e) => {
                write_frame(stream, &Frame::error(ErrorReason::DigestRejected, e.to_string()))?;
                return Ok(Flow::Continue);
            }
        };
        let ack = Ack {
            bytes: image.len() as u64,
            digest: Some(img.meta.state_digest.clone()),
        };
        write_frame(stream, &Frame::json(Opcode::ProbeAck, &ack))?;

        let interval = meta.interval_s.unwrap_or(self.inner.policy.interval_s);
        let result = match self.execute(&img, interval) {
            Ok(r) => r,
            Err(e) => {
                warn!(client, app = %meta.app_id, error = %e, "restart failed");
                write_frame(stream, &Frame::error(ErrorReason::RestoreFailure, e.to_string()))?;
                return Ok(Flow::Continue);
            }
        };
        let service = start.elapsed().as_secs_f64();
        self.inner.ledger.record(client, start, service);
        self.inner.requests_served.fetch_add(1, Ordering::SeqCst);
        let bytes = result.encode();
        let out_meta = CkptMeta::for_image(
            bytes.len(),
            &meta.app_id,
            result.migration_aware(),
            meta.interval_s,
        );
        debug!(client, app = %meta.app_id, service, marker = result.meta.marker_id, "result ready");
        write_frame(stream, &ckpt_frame(Opcode::CkptResult, &out_meta, &bytes))?;
        Ok(Flow::Continue)
    }

    /// Restarts the image and returns the image that hands control back:
    /// the next marker's checkpoint for aware tasks, the final image for
    /// non-aware ones (recheckpointed on `interval_s` while running).
    fn execute(&self, img: &CheckpointImage, interval_s: f64) -> Result<CheckpointImage, CheckpointError> {
        self.inner.workers_spawned.fetch_add(1, Ordering::SeqCst);
        let coord = &self.inner.coordinator;
        if img.migration_aware() {
            let mut handle = coord.restart(img, None)?;
            match handle.await_marker(|_| true)? {
                MarkerOutcome::Checkpoint(out) => {
                    handle.kill();
                    Ok(out)
                }
                MarkerOutcome::Finished(result) => Ok(handle.finished_image(&result)),
            }
        } else {
            let interval = Duration::from_secs_f64(interval_s);
            let mut handle = coord.restart(img, Some(interval))?;
            Ok(handle.wait()?.final_image)
        }
    }
}

fn violation(stream: &mut TcpStream, detail: String) -> Result<(), ProtocolError> {
    write_frame(stream, &Frame::error(ErrorReason::ProtocolViolation, detail))
}

/// A server running on a background thread.
pub struct EdgeHandle {
    addr: SocketAddr,
    server: EdgeServer,
    join: Option<JoinHandle<io::Result<()>>>,
}

impl EdgeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn server(&self) -> &EdgeServer {
        &self.server
    }

    /// Stops accepting connections. Sessions in progress run to their end.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.inner.shutdown.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for EdgeHandle {
    fn drop(&mut self) {
        if self.join.is_some() {
            self.stop();
        }
    }
}
