//! Checkpoint/restart runtime.
//!
//! The [`Coordinator`] launches catalog tasks as supervised workers, takes
//! checkpoints either when a migration-aware task reaches a marker or when
//! signaled (non-aware tasks), and restarts workers from images. It keeps no
//! durable state: images exist only where callers put them, and dropping a
//! [`TaskHandle`] kills its worker.
//!
//! Workers are separate processes by default ([`Launcher::Process`]). The
//! thread launcher runs the same worker protocol over a socket pair inside
//! the current process, which is handy for tests and benchmarks.

pub mod image;
pub mod ipc;
pub mod worker;

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::os::unix::net::UnixStream;
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::decision::MigrationType;
use crate::tasks::{TaskError, TaskSpec};
pub use image::{CheckpointImage, Compression, ImageError, ImageMeta, Snapshot, SnapshotPhase};
pub use worker::run_inline;
use ipc::{AfterCheckpoint, Control, Event, Restore, StartSpec};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    UnknownTask(#[from] TaskError),
    #[error("failed to spawn worker: {0}")]
    Spawn(io::Error),
    #[error("task finished before the checkpoint was taken")]
    TaskFinishedFirst(Vec<u8>),
    #[error("worker did not answer within {0:?}")]
    WorkerUnresponsive(Duration),
    #[error("task is already checkpointed")]
    AlreadyCheckpointed,
    #[error("operation needs a running task, status is {0:?}")]
    NotRunning(TaskStatus),
    #[error("operation not valid for {0} tasks")]
    WrongMode(MigrationType),
    #[error("worker crashed: {0}")]
    WorkerCrash(String),
    #[error("restore failed: {0}")]
    RestoreFailure(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("control channel: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Running,
    Checkpointed,
    Finished,
    Killed,
}

#[derive(Debug, Clone)]
pub enum Launcher {
    /// Spawn `program args...`; the program must serve the worker protocol
    /// on stdin/stdout (see [`worker::run_if_requested`]).
    Process { program: PathBuf, args: Vec<String> },
    /// Run workers on threads of this process.
    Thread,
}

impl Launcher {
    /// Re-executes the current binary in worker mode.
    pub fn current_exe() -> io::Result<Self> {
        Ok(Launcher::Process {
            program: std::env::current_exe()?,
            args: vec![worker::WORKER_ARG.to_string()],
        })
    }

    /// A dedicated worker binary that needs no arguments.
    pub fn program(path: impl Into<PathBuf>) -> Self {
        Launcher::Process {
            program: path.into(),
            args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinatorOptions {
    /// Compute throttle applied to workers (1.0 = full speed).
    pub slowdown: f64,
    pub compression: Compression,
    /// How long a signaled checkpoint may take before the worker is declared
    /// unresponsive.
    pub signal_timeout: Duration,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        Self {
            slowdown: 1.0,
            compression: Compression::Adaptive(image::DEFAULT_GZIP_LEVEL),
            signal_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Coordinator {
    launcher: Launcher,
    options: CoordinatorOptions,
}

/// Result of [`TaskHandle::await_marker`].
#[derive(Debug)]
pub enum MarkerOutcome {
    Checkpoint(CheckpointImage),
    Finished(Vec<u8>),
}

/// Result of running a task to completion with [`TaskHandle::wait`].
#[derive(Debug)]
pub struct Completion {
    pub result: Vec<u8>,
    /// Images taken on interval signals during the run.
    pub interval_images: u32,
    /// Image of the finished task; restarting it yields `result` at once.
    /// For interval runs this is the latest image.
    pub final_image: CheckpointImage,
}

enum Worker {
    Process {
        child: Child,
        stderr: Arc<Mutex<Vec<u8>>>,
    },
    Thread {
        socket: UnixStream,
        panic: Arc<Mutex<Option<String>>>,
        join: Option<JoinHandle<()>>,
    },
}

enum Incoming {
    Event(Event),
    Closed(Option<String>),
}

pub struct TaskHandle {
    app_id: String,
    task: TaskSpec,
    mode: MigrationType,
    status: TaskStatus,
    interval: Option<Duration>,
    compression: Compression,
    signal_timeout: Duration,
    worker: Worker,
    control: Option<Box<dyn Write + Send>>,
    events: Receiver<Incoming>,
    last_marker: u32,
}

impl Coordinator {
    pub fn new(launcher: Launcher, options: CoordinatorOptions) -> Self {
        Self { launcher, options }
    }

    pub fn options(&self) -> &CoordinatorOptions {
        &self.options
    }

    pub fn launcher(&self) -> &Launcher {
        &self.launcher
    }

    /// Launches a catalog entry given in textual form (`matmul n=300 seed=1`).
    pub fn launch_entry(
        &self,
        app_id: &str,
        entry: &str,
        mode: MigrationType,
    ) -> Result<TaskHandle, CheckpointError> {
        let task: TaskSpec = entry.parse()?;
        self.launch(app_id, &task, mode)
    }

    pub fn launch(
        &self,
        app_id: &str,
        task: &TaskSpec,
        mode: MigrationType,
    ) -> Result<TaskHandle, CheckpointError> {
        self.start(app_id, task, mode, None, None, 0)
    }

    /// Restarts a task from an image. Non-aware images restarted with an
    /// `interval` are re-checkpointed every `interval` while they run.
    pub fn restart(
        &self,
        img: &CheckpointImage,
        interval: Option<Duration>,
    ) -> Result<TaskHandle, CheckpointError> {
        let snap = img.snapshot()?;
        let mode = if img.migration_aware() {
            MigrationType::Aware
        } else {
            MigrationType::NonAware
        };
        let restore = match snap.phase {
            SnapshotPhase::Running => Restore::Running(snap.body),
            SnapshotPhase::Finished => Restore::Finished {
                marker: snap.marker,
                result: snap.body,
            },
        };
        let interval = match mode {
            MigrationType::NonAware => interval.filter(|d| !d.is_zero()),
            MigrationType::Aware => None,
        };
        self.start(
            &img.meta.app_id,
            &snap.task,
            mode,
            Some(restore),
            interval,
            snap.marker,
        )
    }

    fn start(
        &self,
        app_id: &str,
        task: &TaskSpec,
        mode: MigrationType,
        restore: Option<Restore>,
        interval: Option<Duration>,
        marker: u32,
    ) -> Result<TaskHandle, CheckpointError> {
        let spec = StartSpec {
            task: task.clone(),
            aware: mode == MigrationType::Aware,
            slowdown: self.options.slowdown,
            restore,
        };
        let (tx, rx) = mpsc::channel();
        let (worker, mut control): (Worker, Box<dyn Write + Send>) = match &self.launcher {
            Launcher::Process { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::piped())
                    .spawn()
                    .map_err(CheckpointError::Spawn)?;
                let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let mut stderr_pipe = child.stderr.take().expect("piped stderr");
                let stderr = Arc::new(Mutex::new(Vec::new()));
                let sink = Arc::clone(&stderr);
                thread::spawn(move || {
                    let mut buf = [0u8; 4096];
                    while let Ok(n) = stderr_pipe.read(&mut buf) {
                        if n == 0 {
                            break;
                        }
                        let mut s = sink.lock().unwrap();
                        if s.len() < 64 * 1024 {
                            s.extend_from_slice(&buf[..n]);
                        }
                    }
                });
                pump_events(BufReader::with_capacity(1 << 16, stdout), tx);
                (
                    Worker::Process { child, stderr },
                    Box::new(BufWriter::new(stdin)),
                )
            }
            Launcher::Thread => {
                let (ours, theirs) = UnixStream::pair().map_err(CheckpointError::Spawn)?;
                let panic = Arc::new(Mutex::new(None));
                let panic_slot = Arc::clone(&panic);
                let worker_events = theirs.try_clone().map_err(CheckpointError::Spawn)?;
                // The worker's control reader holds its own handle; shutting
                // the socket down is what lets both sides see EOF.
                let closer = theirs.try_clone().map_err(CheckpointError::Spawn)?;
                let join = thread::Builder::new()
                    .name(format!("pmco-worker-{app_id}"))
                    .spawn(move || {
                        let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                            worker::serve(theirs, worker_events)
                        }));
                        if let Err(payload) = run {
                            let msg = payload
                                .downcast_ref::<String>()
                                .cloned()
                                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                                .unwrap_or_else(|| "worker panicked".into());
                            *panic_slot.lock().unwrap() = Some(msg);
                        }
                        let _ = closer.shutdown(std::net::Shutdown::Both);
                    })
                    .map_err(CheckpointError::Spawn)?;
                let reader = ours.try_clone().map_err(CheckpointError::Spawn)?;
                pump_events(BufReader::with_capacity(1 << 16, reader), tx);
                let writer = ours.try_clone().map_err(CheckpointError::Spawn)?;
                (
                    Worker::Thread {
                        socket: ours,
                        panic,
                        join: Some(join),
                    },
                    Box::new(BufWriter::new(writer)),
                )
            }
        };
        ipc::write_control(&mut control, &Control::Start(spec))?;
        Ok(TaskHandle {
            app_id: app_id.to_string(),
            task: task.clone(),
            mode,
            status: TaskStatus::Running,
            interval,
            compression: self.options.compression,
            signal_timeout: self.options.signal_timeout,
            worker,
            control: Some(control),
            events: rx,
            last_marker: marker,
        })
    }
}

fn pump_events<R: Read + Send + 'static>(mut reader: R, tx: mpsc::Sender<Incoming>) {
    thread::spawn(move || loop {
        match ipc::read_event(&mut reader) {
            Ok(Some(ev)) => {
                if tx.send(Incoming::Event(ev)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Incoming::Closed(None));
                return;
            }
            Err(e) => {
                let _ = tx.send(Incoming::Closed(Some(e.to_string())));
                return;
            }
        }
    });
}

impl TaskHandle {
    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn mode(&self) -> MigrationType {
        self.mode
    }

    pub fn status(&self) -> TaskStatus {
        self.status
    }

    /// OS process id for process workers.
    pub fn pid(&self) -> Option<u32> {
        match &self.worker {
            Worker::Process { child, .. } => Some(child.id()),
            Worker::Thread { .. } => None,
        }
    }

    fn send(&mut self, msg: &Control) {
        // A worker that already exited closes its end; its last events are
        // still queued, so write failures are not errors here.
        if let Some(c) = self.control.as_mut() {
            if ipc::write_control(c, msg).is_err() {
                self.control = None;
            }
        }
    }

    fn seal(&self, marker: u32, state: Vec<u8>) -> CheckpointImage {
        let snap = Snapshot::running(self.task.clone(), marker, state);
        CheckpointImage::seal_snapshot(
            &self.app_id,
            self.mode == MigrationType::Aware,
            &snap,
            self.compression,
        )
    }

    /// Image of this task in its finished state; restarting it yields
    /// `result` without recomputation.
    pub fn finished_image(&self, result: &[u8]) -> CheckpointImage {
        self.seal_finished(self.last_marker, result)
    }

    fn seal_finished(&self, marker: u32, result: &[u8]) -> CheckpointImage {
        let snap = Snapshot::finished(self.task.clone(), marker, result.to_vec());
        CheckpointImage::seal_snapshot(
            &self.app_id,
            self.mode == MigrationType::Aware,
            &snap,
            self.compression,
        )
    }

    fn crash_report(&mut self, detail: Option<String>) -> String {
        let mut parts = Vec::new();
        if let Some(d) = detail {
            parts.push(d);
        }
        match &mut self.worker {
            Worker::Process { child, stderr } => {
                let status: Option<ExitStatus> = wait_briefly(child);
                match status {
                    Some(s) => parts.push(format!("exit status: {s}")),
                    None => parts.push("worker closed its channel".into()),
                }
                // Give the stderr pump a moment to drain.
                thread::sleep(Duration::from_millis(20));
                let err = stderr.lock().unwrap();
                let text = String::from_utf8_lossy(&err);
                let text = text.trim();
                if !text.is_empty() {
                    parts.push(format!("stderr: {text}"));
                }
            }
            Worker::Thread { panic, join, .. } => {
                if let Some(j) = join.take() {
                    let _ = j.join();
                }
                match panic.lock().unwrap().take() {
                    Some(msg) => parts.push(format!("panicked: {msg}")),
                    None => parts.push("worker closed its channel".into()),
                }
            }
        }
        parts.join("; ")
    }

    fn next_event(&mut self, deadline: Option<Instant>) -> Result<Event, CheckpointError> {
        let incoming = match deadline {
            None => self.events.recv().unwrap_or(Incoming::Closed(None)),
            Some(d) => {
                let wait = d.saturating_duration_since(Instant::now());
                match self.events.recv_timeout(wait) {
                    Ok(m) => m,
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(CheckpointError::WorkerUnresponsive(self.signal_timeout))
                    }
                    Err(RecvTimeoutError::Disconnected) => Incoming::Closed(None),
                }
            }
        };
        match incoming {
            Incoming::Event(Event::Failed(msg)) => {
                self.status = TaskStatus::Killed;
                self.terminate();
                Err(CheckpointError::RestoreFailure(msg))
            }
            Incoming::Event(ev) => Ok(ev),
            Incoming::Closed(detail) => {
                self.status = TaskStatus::Killed;
                let report = self.crash_report(detail);
                Err(CheckpointError::WorkerCrash(report))
            }
        }
    }

    fn ensure_running(&self) -> Result<(), CheckpointError> {
        match self.status {
            TaskStatus::Running => Ok(()),
            TaskStatus::Checkpointed => Err(CheckpointError::AlreadyCheckpointed),
            s => Err(CheckpointError::NotRunning(s)),
        }
    }

    fn finished(&mut self, marker: u32) {
        self.last_marker = marker;
        self.status = TaskStatus::Finished;
        self.reap();
    }

    /// Asks a non-aware task to checkpoint at its next safe point. The worker
    /// pauses afterwards; the caller normally kills it next.
    pub fn signal_checkpoint(&mut self) -> Result<CheckpointImage, CheckpointError> {
        self.ensure_running()?;
        if self.mode != MigrationType::NonAware {
            return Err(CheckpointError::WrongMode(self.mode));
        }
        self.send(&Control::Checkpoint(AfterCheckpoint::Pause));
        let deadline = Instant::now() + self.signal_timeout;
        loop {
            match self.next_event(Some(deadline))? {
                Event::Checkpointed { marker, state } => {
                    self.last_marker = marker;
                    self.status = TaskStatus::Checkpointed;
                    return Ok(self.seal(marker, state));
                }
                Event::Finished { marker, result } => {
                    self.finished(marker);
                    return Err(CheckpointError::TaskFinishedFirst(result));
                }
                Event::Marker(_) | Event::Failed(_) => {}
            }
        }
    }

    /// Runs a migration-aware task to its next marker where `decide` returns
    /// true, checkpointing it there, or to completion. Markers where `decide`
    /// returns false are passed.
    pub fn await_marker(
        &mut self,
        mut decide: impl FnMut(u32) -> bool,
    ) -> Result<MarkerOutcome, CheckpointError> {
        self.ensure_running()?;
        if self.mode != MigrationType::Aware {
            return Err(CheckpointError::WrongMode(self.mode));
        }
        loop {
            match self.next_event(None)? {
                Event::Marker(m) => {
                    self.last_marker = m;
                    if decide(m) {
                        self.send(&Control::Checkpoint(AfterCheckpoint::Pause));
                    } else {
                        self.send(&Control::Continue);
                    }
                }
                Event::Checkpointed { marker, state } => {
                    self.last_marker = marker;
                    self.status = TaskStatus::Checkpointed;
                    return Ok(MarkerOutcome::Checkpoint(self.seal(marker, state)));
                }
                Event::Finished { marker, result } => {
                    self.finished(marker);
                    return Ok(MarkerOutcome::Finished(result));
                }
                Event::Failed(_) => {}
            }
        }
    }

    /// Runs the task to completion, passing every marker. Handles restarted
    /// with an interval are re-checkpointed on schedule; only the latest
    /// image is kept.
    pub fn wait(&mut self) -> Result<Completion, CheckpointError> {
        self.ensure_running()?;
        let start = Instant::now();
        let mut ticks = 0u32;
        let mut images = 0u32;
        let mut latest: Option<CheckpointImage> = None;
        loop {
            let deadline = self.interval.map(|iv| start + iv * (ticks + 1));
            let ev = match deadline {
                None => self.next_event(None)?,
                Some(d) => match self.events.recv_timeout(d.saturating_duration_since(Instant::now())) {
                    Err(RecvTimeoutError::Timeout) => {
                        ticks += 1;
                        self.send(&Control::Checkpoint(AfterCheckpoint::Continue));
                        continue;
                    }
                    Ok(Incoming::Event(Event::Failed(msg))) => {
                        self.status = TaskStatus::Killed;
                        self.terminate();
                        return Err(CheckpointError::RestoreFailure(msg));
                    }
                    Ok(Incoming::Event(ev)) => ev,
                    Ok(Incoming::Closed(detail)) => {
                        self.status = TaskStatus::Killed;
                        let report = self.crash_report(detail);
                        return Err(CheckpointError::WorkerCrash(report));
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        self.status = TaskStatus::Killed;
                        let report = self.crash_report(None);
                        return Err(CheckpointError::WorkerCrash(report));
                    }
                },
            };
            match ev {
                Event::Marker(m) => {
                    self.last_marker = m;
                    self.send(&Control::Continue);
                }
                Event::Checkpointed { marker, state } => {
                    images += 1;
                    latest = Some(self.seal(marker, state));
                }
                Event::Finished { marker, result } => {
                    self.finished(marker);
                    drop(latest);
                    let final_image = self.seal_finished(marker, &result);
                    return Ok(Completion {
                        result,
                        interval_images: images,
                        final_image,
                    });
                }
                Event::Failed(_) => {}
            }
        }
    }

    /// Lets a task paused after a checkpoint run on.
    pub fn resume(&mut self) -> Result<(), CheckpointError> {
        if self.status != TaskStatus::Checkpointed {
            return Err(CheckpointError::NotRunning(self.status));
        }
        self.send(&Control::Continue);
        self.status = TaskStatus::Running;
        Ok(())
    }

    /// Terminates the worker. Idempotent; a no-op for finished tasks.
    pub fn kill(&mut self) {
        if matches!(self.status, TaskStatus::Finished | TaskStatus::Killed) {
            return;
        }
        self.terminate();
        self.status = TaskStatus::Killed;
    }

    fn terminate(&mut self) {
        self.send(&Control::Kill);
        self.control = None;
        match &mut self.worker {
            Worker::Process { child, .. } => {
                let _ = child.kill();
                let _ = child.wait();
            }
            Worker::Thread { socket, join, .. } => {
                let _ = socket.shutdown(std::net::Shutdown::Both);
                if let Some(j) = join.take() {
                    let _ = j.join();
                }
            }
        }
    }

    fn reap(&mut self) {
        self.control = None;
        match &mut self.worker {
            Worker::Process { child, .. } => {
                let _ = child.wait();
            }
            Worker::Thread { join, .. } => {
                if let Some(j) = join.take() {
                    let _ = j.join();
                }
            }
        }
    }
}

fn wait_briefly(child: &mut Child) -> Option<ExitStatus> {
    let until = Instant::now() + Duration::from_secs(2);
    loop {
        match child.try_wait() {
            Ok(Some(s)) => return Some(s),
            Ok(None) if Instant::now() < until => thread::sleep(Duration::from_millis(5)),
            _ => return None,
        }
    }
}

impl Drop for TaskHandle {
    fn drop(&mut self) {
        if !matches!(self.status, TaskStatus::Finished | TaskStatus::Killed) {
            self.terminate();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord() -> Coordinator {
        Coordinator::new(Launcher::Thread, CoordinatorOptions::default())
    }

    #[test]
    fn aware_checkpoint_at_first_marker_and_restart() {
        let c = coord();
        let spec = TaskSpec::Matmul { n: 12, seed: 4 };
        let mut h = c.launch("mm", &spec, MigrationType::Aware).unwrap();
        assert_eq!(h.status(), TaskStatus::Running);
        let img = match h.await_marker(|_| true).unwrap() {
            MarkerOutcome::Checkpoint(img) => img,
            MarkerOutcome::Finished(_) => panic!("expected checkpoint"),
        };
        assert_eq!(img.meta.marker_id, 1);
        assert_eq!(h.status(), TaskStatus::Checkpointed);
        h.kill();
        assert_eq!(h.status(), TaskStatus::Killed);

        let mut r = c.restart(&img, None).unwrap();
        let done = r.wait().unwrap();
        let expected = crate::tasks::product_digest(&crate::tasks::matmul_product(12, 4));
        assert_eq!(done.result, expected.to_vec());
    }

    #[test]
    fn zero_marker_task_finishes_directly() {
        let c = coord();
        let spec: TaskSpec = "kernel steps=3 chunk=10 markers=0".parse().unwrap();
        let mut h = c.launch("k", &spec, MigrationType::Aware).unwrap();
        assert!(matches!(h.await_marker(|_| true).unwrap(), MarkerOutcome::Finished(_)));
        assert_eq!(h.status(), TaskStatus::Finished);
        h.kill();
        assert_eq!(h.status(), TaskStatus::Finished);
    }

    #[test]
    fn unknown_task_is_rejected() {
        let c = coord();
        assert!(matches!(
            c.launch_entry("x", "nosuchtask n=1", MigrationType::Aware),
            Err(CheckpointError::UnknownTask(TaskError::UnknownTask(_)))
        ));
    }

    #[test]
    fn double_signal_reports_already_checkpointed() {
        let c = coord();
        let spec: TaskSpec = "kernel steps=400 chunk=100 pace_ms=1".parse().unwrap();
        let mut h = c.launch("k", &spec, MigrationType::NonAware).unwrap();
        h.signal_checkpoint().unwrap();
        assert!(matches!(
            h.signal_checkpoint(),
            Err(CheckpointError::AlreadyCheckpointed)
        ));
        h.kill();
        h.kill();
    }

    #[test]
    fn signal_after_finish_reports_finished_first() {
        let c = coord();
        let spec: TaskSpec = "kernel steps=1 chunk=10".parse().unwrap();
        let mut h = c.launch("k", &spec, MigrationType::NonAware).unwrap();
        thread::sleep(Duration::from_millis(50));
        match h.signal_checkpoint() {
            Err(CheckpointError::TaskFinishedFirst(r)) => assert_eq!(r.len(), 16),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(h.status(), TaskStatus::Finished);
    }

    #[test]
    fn thread_worker_panic_is_a_crash() {
        let c = coord();
        let mut h = c
            .launch("c", &TaskSpec::Crash { after: 2 }, MigrationType::Aware)
            .unwrap();
        match h.await_marker(|_| true) {
            Err(CheckpointError::WorkerCrash(msg)) => assert!(msg.contains("gave up"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_image_is_not_restarted() {
        let c = coord();
        let mut h = c
            .launch("mm", &TaskSpec::Matmul { n: 4, seed: 1 }, MigrationType::Aware)
            .unwrap();
        let MarkerOutcome::Checkpoint(mut img) = h.await_marker(|_| true).unwrap() else {
            panic!()
        };
        let last = img.payload.len() - 10;
        img.payload[last] ^= 1;
        assert!(matches!(
            c.restart(&img, None),
            Err(CheckpointError::Image(ImageError::DigestMismatch(_)))
        ));
    }
}
