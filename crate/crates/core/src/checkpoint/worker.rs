//! Worker side of the checkpoint runtime.
//!
//! A worker runs one task. It polls its control channel between steps, so a
//! signaled checkpoint is taken at the next step boundary. In migration-aware
//! mode it stops at every marker and waits for the coordinator to answer
//! `Continue` or `Checkpoint`. EOF on the control channel means the
//! coordinator is gone and the worker exits.

use std::io::{self, BufWriter, Read, Write};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use super::ipc::{self, AfterCheckpoint, Control, Event, Restore, StartSpec};
use crate::tasks::{MarkerTask, Step, TaskSpec};

/// Argument that switches a binary into worker mode.
pub const WORKER_ARG: &str = "__pmco-worker";

/// Runs the worker protocol on stdin/stdout when the process was started
/// with [`WORKER_ARG`]; never returns in that case.
pub fn run_if_requested() {
    if std::env::args().nth(1).as_deref() == Some(WORKER_ARG) {
        let code = match serve_stdio() {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("pmco worker: {e}");
                2
            }
        };
        std::process::exit(code);
    }
}

pub fn serve_stdio() -> io::Result<()> {
    serve(io::stdin(), io::stdout().lock())
}

/// Spreads `(factor - 1) * step_time` of sleep over the run. Small debts are
/// batched so that sub-millisecond steps are throttled accurately, and
/// oversleeping is credited against later steps.
struct Throttle {
    extra: f64,
    /// Seconds of sleep owed; negative after oversleeping.
    owed: f64,
}

impl Throttle {
    const BATCH: f64 = 0.002;

    fn new(slowdown: f64) -> Self {
        Self {
            extra: (slowdown - 1.0).max(0.0),
            owed: 0.0,
        }
    }

    fn charge(&mut self, spent: Duration) {
        if self.extra == 0.0 {
            return;
        }
        self.owed += spent.as_secs_f64() * self.extra;
        if self.owed >= Self::BATCH {
            let t = Instant::now();
            thread::sleep(Duration::from_secs_f64(self.owed));
            self.owed -= t.elapsed().as_secs_f64();
        }
    }
}

/// Runs `task` to completion on the calling thread under the same
/// compute throttle workers apply. No coordinator, no markers.
pub fn run_inline(task: &TaskSpec, slowdown: f64) -> Vec<u8> {
    let mut throttle = Throttle::new(slowdown);
    let mut t = task.instantiate();
    loop {
        let start = Instant::now();
        let step = t.step();
        throttle.charge(start.elapsed());
        if let Step::Finished(result) = step {
            return result;
        }
    }
}

enum Flow {
    Go,
    Exit,
}

struct Runner<W: Write> {
    task: Box<dyn MarkerTask>,
    events: W,
    control: Receiver<Control>,
}

impl<W: Write> Runner<W> {
    fn send(&mut self, ev: &Event) -> io::Result<()> {
        ipc::write_event(&mut self.events, ev)
    }

    fn checkpoint(&mut self) -> io::Result<()> {
        let state = self.task.serialize_state();
        let marker = self.task.last_marker();
        self.send(&Event::Checkpointed { marker, state })
    }

    /// Handles one control message received while running.
    fn handle(&mut self, msg: Control) -> io::Result<Flow> {
        match msg {
            Control::Checkpoint(after) => {
                self.checkpoint()?;
                if after == AfterCheckpoint::Pause {
                    return self.paused();
                }
                Ok(Flow::Go)
            }
            Control::Kill => Ok(Flow::Exit),
            Control::Continue | Control::Start(_) => Ok(Flow::Go),
        }
    }

    /// Blocks until the coordinator lets the task go on (or kills it).
    fn paused(&mut self) -> io::Result<Flow> {
        loop {
            match self.control.recv() {
                Err(_) | Ok(Control::Kill) => return Ok(Flow::Exit),
                Ok(Control::Continue) => return Ok(Flow::Go),
                Ok(Control::Checkpoint(_)) => self.checkpoint()?,
                Ok(Control::Start(_)) => {}
            }
        }
    }

    fn run(&mut self, aware: bool, slowdown: f64) -> io::Result<()> {
        let mut throttle = Throttle::new(slowdown);
        loop {
            loop {
                match self.control.try_recv() {
                    Ok(msg) => {
                        if let Flow::Exit = self.handle(msg)? {
                            return Ok(());
                        }
                    }
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return Ok(()),
                }
            }
            let t = Instant::now();
            let step = self.task.step();
            throttle.charge(t.elapsed());
            match step {
                Step::Progress => {}
                Step::Marker(m) if aware => {
                    self.send(&Event::Marker(m))?;
                    let decision = match self.control.recv() {
                        Ok(msg) => msg,
                        Err(_) => return Ok(()),
                    };
                    if let Flow::Exit = self.handle(decision)? {
                        return Ok(());
                    }
                }
                Step::Marker(_) => {}
                Step::Finished(result) => {
                    let marker = self.task.last_marker();
                    return self.send(&Event::Finished { marker, result });
                }
            }
        }
    }
}

/// Serves one task over a control stream and an event stream.
pub fn serve<R, W>(mut control: R, events: W) -> io::Result<()>
where
    R: Read + Send + 'static,
    W: Write,
{
    let mut events = BufWriter::new(events);
    let spec: StartSpec = match ipc::read_control(&mut control)? {
        Some(Control::Start(spec)) => spec,
        Some(other) => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("expected start, got {other:?}"),
            ))
        }
        None => return Ok(()),
    };

    let task = match spec.restore {
        None => spec.task.instantiate(),
        Some(Restore::Running(ref state)) => match spec.task.restore(state) {
            Ok(t) => t,
            Err(e) => {
                return ipc::write_event(&mut events, &Event::Failed(e.to_string()));
            }
        },
        Some(Restore::Finished { marker, ref result }) => {
            return ipc::write_event(
                &mut events,
                &Event::Finished {
                    marker,
                    result: result.clone(),
                },
            );
        }
    };

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        while let Ok(Some(msg)) = ipc::read_control(&mut control) {
            if tx.send(msg).is_err() {
                break;
            }
        }
    });

    let mut runner = Runner {
        task,
        events,
        control: rx,
    };
    runner.run(spec.aware, spec.slowdown)
}
