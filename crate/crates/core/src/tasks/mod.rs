//! Cooperating tasks that can be checkpointed and restarted.
//!
//! A task advances in small steps. Between steps the runtime may serialize
//! it, so every step boundary is a safe point. Some step boundaries are
//! migration markers, where migration-aware execution stops and lets the
//! coordinator decide whether to checkpoint. Marker ordinals are dense and
//! start at 1; ordinal 0 means "program start".

mod kernel;
mod matmul;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::KernelTask;
pub use matmul::{matmul_product, product_digest, MatmulTask};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("bad task parameters for `{task}`: {message}")]
    BadParams { task: String, message: String },
    #[error("corrupt task state: {0}")]
    CorruptState(String),
}

/// Outcome of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Progress,
    Marker(u32),
    Finished(Vec<u8>),
}

/// Event returned by [`MarkerTask::run_to_event`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskEvent {
    ReachedMarker(u32),
    Finished(Vec<u8>),
}

/// Worker-side contract. `restore_state(serialize_state())` followed by more
/// steps must be observationally identical to never having stopped.
pub trait MarkerTask: Send {
    fn step(&mut self) -> Step;

    fn serialize_state(&self) -> Vec<u8>;

    fn restore_state(&mut self, bytes: &[u8]) -> Result<(), TaskError>;

    /// Ordinal of the most recent marker passed (0 before the first).
    fn last_marker(&self) -> u32;

    fn run_to_event(&mut self) -> TaskEvent {
        loop {
            match self.step() {
                Step::Progress => {}
                Step::Marker(m) => return TaskEvent::ReachedMarker(m),
                Step::Finished(r) => return TaskEvent::Finished(r),
            }
        }
    }
}

/// Entry in the task catalog. Textual form: `<name> key=value ...`, e.g.
/// `matmul n=700 seed=42`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskSpec {
    /// Naive `n x n` matrix product of two seeded random matrices. Marker 1
    /// sits before the multiply loop, marker 2 (the return marker) after it.
    Matmul { n: usize, seed: u64 },
    /// Iterative float kernel with optional pacing, used for interval
    /// checkpointing. `markers` evenly spaced markers.
    Kernel {
        steps: u64,
        chunk: u64,
        pace_ms: u64,
        markers: u32,
        seed: u64,
    },
    /// Panics after `after` steps; exercises crash handling.
    Crash { after: u64 },
}

/// Names of catalog entries, as advertised in platform tags.
pub const CATALOG: &[&str] = &["matmul", "kernel", "crash"];

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Matmul { .. } => "matmul",
            TaskSpec::Kernel { .. } => "kernel",
            TaskSpec::Crash { .. } => "crash",
        }
    }

    /// Resolves a catalog entry by name and `key=value` parameters.
    pub fn resolve(name: &str, params: &[(&str, &str)]) -> Result<Self, TaskError> {
        let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let num = |key: &str, default: Option<u64>| -> Result<u64, TaskError> {
            match get(key) {
                Some(v) => v.parse::<u64>().map_err(|e| TaskError::BadParams {
                    task: name.to_string(),
                    message: format!("{key}: {e}"),
                }),
                None => default.ok_or_else(|| TaskError::BadParams {
                    task: name.to_string(),
                    message: format!("missing `{key}`"),
                }),
            }
        };
        let known: &[&str] = match name {
            "matmul" => &["n", "seed"],
            "kernel" => &["steps", "chunk", "pace_ms", "markers", "seed"],
            "crash" => &["after"],
            other => return Err(TaskError::UnknownTask(other.to_string())),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(k)) {
            return Err(TaskError::BadParams {
                task: name.to_string(),
                message: format!("unknown parameter `{k}`"),
            });
        }
        let spec = match name {
            "matmul" => TaskSpec::Matmul {
                n: num("n", None)? as usize,
                seed: num("seed", Some(0))?,
            },
            "kernel" => TaskSpec::Kernel {
                steps: num("steps", None)?,
                chunk: num("chunk", Some(10_000))?,
                pace_ms: num("pace_ms", Some(0))?,
                markers: num("markers", Some(1))? as u32,
                seed: num("seed", Some(0))?,
            },
            _ => TaskSpec::Crash {
                after: num("after", Some(0))?,
            },
        };
        if let TaskSpec::Matmul { n: 0, .. } = spec {
            return Err(TaskError::BadParams {
                task: name.to_string(),
                message: "n must be >= 1".into(),
            });
        }
        Ok(spec)
    }

    /// Fresh instance positioned at program start.
    pub fn instantiate(&self) -> Box<dyn MarkerTask> {
        match *self {
            TaskSpec::Matmul { n, seed } => Box::new(MatmulTask::new(n, seed)),
            TaskSpec::Kernel {
                steps,
                chunk,
                pace_ms,
                markers,
                seed,
            } => Box::new(KernelTask::new(steps, chunk, pace_ms, markers, seed)),
            TaskSpec::Crash { after } => Box::new(CrashTask { done: 0, after }),
        }
    }

    /// Instance restored from serialized state.
    pub fn restore(&self, state: &[u8]) -> Result<Box<dyn MarkerTask>, TaskError> {
        let mut task = self.instantiate();
        task.restore_state(state)?;
        Ok(task)
    }

    /// Rough workload size in millions of instructions, for registry
    /// defaults and bench bookkeeping.
    pub fn approx_mi(&self) -> f64 {
        match *self {
            TaskSpec::Matmul { n, .. } => 2.0 * (n as f64).powi(3) / 1e6,
            TaskSpec::Kernel { steps, chunk, .. } => 4.0 * (steps * chunk) as f64 / 1e6,
            TaskSpec::Crash { .. } => 0.0,
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Matmul { n, seed } => write!(f, "matmul n={n} seed={seed}"),
            TaskSpec::Kernel {
                steps,
                chunk,
                pace_ms,
                markers,
                seed,
            } => write!(
                f,
                "kernel steps={steps} chunk={chunk} pace_ms={pace_ms} markers={markers} seed={seed}"
            ),
            TaskSpec::Crash { after } => write!(f, "crash after={after}"),
        }
    }
}

impl FromStr for TaskSpec {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| TaskError::UnknownTask(String::new()))?;
        let mut params = Vec::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| TaskError::BadParams {
                task: name.to_string(),
                message: format!("expected key=value, got `{p}`"),
            })?;
            params.push((k, v));
        }
        Self::resolve(name, &params)
    }
}

impl TryFrom<String> for TaskSpec {
    type Error = TaskError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<TaskSpec> for String {
    fn from(value: TaskSpec) -> Self {
        value.to_string()
    }
}

/// 64-bit linear congruential generator (Knuth's MMIX constants):
/// `state = state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`,
/// seeded with `state = seed`. Each draw advances once; `next_f64` returns
/// the top 53 bits of the new state scaled into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg64 {
    pub state: u64,
}

impl Lcg64 {
    pub const MUL: u64 = 6364136223846793005;
    pub const INC: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MUL).wrapping_add(Self::INC);
        self.state
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

struct CrashTask {
    done: u64,
    after: u64,
}

impl MarkerTask for CrashTask {
    fn step(&mut self) -> Step {
        if self.done >= self.after {
            panic!("crash task gave up after {} steps", self.done);
        }
        self.done += 1;
        Step::Progress
    }

    fn serialize_state(&self) -> Vec<u8> {
        self.done.to_le_bytes().to_vec()
    }

    fn restore_state(&mut self, bytes: &[u8]) -> Result<(), TaskError> {
        let mut r = StateReader::new(bytes);
        self.done = r.u64()?;
        r.end()
    }

    fn last_marker(&self) -> u32 {
        0
    }
}

// Little-endian helpers for task state blobs.

pub(crate) struct StateWriter {
    pub buf: Vec<u8>,
}

impl StateWriter {
    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub(crate) struct StateReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> StateReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TaskError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TaskError::CorruptState("truncated state".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, TaskError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, TaskError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, TaskError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, TaskError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, TaskError> {
        let len = self.u64()? as usize;
        let raw = self.take(
            len.checked_mul(8)
                .ok_or_else(|| TaskError::CorruptState("length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn end(self) -> Result<(), TaskError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(TaskError::CorruptState("trailing bytes".into()))
        }
    }
}
