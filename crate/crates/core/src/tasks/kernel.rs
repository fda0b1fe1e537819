//! Iterative float kernel: a logistic-map recurrence folded into an
//! accumulator. The optional per-step pause stretches wall time without
//! changing the result, which makes interval checkpointing easy to exercise.

use std::thread;
use std::time::Duration;

use super::{Lcg64, MarkerTask, StateReader, StateWriter, Step, TaskError};

pub struct KernelTask {
    steps: u64,
    chunk: u64,
    pace_ms: u64,
    markers: u32,
    done: u64,
    x: f64,
    acc: f64,
    last_marker: u32,
}

impl KernelTask {
    pub fn new(steps: u64, chunk: u64, pace_ms: u64, markers: u32, seed: u64) -> Self {
        // Keep x0 away from the map's fixed points.
        let x0 = 0.1 + 0.8 * Lcg64::new(seed).next_f64();
        Self {
            steps,
            chunk,
            pace_ms,
            markers,
            done: 0,
            x: x0,
            acc: 0.0,
            last_marker: 0,
        }
    }

    /// Step count after which marker `m` (1-based) is reported.
    fn marker_at(&self, m: u32) -> u64 {
        self.steps * m as u64 / (self.markers as u64 + 1)
    }

    fn result(&self) -> Vec<u8> {
        let mut out = self.acc.to_le_bytes().to_vec();
        out.extend_from_slice(&self.x.to_le_bytes());
        out
    }
}

impl MarkerTask for KernelTask {
    fn step(&mut self) -> Step {
        if self.last_marker < self.markers && self.done == self.marker_at(self.last_marker + 1) {
            self.last_marker += 1;
            return Step::Marker(self.last_marker);
        }
        if self.done >= self.steps {
            return Step::Finished(self.result());
        }
        for _ in 0..self.chunk {
            self.x = 3.9 * self.x * (1.0 - self.x);
            self.acc += self.x;
        }
        self.done += 1;
        if self.pace_ms > 0 {
            thread::sleep(Duration::from_millis(self.pace_ms));
        }
        Step::Progress
    }

    fn serialize_state(&self) -> Vec<u8> {
        let mut w = StateWriter::with_capacity(48);
        w.u64(self.steps);
        w.u64(self.done);
        w.f64(self.x);
        w.f64(self.acc);
        w.u32(self.last_marker);
        w.buf
    }

    fn restore_state(&mut self, bytes: &[u8]) -> Result<(), TaskError> {
        let mut r = StateReader::new(bytes);
        let steps = r.u64()?;
        if steps != self.steps {
            return Err(TaskError::CorruptState(format!(
                "state is for {steps} steps, task has {}",
                self.steps
            )));
        }
        self.done = r.u64()?;
        self.x = r.f64()?;
        self.acc = r.f64()?;
        self.last_marker = r.u32()?;
        r.end()?;
        if self.done > self.steps || self.last_marker > self.markers {
            return Err(TaskError::CorruptState("kernel progress out of range".into()));
        }
        Ok(())
    }

    fn last_marker(&self) -> u32 {
        self.last_marker
    }
}
