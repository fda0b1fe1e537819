//! Matrix multiplication workload.
//!
//! Both inputs are drawn from one [`Lcg64`] stream seeded with `seed`: all of
//! `A` row-major, then all of `B` row-major. The product uses the textbook
//! `i, j, k` loop with a single accumulator per element, so the summation
//! order (and therefore every bit of the result) is fixed. The task result
//! is the SHA-256 of the product serialized as little-endian `f64`s.

use sha2::{Digest, Sha256};

use super::{Lcg64, MarkerTask, StateReader, StateWriter, Step, TaskError};

const PHASE_GENERATE: u8 = 0;
const PHASE_MULTIPLY: u8 = 1;
const PHASE_DIGEST: u8 = 2;
const PHASE_DONE: u8 = 3;

pub struct MatmulTask {
    n: usize,
    seed: u64,
    rng: Lcg64,
    phase: u8,
    /// Generation: rows of A then B produced so far (0..2n).
    /// Multiply: rows of C produced so far (0..n).
    row: usize,
    marker_pending: bool,
    last_marker: u32,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    result: Vec<u8>,
}

impl MatmulTask {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            rng: Lcg64::new(seed),
            phase: PHASE_GENERATE,
            row: 0,
            marker_pending: false,
            last_marker: 0,
            a: Vec::with_capacity(n * n),
            b: Vec::with_capacity(n * n),
            c: Vec::new(),
            result: Vec::new(),
        }
    }

    fn multiply_row(&mut self) {
        let n = self.n;
        let i = self.row;
        let arow = &self.a[i * n..(i + 1) * n];
        for j in 0..n {
            let mut acc = 0.0;
            for (k, &aik) in arow.iter().enumerate() {
                acc += aik * self.b[k * n + j];
            }
            self.c.push(acc);
        }
    }
}

impl MarkerTask for MatmulTask {
    fn step(&mut self) -> Step {
        let n = self.n;
        if self.marker_pending {
            // Markers are reported on the step after the phase change so a
            // checkpoint taken at the marker resumes just past it.
            self.marker_pending = false;
            return Step::Marker(self.last_marker);
        }
        match self.phase {
            PHASE_GENERATE => {
                let dst = if self.row < n { &mut self.a } else { &mut self.b };
                for _ in 0..n {
                    dst.push(self.rng.next_f64());
                }
                self.row += 1;
                if self.row == 2 * n {
                    self.phase = PHASE_MULTIPLY;
                    self.row = 0;
                    self.c = Vec::with_capacity(n * n);
                    self.last_marker = 1;
                    self.marker_pending = true;
                }
                Step::Progress
            }
            PHASE_MULTIPLY => {
                self.multiply_row();
                self.row += 1;
                if self.row == n {
                    self.phase = PHASE_DIGEST;
                    // Inputs are dead once the product exists.
                    self.a = Vec::new();
                    self.b = Vec::new();
                    self.last_marker = 2;
                    self.marker_pending = true;
                }
                Step::Progress
            }
            PHASE_DIGEST => {
                self.result = product_digest(&self.c).to_vec();
                self.phase = PHASE_DONE;
                Step::Finished(self.result.clone())
            }
            _ => Step::Finished(self.result.clone()),
        }
    }

    fn serialize_state(&self) -> Vec<u8> {
        let floats = self.a.len() + self.b.len() + self.c.len();
        let mut w = StateWriter::with_capacity(64 + floats * 8 + self.result.len());
        w.u64(self.n as u64);
        w.u64(self.seed);
        w.u64(self.rng.state);
        w.u8(self.phase);
        w.u64(self.row as u64);
        w.u8(self.marker_pending as u8);
        w.u32(self.last_marker);
        w.f64s(&self.a);
        w.f64s(&self.b);
        w.f64s(&self.c);
        w.u64(self.result.len() as u64);
        w.buf.extend_from_slice(&self.result);
        w.buf
    }

    fn restore_state(&mut self, bytes: &[u8]) -> Result<(), TaskError> {
        let mut r = StateReader::new(bytes);
        let n = r.u64()? as usize;
        let seed = r.u64()?;
        if n != self.n || seed != self.seed {
            return Err(TaskError::CorruptState(format!(
                "state is for n={n} seed={seed}, task is n={} seed={}",
                self.n, self.seed
            )));
        }
        self.rng = Lcg64 { state: r.u64()? };
        self.phase = r.u8()?;
        if self.phase > PHASE_DONE {
            return Err(TaskError::CorruptState(format!("phase {}", self.phase)));
        }
        self.row = r.u64()? as usize;
        self.marker_pending = r.u8()? != 0;
        self.last_marker = r.u32()?;
        self.a = r.f64s()?;
        self.b = r.f64s()?;
        self.c = r.f64s()?;
        let rlen = r.u64()? as usize;
        let mut result = Vec::with_capacity(rlen.min(64));
        for _ in 0..rlen {
            result.push(r.u8()?);
        }
        self.result = result;
        r.end()?;
        let consistent = match self.phase {
            PHASE_GENERATE => {
                self.row < 2 * n
                    && self.a.len() == self.row.min(n) * n
                    && self.b.len() == self.row.saturating_sub(n) * n
            }
            PHASE_MULTIPLY => {
                self.row < n
                    && self.a.len() == n * n
                    && self.b.len() == n * n
                    && self.c.len() == self.row * n
            }
            PHASE_DIGEST => self.c.len() == n * n,
            _ => true,
        };
        if !consistent {
            return Err(TaskError::CorruptState("inconsistent matmul state".into()));
        }
        if self.phase == PHASE_GENERATE {
            self.a.reserve(n * n - self.a.len());
            self.b.reserve(n * n - self.b.len());
        } else if self.phase == PHASE_MULTIPLY {
            self.c.reserve(n * n - self.c.len());
        }
        Ok(())
    }

    fn last_marker(&self) -> u32 {
        self.last_marker
    }
}

/// SHA-256 over the little-endian bytes of `c`.
pub fn product_digest(c: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for x in c {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// Straight-line reference product, independent of the step machinery.
pub fn matmul_product(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Lcg64::new(seed);
    let a: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
    let b: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    c
}
