//! Bandwidth shaping for desk-scale links.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

/// Optional caps in bytes/s; `None` is unlimited.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkShape {
    pub up_bps: Option<f64>,
    pub down_bps: Option<f64>,
}

impl LinkShape {
    pub fn symmetric(bps: f64) -> Self {
        Self {
            up_bps: Some(bps),
            down_bps: Some(bps),
        }
    }
}

// Chunk size used while shaping so that pacing stays smooth.
const CHUNK: usize = 16 * 1024;

/// Paces one direction: each chunk moves the release time forward by
/// `len / rate`, and the caller sleeps until then.
#[derive(Debug)]
struct Pacer {
    rate: Option<f64>,
    next: Option<Instant>,
}

impl Pacer {
    fn new(rate: Option<f64>) -> Self {
        Self { rate, next: None }
    }

    fn limit(&self, want: usize) -> usize {
        if self.rate.is_some() {
            want.min(CHUNK)
        } else {
            want
        }
    }

    fn account(&mut self, n: usize) {
        let Some(rate) = self.rate else { return };
        let now = Instant::now();
        let start = match self.next {
            Some(t) if t > now => t,
            _ => now,
        };
        let release = start + Duration::from_secs_f64(n as f64 / rate);
        self.next = Some(release);
        let wait = release.saturating_duration_since(Instant::now());
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// A stream with per-direction rate caps and byte counters.
#[derive(Debug)]
pub struct ShapedStream<S = TcpStream> {
    inner: S,
    up: Pacer,
    down: Pacer,
    bytes_written: u64,
    bytes_read: u64,
}

impl<S> ShapedStream<S> {
    pub fn new(inner: S, shape: LinkShape) -> Self {
        Self {
            inner,
            up: Pacer::new(shape.up_bps),
            down: Pacer::new(shape.down_bps),
            bytes_written: 0,
            bytes_read: 0,
        }
    }

    pub fn get_ref(&self) -> &S {
        &self.inner
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes_written
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }
}

impl<S: Read> Read for ShapedStream<S> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let want = self.down.limit(buf.len());
        let n = self.inner.read(&mut buf[..want])?;
        self.bytes_read += n as u64;
        self.down.account(n);
        Ok(n)
    }
}

impl<S: Write> Write for ShapedStream<S> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let want = self.up.limit(buf.len());
        let n = self.inner.write(&buf[..want])?;
        self.bytes_written += n as u64;
        self.up.account(n);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
