//! Client side of a session.

use std::io::{self, Read};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::{
    ckpt_frame, decode_verified, probe_payload, read_frame, read_frame_body, split_ckpt,
    throughput, write_frame, Ack, Advert, CkptMeta, Frame, Hello, LinkShape, Opcode,
    ProbeRequest, ProtocolError, ShapedStream, DEFAULT_PROBE_SIZE,
};
use crate::checkpoint::{CheckpointImage, ImageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub connect_timeout: Duration,
    /// Upper bound on waiting for admission while queued.
    pub admission_timeout: Duration,
    /// Per-read timeout; also bounds how long a remote computation may take.
    pub io_timeout: Duration,
    pub probe_size: usize,
    pub shape: LinkShape,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(5),
            admission_timeout: Duration::from_secs(600),
            io_timeout: Duration::from_secs(600),
            probe_size: DEFAULT_PROBE_SIZE,
            shape: LinkShape::default(),
        }
    }
}

/// One measured transfer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransferStats {
    /// Wire bytes including the frame header.
    pub bytes: u64,
    pub seconds: f64,
    /// Bytes/s; infinite for transfers too fast to time.
    pub throughput: f64,
}

impl TransferStats {
    fn new(bytes: u64, elapsed: Duration) -> Self {
        let seconds = elapsed.as_secs_f64();
        Self {
            bytes,
            seconds,
            throughput: throughput(bytes, seconds.max(1e-9)),
        }
    }
}

/// An admitted connection to an edge server.
#[derive(Debug)]
pub struct Session {
    addr: String,
    stream: ShapedStream<TcpStream>,
    advert: Advert,
    opts: SessionOptions,
}

impl Session {
    /// Connects, sends `HELLO` and waits for the admission verdict. A
    /// server at capacity holds the reply until a slot frees up.
    pub fn connect(addr: &str, hello: &Hello, opts: &SessionOptions) -> Result<Self, ProtocolError> {
        let unreachable = |source: io::Error| ProtocolError::Unreachable {
            addr: addr.to_string(),
            source,
        };
        let sock = addr
            .to_socket_addrs()
            .map_err(unreachable)?
            .next()
            .ok_or_else(|| unreachable(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
        let tcp = TcpStream::connect_timeout(&sock, opts.connect_timeout).map_err(unreachable)?;
        tcp.set_nodelay(true)?;
        tcp.set_read_timeout(Some(opts.admission_timeout))?;
        let mut stream = ShapedStream::new(tcp, opts.shape);
        write_frame(&mut stream, &Frame::json(Opcode::Hello, hello))?;
        let reply = read_frame(&mut stream)?;
        let advert = match reply.opcode {
            Opcode::AdmitOk => reply.parse_json::<Advert>()?,
            Opcode::AdmitReject => {
                let ProtocolError::Server { reason, detail } = reply.into_server_error() else {
                    return Err(ProtocolError::Malformed {
                        what: "admission reject",
                        detail: "unparsable reason".into(),
                    });
                };
                return Err(ProtocolError::Rejected { reason, detail });
            }
            Opcode::Error => return Err(reply.into_server_error()),
            got => {
                return Err(ProtocolError::Unexpected {
                    expected: "ADMIT_OK",
                    got,
                })
            }
        };
        stream.get_ref().set_read_timeout(Some(opts.io_timeout))?;
        Ok(Self {
            addr: addr.to_string(),
            stream,
            advert,
            opts: opts.clone(),
        })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn advert(&self) -> &Advert {
        &self.advert
    }

    fn expect(&mut self, expected: Opcode, name: &'static str) -> Result<Frame, ProtocolError> {
        let f = read_frame(&mut self.stream)?;
        match f.opcode {
            op if op == expected => Ok(f),
            Opcode::Error => Err(f.into_server_error()),
            got => Err(ProtocolError::Unexpected {
                expected: name,
                got,
            }),
        }
    }

    /// Measures throughput with a fixed pseudo-random payload: time from the
    /// first byte out to the acknowledgement (up), or from the request to
    /// the last payload byte (down).
    pub fn probe_bandwidth(&mut self, dir: Direction) -> Result<f64, ProtocolError> {
        let size = self.opts.probe_size;
        match dir {
            Direction::Up => {
                let frame = Frame::new(Opcode::ProbeUp, probe_payload(size));
                let t = Instant::now();
                write_frame(&mut self.stream, &frame)?;
                let ack: Ack = self.expect(Opcode::ProbeAck, "PROBE_ACK")?.parse_json()?;
                let elapsed = t.elapsed();
                if ack.bytes != size as u64 {
                    return Err(ProtocolError::Malformed {
                        what: "probe ack",
                        detail: format!("acked {} of {size} bytes", ack.bytes),
                    });
                }
                Ok(throughput(size as u64, elapsed.as_secs_f64().max(1e-9)))
            }
            Direction::Down => {
                let req = ProbeRequest { size: size as u64 };
                let t = Instant::now();
                write_frame(&mut self.stream, &Frame::json(Opcode::ProbeDown, &req))?;
                let data = self.expect(Opcode::ProbeDown, "PROBE_DOWN")?;
                let elapsed = t.elapsed();
                let got = data.payload.len() as u64;
                write_frame(
                    &mut self.stream,
                    &Frame::json(Opcode::ProbeAck, &Ack { bytes: got, digest: None }),
                )?;
                if got != size as u64 {
                    return Err(ProtocolError::Malformed {
                        what: "probe download",
                        detail: format!("received {got} of {size} bytes"),
                    });
                }
                Ok(throughput(got, elapsed.as_secs_f64().max(1e-9)))
            }
        }
    }

    /// Pushes an image; returns once the server has acknowledged a digest
    /// match.
    pub fn send_checkpoint(
        &mut self,
        meta: &CkptMeta,
        img: &CheckpointImage,
    ) -> Result<TransferStats, ProtocolError> {
        self.send_image_bytes(meta, &img.encode(), Some(&img.meta.state_digest))
    }

    /// Pushes raw image bytes as they are. `expect_digest` is checked
    /// against the server's acknowledgement when given.
    pub fn send_image_bytes(
        &mut self,
        meta: &CkptMeta,
        image: &[u8],
        expect_digest: Option<&str>,
    ) -> Result<TransferStats, ProtocolError> {
        let frame = ckpt_frame(Opcode::CkptPush, meta, image);
        let t = Instant::now();
        write_frame(&mut self.stream, &frame)?;
        let ack: Ack = self.expect(Opcode::ProbeAck, "PROBE_ACK")?.parse_json()?;
        let stats = TransferStats::new(frame.wire_len(), t.elapsed());
        if let (Some(want), Some(got)) = (expect_digest, ack.digest.as_deref()) {
            if want != got {
                return Err(ProtocolError::Image(ImageError::DigestMismatch(format!(
                    "server acknowledged digest {got}, sent {want}"
                ))));
            }
        }
        Ok(stats)
    }

    /// Waits for the `CKPT_RESULT` of the last push. Timing starts at the
    /// first byte of the result frame, so remote compute time is excluded.
    pub fn recv_checkpoint(
        &mut self,
    ) -> Result<(CkptMeta, CheckpointImage, TransferStats), ProtocolError> {
        let mut op = [0u8; 1];
        if self.stream.read(&mut op)? == 0 {
            return Err(ProtocolError::Closed);
        }
        let t = Instant::now();
        let frame = read_frame_body(&mut self.stream, op[0])?;
        let stats = TransferStats::new(frame.wire_len(), t.elapsed());
        match frame.opcode {
            Opcode::CkptResult => {}
            Opcode::Error => return Err(frame.into_server_error()),
            got => {
                return Err(ProtocolError::Unexpected {
                    expected: "CKPT_RESULT",
                    got,
                })
            }
        }
        let (meta, image) = split_ckpt(&frame.payload)?;
        let img = decode_verified(image)?;
        Ok((meta, img, stats))
    }

    /// Ends the session politely.
    pub fn bye(mut self) -> Result<(), ProtocolError> {
        write_frame(&mut self.stream, &Frame::new(Opcode::Bye, Vec::new()))
    }
}
