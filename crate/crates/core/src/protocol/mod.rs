//! Client/edge wire protocol.
//!
//! Every message is a frame: `opcode: u8 | length: u32 BE | payload`.
//! Control payloads are JSON. Checkpoint frames (`CKPT_PUSH`,
//! `CKPT_RESULT`) carry `meta_len: u32 BE | CkptMeta JSON | image bytes`.
//!
//! A session is strictly request/response:
//!
//! ```text
//! client                         edge
//! HELLO {device}          ->
//!                         <-     ADMIT_OK {advert} | ADMIT_REJECT {reason}
//! PROBE_UP <bytes>        ->
//!                         <-     PROBE_ACK {bytes}
//! PROBE_DOWN {size}       ->
//!                         <-     PROBE_DOWN <bytes>
//! PROBE_ACK {bytes}       ->
//! CKPT_PUSH meta+image    ->
//!                         <-     PROBE_ACK {bytes, digest} | ERROR
//!                         <-     CKPT_RESULT meta+image | ERROR
//! BYE                     ->
//! ```

mod link;
mod session;

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{CheckpointImage, ImageError};

pub use link::{LinkShape, ShapedStream};
pub use session::{Direction, Session, SessionOptions, TransferStats};

pub const DEFAULT_PORT: u16 = 7420;
pub const PORT_ENV: &str = "PMCO_PORT";
pub const DEFAULT_PROBE_SIZE: usize = 256 * 1024;
/// Frames above this are refused before allocating.
pub const MAX_FRAME: u32 = 1 << 30;

/// Port from `PMCO_PORT`, else the default.
pub fn port_from_env() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

/// Bytes per second for `bytes` moved in `seconds`.
pub fn throughput(bytes: u64, seconds: f64) -> f64 {
    bytes as f64 / seconds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Hello = 1,
    AdmitOk = 2,
    AdmitReject = 3,
    ProbeUp = 4,
    ProbeDown = 5,
    ProbeAck = 6,
    CkptPush = 7,
    CkptResult = 8,
    Bye = 9,
    Error = 15,
}

impl Opcode {
    pub const ALL: [Opcode; 10] = [
        Opcode::Hello,
        Opcode::AdmitOk,
        Opcode::AdmitReject,
        Opcode::ProbeUp,
        Opcode::ProbeDown,
        Opcode::ProbeAck,
        Opcode::CkptPush,
        Opcode::CkptResult,
        Opcode::Bye,
        Opcode::Error,
    ];
}

impl TryFrom<u8> for Opcode {
    type Error = ProtocolError;

    fn try_from(b: u8) -> Result<Self, ProtocolError> {
        Opcode::ALL
            .into_iter()
            .find(|op| *op as u8 == b)
            .ok_or(ProtocolError::UnknownOpcode(b))
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Opcode::Hello => "HELLO",
            Opcode::AdmitOk => "ADMIT_OK",
            Opcode::AdmitReject => "ADMIT_REJECT",
            Opcode::ProbeUp => "PROBE_UP",
            Opcode::ProbeDown => "PROBE_DOWN",
            Opcode::ProbeAck => "PROBE_ACK",
            Opcode::CkptPush => "CKPT_PUSH",
            Opcode::CkptResult => "CKPT_RESULT",
            Opcode::Bye => "BYE",
            Opcode::Error => "ERROR",
        };
        f.write_str(s)
    }
}

/// Machine-readable reason in `ERROR` and `ADMIT_REJECT` payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorReason {
    PlatformUnavailable,
    ArchUnsupported,
    QuotaExceeded,
    DigestRejected,
    ProtocolViolation,
    RestoreFailure,
    NotAdmitted,
}

impl fmt::Display for ErrorReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("unknown"))
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("peer closed the connection")]
    Closed,
    #[error("connection reset: {0}")]
    ConnectionReset(String),
    #[error("timed out")]
    Timeout,
    #[error("unknown opcode {0}")]
    UnknownOpcode(u8),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(u32),
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: Opcode },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("server error {reason}: {detail}")]
    Server { reason: ErrorReason, detail: String },
    #[error("admission rejected ({reason}): {detail}")]
    Rejected { reason: ErrorReason, detail: String },
    #[error("checkpoint rejected: {0}")]
    Image(#[from] ImageError),
    #[error("unreachable {addr}: {source}")]
    Unreachable {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ProtocolError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => ProtocolError::Timeout,
            io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe
            | io::ErrorKind::UnexpectedEof => ProtocolError::ConnectionReset(e.to_string()),
            _ => ProtocolError::Io(e),
        }
    }
}

impl ProtocolError {
    /// The wire reason this error maps to, when it came from the peer.
    pub fn reason(&self) -> Option<ErrorReason> {
        match self {
            ProtocolError::Server { reason, .. } | ProtocolError::Rejected { reason, .. } => {
                Some(*reason)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, payload: Vec<u8>) -> Self {
        Self { opcode, payload }
    }

    pub fn json<T: Serialize>(opcode: Opcode, body: &T) -> Self {
        Self::new(opcode, serde_json::to_vec(body).expect("serializable body"))
    }

    pub fn error(reason: ErrorReason, detail: impl Into<String>) -> Self {
        Self::json(
            Opcode::Error,
            &ErrorBody {
                reason,
                detail: detail.into(),
            },
        )
    }

    pub fn wire_len(&self) -> u64 {
        5 + self.payload.len() as u64
    }

    pub fn parse_json<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ProtocolError> {
        serde_json::from_slice(&self.payload).map_err(|e| ProtocolError::Malformed {
            what: "json payload",
            detail: e.to_string(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 5);
        out.push(self.opcode as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Converts an `ERROR` frame into the error it carries.
    pub fn into_server_error(self) -> ProtocolError {
        match self.parse_json::<ErrorBody>() {
            Ok(b) => ProtocolError::Server {
                reason: b.reason,
                detail: b.detail,
            },
            Err(e) => e,
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), ProtocolError> {
    let len = u32::try_from(frame.payload.len())
        .ok()
        .filter(|l| *l <= MAX_FRAME)
        .ok_or(ProtocolError::FrameTooLarge(u32::MAX))?;
    w.write_all(&[frame.opcode as u8])?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&frame.payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean EOF before the opcode byte is [`ProtocolError::Closed`].
pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, ProtocolError> {
    let mut op = [0u8; 1];
    loop {
        match r.read(&mut op) {
            Ok(0) => return Err(ProtocolError::Closed),
            Ok(_) => break,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    read_frame_body(r, op[0])
}

pub(crate) fn read_frame_body<R: Read>(r: &mut R, op: u8) -> Result<Frame, ProtocolError> {
    let opcode = Opcode::try_from(op)?;
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame { opcode, payload })
}

/// Device description sent with `HELLO`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub client_id: String,
    pub arch: String,
    pub platforms: Vec<String>,
}

/// What an edge server advertises in `ADMIT_OK`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advert {
    pub server: String,
    pub cost: f64,
    /// Edge compute rate (MIPS).
    pub s_c: f64,
    pub platforms: Vec<String>,
    pub quota_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub reason: ErrorReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

/// Header of `CKPT_PUSH` / `CKPT_RESULT` payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkptMeta {
    pub app_id: String,
    /// Length of the image bytes that follow.
    pub size: u64,
    pub migration_aware: bool,
    pub markerless: bool,
    /// Recheckpoint interval for non-aware tasks; edge default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_s: Option<f64>,
}

impl CkptMeta {
    pub fn for_image(img_len: usize, app_id: &str, aware: bool, interval_s: Option<f64>) -> Self {
        Self {
            app_id: app_id.to_string(),
            size: img_len as u64,
            migration_aware: aware,
            markerless: !aware,
            interval_s,
        }
    }
}

/// Builds a checkpoint frame from already-encoded image bytes.
pub fn ckpt_frame(opcode: Opcode, meta: &CkptMeta, image: &[u8]) -> Frame {
    let json = serde_json::to_vec(meta).expect("serializable meta");
    let mut payload = Vec::with_capacity(4 + json.len() + image.len());
    payload.extend_from_slice(&(json.len() as u32).to_be_bytes());
    payload.extend_from_slice(&json);
    payload.extend_from_slice(image);
    Frame::new(opcode, payload)
}

/// Splits a checkpoint frame into its meta and raw image bytes, enforcing
/// `size > 0` and `size == image length`.
pub fn split_ckpt(payload: &[u8]) -> Result<(CkptMeta, &[u8]), ProtocolError> {
    let malformed = |detail: String| ProtocolError::Malformed {
        what: "checkpoint frame",
        detail,
    };
    if payload.len() < 4 {
        return Err(malformed("missing meta length".into()));
    }
    let meta_len = u32::from_be_bytes(payload[..4].try_into().unwrap()) as usize;
    let rest = &payload[4..];
    if rest.len() < meta_len {
        return Err(malformed(format!("meta length {meta_len} past end")));
    }
    let meta: CkptMeta =
        serde_json::from_slice(&rest[..meta_len]).map_err(|e| malformed(e.to_string()))?;
    let image = &rest[meta_len..];
    if meta.size == 0 {
        return Err(malformed("image size must be > 0".into()));
    }
    if meta.size != image.len() as u64 {
        return Err(malformed(format!(
            "meta says {} image bytes, frame carries {}",
            meta.size,
            image.len()
        )));
    }
    Ok((meta, image))
}

/// Decodes and digest-checks image bytes received off the wire.
pub fn decode_verified(image: &[u8]) -> Result<CheckpointImage, ImageError> {
    let img = CheckpointImage::decode(image)?;
    img.verify()?;
    Ok(img)
}

/// Deterministic pseudo-random probe payload.
pub fn probe_payload(size: usize) -> Vec<u8> {
    let mut buf = vec![0u8; size];
    crate::tasks::Lcg64::new(0x70_72_6f_62_65).fill_bytes(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = Frame::new(Opcode::Bye, vec![1, 2, 3]);
        assert_eq!(f.encode(), vec![9, 0, 0, 0, 3, 1, 2, 3]);
        assert_eq!(f.wire_len(), 8);
    }

    #[test]
    fn unknown_opcode_rejected() {
        let bytes = [10u8, 0, 0, 0, 0];
        assert!(matches!(
            read_frame(&mut &bytes[..]),
            Err(ProtocolError::UnknownOpcode(10))
        ));
    }

    #[test]
    fn eof_cases() {
        assert!(matches!(read_frame(&mut &[][..]), Err(ProtocolError::Closed)));
        let truncated = [7u8, 0, 0, 0, 9, 1, 2];
        assert!(matches!(
            read_frame(&mut &truncated[..]),
            Err(ProtocolError::ConnectionReset(_))
        ));
    }

    #[test]
    fn oversize_length_refused() {
        let bytes = [7u8, 0xff, 0xff, 0xff, 0xff];
        assert!(matches!(
            read_frame(&mut &bytes[..]),
            Err(ProtocolError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn reasons_are_kebab_case() {
        let f = Frame::error(ErrorReason::QuotaExceeded, "over");
        assert_eq!(
            std::str::from_utf8(&f.payload).unwrap(),
            r#"{"reason":"quota-exceeded","detail":"over"}"#
        );
        assert_eq!(ErrorReason::PlatformUnavailable.to_string(), "platform-unavailable");
        match f.into_server_error() {
            ProtocolError::Server { reason, .. } => assert_eq!(reason, ErrorReason::QuotaExceeded),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ckpt_frame_checks_size() {
        let meta = CkptMeta::for_image(3, "a", true, None);
        let f = ckpt_frame(Opcode::CkptPush, &meta, &[1, 2, 3]);
        let (m, img) = split_ckpt(&f.payload).unwrap();
        assert_eq!(m, meta);
        assert_eq!(img, &[1, 2, 3]);

        let empty = ckpt_frame(Opcode::CkptPush, &CkptMeta::for_image(0, "a", true, None), &[]);
        assert!(split_ckpt(&empty.payload).is_err());
        let lying = ckpt_frame(Opcode::CkptPush, &meta, &[1, 2]);
        assert!(split_ckpt(&lying.payload).is_err());
    }

    #[test]
    fn throughput_arithmetic() {
        assert_eq!(throughput(262_144, 0.002), 131_072_000.0);
    }

    #[test]
    fn port_default() {
        if std::env::var(PORT_ENV).is_err() {
            assert_eq!(port_from_env(), 7420);
        }
    }

    fn frame() -> impl Strategy<Value = Frame> {
        (
            prop::sample::select(Opcode::ALL.to_vec()),
            prop::collection::vec(any::<u8>(), 0..300),
        )
            .prop_map(|(op, payload)| Frame::new(op, payload))
    }

    proptest! {
        #[test]
        fn frame_sequences_round_trip(frames in prop::collection::vec(frame(), 0..20)) {
            let mut wire = Vec::new();
            for f in &frames {
                write_frame(&mut wire, f).unwrap();
            }
            let mut r = &wire[..];
            for f in &frames {
                prop_assert_eq!(&read_frame(&mut r).unwrap(), f);
            }
            prop_assert!(matches!(read_frame(&mut r), Err(ProtocolError::Closed)));
        }
    }
}
