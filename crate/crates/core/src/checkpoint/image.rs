//! Checkpoint image (`.pmco`) encoding.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PMCO"
//! 4       2     version (u16 BE, currently 1)
//! 6       2     flags   (u16 BE; bit 0 migration-aware, bit 1 compressed)
//! 8       4     meta length M (u32 BE)
//! 12      M     meta, UTF-8 JSON
//! 12+M    8     payload length P (u64 BE)
//! 20+M    P     payload (gzip when the compressed flag is set)
//! ```
//!
//! `meta.state_digest` is the hex SHA-256 of the uncompressed payload and
//! `meta.uncompressed_len` its length. The uncompressed payload is a
//! [`Snapshot`] envelope: which catalog task, where it stopped, its state.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tasks::TaskSpec;

pub const MAGIC: [u8; 4] = *b"PMCO";
pub const VERSION: u16 = 1;
pub const FLAG_MIGRATION_AWARE: u16 = 0x0001;
pub const FLAG_COMPRESSED: u16 = 0x0002;
pub const IMAGE_EXTENSION: &str = "pmco";
pub const DEFAULT_GZIP_LEVEL: u32 = 6;

const FIXED_HEADER: usize = 12;
/// Upper bound on meta size accepted by the decoder.
const MAX_META: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported image version {0}")]
    VersionUnsupported(u16),
    #[error("truncated image: {0}")]
    Truncated(&'static str),
    #[error("malformed meta: {0}")]
    Meta(String),
    #[error("digest mismatch: {0}")]
    DigestMismatch(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    /// Store the payload as-is.
    Store,
    /// gzip at the given level (0-9).
    Gzip(u32),
    /// gzip at the given level unless a sample of the payload shrinks by
    /// less than 10%, in which case the payload is stored.
    Adaptive(u32),
}

const SAMPLE_CHUNK: usize = 64 * 1024;

impl Compression {
    /// Settles `Adaptive` into `Gzip` or `Store` for this payload.
    pub fn resolve(self, payload: &[u8]) -> Compression {
        let Compression::Adaptive(level) = self else {
            return self;
        };
        if payload.len() <= 3 * SAMPLE_CHUNK {
            return Compression::Gzip(level);
        }
        // Head, middle and tail: headers alone are not representative.
        let mid = payload.len() / 2 - SAMPLE_CHUNK / 2;
        let tail = payload.len() - SAMPLE_CHUNK;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::new(level.min(9)));
        for start in [0, mid, tail] {
            enc.write_all(&payload[start..start + SAMPLE_CHUNK])
                .expect("write to Vec");
        }
        let packed = enc.finish().expect("finish gzip into Vec").len();
        if packed * 10 > 3 * SAMPLE_CHUNK * 9 {
            Compression::Store
        } else {
            Compression::Gzip(level)
        }
    }
}

impl Default for Compression {
    fn default() -> Self {
        Compression::Gzip(DEFAULT_GZIP_LEVEL)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub app_id: String,
    pub marker_id: u32,
    /// Unix milliseconds.
    pub created_at: u64,
    /// Hex SHA-256 of the uncompressed payload.
    pub state_digest: String,
    pub uncompressed_len: u64,
    /// Hex SHA-256 of the payload as stored; present when compressed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointImage {
    pub version: u16,
    pub flags: u16,
    pub meta: ImageMeta,
    /// Payload as stored: gzip bytes when compressed.
    pub payload: Vec<u8>,
}

/// Where a snapshotted task stands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SnapshotPhase {
    Running,
    /// The task already completed; `body` holds its result bytes.
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SnapshotHeader {
    task: TaskSpec,
    phase: SnapshotPhase,
    marker: u32,
}

/// Uncompressed payload of an image: a JSON header (preceded by its u32 BE
/// length) followed by the task state, or the result for finished tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub task: TaskSpec,
    pub phase: SnapshotPhase,
    pub marker: u32,
    pub body: Vec<u8>,
}

impl Snapshot {
    pub fn running(task: TaskSpec, marker: u32, state: Vec<u8>) -> Self {
        Self {
            task,
            phase: SnapshotPhase::Running,
            marker,
            body: state,
        }
    }

    pub fn finished(task: TaskSpec, marker: u32, result: Vec<u8>) -> Self {
        Self {
            task,
            phase: SnapshotPhase::Finished,
            marker,
            body: result,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.phase == SnapshotPhase::Finished
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&SnapshotHeader {
            task: self.task.clone(),
            phase: self.phase.clone(),
            marker: self.marker,
        })
        .expect("snapshot header serializes");
        let mut out = Vec::with_capacity(4 + header.len() + self.body.len());
        out.extend_from_slice(&(header.len() as u32).to_be_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < 4 {
            return Err(ImageError::Snapshot("missing header length".into()));
        }
        let hlen = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let header = bytes
            .get(4..4 + hlen)
            .ok_or_else(|| ImageError::Snapshot("header overruns payload".into()))?;
        let header: SnapshotHeader =
            serde_json::from_slice(header).map_err(|e| ImageError::Snapshot(e.to_string()))?;
        Ok(Self {
            task: header.task,
            phase: header.phase,
            marker: header.marker,
            body: bytes[4 + hlen..].to_vec(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl CheckpointImage {
    /// Builds an image around an uncompressed payload.
    pub fn seal(
        app_id: &str,
        marker_id: u32,
        migration_aware: bool,
        uncompressed: &[u8],
        compression: Compression,
    ) -> Self {
        let mut flags = 0;
        if migration_aware {
            flags |= FLAG_MIGRATION_AWARE;
        }
        let payload = match compression.resolve(uncompressed) {
            Compression::Store | Compression::Adaptive(_) => uncompressed.to_vec(),
            Compression::Gzip(level) => {
                flags |= FLAG_COMPRESSED;
                let mut enc = GzEncoder::new(
                    Vec::with_capacity(uncompressed.len() / 2),
                    flate2::Compression::new(level.min(9)),
                );
                enc.write_all(uncompressed).expect("write to Vec");
                enc.finish().expect("finish gzip into Vec")
            }
        };
        Self {
            version: VERSION,
            flags,
            meta: ImageMeta {
                app_id: app_id.to_string(),
                marker_id,
                created_at: unix_millis(),
                state_digest: sha256_hex(uncompressed),
                uncompressed_len: uncompressed.len() as u64,
                stored_digest: (flags & FLAG_COMPRESSED != 0).then(|| sha256_hex(&payload)),
            },
            payload,
        }
    }

    pub fn seal_snapshot(
        app_id: &str,
        migration_aware: bool,
        snapshot: &Snapshot,
        compression: Compression,
    ) -> Self {
        Self::seal(
            app_id,
            snapshot.marker,
            migration_aware,
            &snapshot.encode(),
            compression,
        )
    }

    pub fn migration_aware(&self) -> bool {
        self.flags & FLAG_MIGRATION_AWARE != 0
    }

    pub fn compressed(&self) -> bool {
        self.flags & FLAG_COMPRESSED != 0
    }

    /// Decompresses the payload and checks it against the meta digest.
    pub fn unseal(&self) -> Result<Vec<u8>, ImageError> {
        if self.version != VERSION {
            return Err(ImageError::VersionUnsupported(self.version));
        }
        let raw = if self.compressed() {
            // Deflate padding and several gzip header bytes do not affect
            // the inflated output, so the stored bytes carry their own digest.
            match &self.meta.stored_digest {
                Some(d) if *d == sha256_hex(&self.payload) => {}
                Some(_) => return Err(ImageError::DigestMismatch("stored payload digest".into())),
                None => return Err(ImageError::Meta("compressed image without stored_digest".into())),
            }
            let mut out = Vec::with_capacity(self.meta.uncompressed_len.min(1 << 30) as usize);
            GzDecoder::new(&self.payload[..])
                .read_to_end(&mut out)
                .map_err(|e| ImageError::DigestMismatch(format!("payload does not inflate: {e}")))?;
            out
        } else {
            self.payload.clone()
        };
        if raw.len() as u64 != self.meta.uncompressed_len {
            return Err(ImageError::DigestMismatch(format!(
                "length {} != recorded {}",
                raw.len(),
                self.meta.uncompressed_len
            )));
        }
        let digest = sha256_hex(&raw);
        if digest != self.meta.state_digest {
            return Err(ImageError::DigestMismatch(format!(
                "{digest} != recorded {}",
                self.meta.state_digest
            )));
        }
        Ok(raw)
    }

    pub fn verify(&self) -> Result<(), ImageError> {
        self.unseal().map(|_| ())
    }

    pub fn snapshot(&self) -> Result<Snapshot, ImageError> {
        Snapshot::decode(&self.unseal()?)
    }

    pub fn encoded_len(&self) -> usize {
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        FIXED_HEADER + meta.len() + 8 + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        let mut out = Vec::with_capacity(FIXED_HEADER + meta.len() + 8 + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_be_bytes());
        out.extend_from_slice(&self.flags.to_be_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_be_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.payload.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses the container. Does not verify the digest; see [`unseal`].
    ///
    /// [`unseal`]: CheckpointImage::unseal
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() < FIXED_HEADER {
            return Err(ImageError::Truncated("header"));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ImageError::BadMagic(magic));
        }
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(ImageError::VersionUnsupported(version));
        }
        let flags = u16::from_be_bytes([bytes[6], bytes[7]]);
        let meta_len = u32::from_be_bytes(bytes[8..12].try_into().unwrap());
        if meta_len > MAX_META {
            return Err(ImageError::Meta(format!("meta length {meta_len} too large")));
        }
        let meta_end = FIXED_HEADER + meta_len as usize;
        let meta_bytes = bytes
            .get(FIXED_HEADER..meta_end)
            .ok_or(ImageError::Truncated("meta"))?;
        let meta: ImageMeta =
            serde_json::from_slice(meta_bytes).map_err(|e| ImageError::Meta(e.to_string()))?;
        let plen_bytes = bytes
            .get(meta_end..meta_end + 8)
            .ok_or(ImageError::Truncated("payload length"))?;
        let plen = u64::from_be_bytes(plen_bytes.try_into().unwrap());
        let start = meta_end + 8;
        let rest = bytes.len() - start;
        if plen != rest as u64 {
            return Err(if plen > rest as u64 {
                ImageError::Truncated("payload")
            } else {
                ImageError::Meta(format!("{} trailing bytes", rest as u64 - plen))
            });
        }
        Ok(Self {
            version,
            flags,
            meta,
            payload: bytes[start..].to_vec(),
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), ImageError> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, ImageError> {
        Self::decode(&fs::read(path)?)
    }
}
