//! Coordinator <-> worker control channel: `tag: u8 | len: u32 BE | body`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::tasks::TaskSpec;

// coordinator -> worker
const START: u8 = 1;
const CHECKPOINT: u8 = 2;
const CONTINUE: u8 = 3;
const KILL: u8 = 4;
// worker -> coordinator
const MARKER: u8 = 11;
const CHECKPOINTED: u8 = 12;
const FINISHED: u8 = 13;
const FAILED: u8 = 14;

const MAX_BODY: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub task: TaskSpec,
    pub aware: bool,
    pub slowdown: f64,
    /// `Some(state)` restores instead of starting fresh.
    #[serde(skip)]
    pub restore: Option<Restore>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Restore {
    Running(Vec<u8>),
    Finished { marker: u32, result: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterCheckpoint {
    Continue,
    Pause,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    Start(StartSpec),
    Checkpoint(AfterCheckpoint),
    Continue,
    Kill,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Marker(u32),
    Checkpointed { marker: u32, state: Vec<u8> },
    Finished { marker: u32, result: Vec<u8> },
    Failed(String),
}

fn write_msg<W: Write>(w: &mut W, tag: u8, parts: &[&[u8]]) -> io::Result<()> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let len = u32::try_from(len).map_err(|_| io::Error::other("control message too large"))?;
    w.write_all(&[tag])?;
    w.write_all(&len.to_be_bytes())?;
    for p in parts {
        w.write_all(p)?;
    }
    w.flush()
}

/// `Ok(None)` on clean EOF before a tag byte.
fn read_msg<R: Read>(r: &mut R) -> io::Result<Option<(u8, Vec<u8>)>> {
    let mut tag = [0u8; 1];
    match r.read_exact(&mut tag) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_BODY {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "control body too large"));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some((tag[0], body)))
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn split_u32(body: &[u8]) -> io::Result<(u32, &[u8])> {
    if body.len() < 4 {
        return Err(invalid("short body"));
    }
    Ok((u32::from_be_bytes(body[..4].try_into().unwrap()), &body[4..]))
}

pub fn write_control<W: Write>(w: &mut W, msg: &Control) -> io::Result<()> {
    match msg {
        Control::Start(spec) => {
            let json = serde_json::to_vec(spec).map_err(io::Error::other)?;
            let (kind, marker, rest): (u8, u32, &[u8]) = match &spec.restore {
                None => (0, 0, &[]),
                Some(Restore::Running(state)) => (1, 0, state),
                Some(Restore::Finished { marker, result }) => (2, *marker, result),
            };
            write_msg(
                w,
                START,
                &[
                    &(json.len() as u32).to_be_bytes(),
                    &json,
                    &[kind],
                    &marker.to_be_bytes(),
                    rest,
                ],
            )
        }
        Control::Checkpoint(after) => {
            let b = match after {
                AfterCheckpoint::Continue => 0u8,
                AfterCheckpoint::Pause => 1,
            };
            write_msg(w, CHECKPOINT, &[&[b]])
        }
        Control::Continue => write_msg(w, CONTINUE, &[]),
        Control::Kill => write_msg(w, KILL, &[]),
    }
}

pub fn read_control<R: Read>(r: &mut R) -> io::Result<Option<Control>> {
    let Some((tag, body)) = read_msg(r)? else {
        return Ok(None);
    };
    let msg = match tag {
        START => {
            let (jlen, rest) = split_u32(&body)?;
            let jlen = jlen as usize;
            if rest.len() < jlen + 5 {
                return Err(invalid("short start body"));
            }
            let mut spec: StartSpec =
                serde_json::from_slice(&rest[..jlen]).map_err(|e| invalid(e.to_string()))?;
            let kind = rest[jlen];
            let (marker, tail) = split_u32(&rest[jlen + 1..])?;
            spec.restore = match kind {
                0 => None,
                1 => Some(Restore::Running(tail.to_vec())),
                2 => Some(Restore::Finished {
                    marker,
                    result: tail.to_vec(),
                }),
                k => return Err(invalid(format!("restore kind {k}"))),
            };
            Control::Start(spec)
        }
        CHECKPOINT => match body.first() {
            Some(0) => Control::Checkpoint(AfterCheckpoint::Continue),
            Some(1) => Control::Checkpoint(AfterCheckpoint::Pause),
            _ => return Err(invalid("bad checkpoint body")),
        },
        CONTINUE => Control::Continue,
        KILL => Control::Kill,
        t => return Err(invalid(format!("unknown control tag {t}"))),
    };
    Ok(Some(msg))
}

pub fn write_event<W: Write>(w: &mut W, ev: &Event) -> io::Result<()> {
    match ev {
        Event::Marker(m) => write_msg(w, MARKER, &[&m.to_be_bytes()]),
        Event::Checkpointed { marker, state } => {
            write_msg(w, CHECKPOINTED, &[&marker.to_be_bytes(), state])
        }
        Event::Finished { marker, result } => {
            write_msg(w, FINISHED, &[&marker.to_be_bytes(), result])
        }
        Event::Failed(msg) => write_msg(w, FAILED, &[msg.as_bytes()]),
    }
}

pub fn read_event<R: Read>(r: &mut R) -> io::Result<Option<Event>> {
    let Some((tag, body)) = read_msg(r)? else {
        return Ok(None);
    };
    let ev = match tag {
        MARKER => Event::Marker(split_u32(&body)?.0),
        CHECKPOINTED => {
            let (marker, state) = split_u32(&body)?;
            Event::Checkpointed {
                marker,
                state: state.to_vec(),
            }
        }
        FINISHED => {
            let (marker, result) = split_u32(&body)?;
            Event::Finished {
                marker,
                result: result.to_vec(),
            }
        }
        FAILED => Event::Failed(String::from_utf8_lossy(&body).into_owned()),
        t => return Err(invalid(format!("unknown event tag {t}"))),
    };
    Ok(Some(ev))
}
