//! Rank-addressed message passing.
//!
//! A [`Communicator`] connects `P` ranks. Point-to-point sends are
//! non-blocking and return a [`SendHandle`]; receives block until a matching
//! [`Envelope`] arrives or the timeout expires. Delivery is exactly once and
//! FIFO per `(source, dest, tag)`.
//!
//! The collectives ([`allreduce_sum`], [`allgather`], [`barrier`]) are built
//! on point-to-point messages. They reduce in ascending rank order, so every
//! rank gets bit-identical results regardless of the backend or arrival order.
//!
//! Two backends are provided: [`InProcessEndpoint`] (threads in one process)
//! and [`TcpEndpoint`] (one socket per peer pair).

mod inproc;
mod mailbox;
mod tcp;

pub use inproc::{in_process_group, run_in_process, InProcessEndpoint};
pub use tcp::{
    decode_frame, encode_frame, parse_addresses, run_tcp_local, TcpEndpoint, FRAME_HEADER_BYTES,
};

use std::sync::mpsc;
use std::time::Duration;
use thiserror::Error;

pub type RankId = usize;
pub type Tag = u32;

/// Tags at or above this value are used by the collectives and connection setup.
pub const RESERVED_TAG_BASE: Tag = 0xFFFF_0000;
const TAG_ALLGATHER: Tag = RESERVED_TAG_BASE + 1;
const TAG_ALLREDUCE: Tag = RESERVED_TAG_BASE + 2;
const TAG_BARRIER: Tag = RESERVED_TAG_BASE + 3;
pub(crate) const TAG_HELLO: Tag = Tag::MAX;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("rank {rank} is unreachable: {reason}")]
    PeerUnreachable { rank: RankId, reason: String },
    #[error("endpoint is closed")]
    ClosedEndpoint,
    #[error("no matching message within {0:?}")]
    Timeout(Duration),
    #[error("rank {0} cannot send to itself")]
    SendToSelf(RankId),
    #[error("rank {rank} is outside a group of {size}")]
    InvalidRank { rank: RankId, size: usize },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TransportError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub source: RankId,
    pub dest: RankId,
    pub tag: Tag,
    pub payload: Vec<u8>,
}

/// Which sender a receive accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Any,
    Rank(RankId),
}

impl From<RankId> for Source {
    fn from(r: RankId) -> Self {
        Source::Rank(r)
    }
}

impl Source {
    pub(crate) fn matches(self, rank: RankId) -> bool {
        match self {
            Source::Any => true,
            Source::Rank(r) => r == rank,
        }
    }
}

/// Completion token of a non-blocking send.
#[derive(Debug)]
pub struct SendHandle {
    pending: Option<mpsc::Receiver<Result<()>>>,
    outcome: Option<Result<()>>,
}

impl SendHandle {
    pub(crate) fn completed() -> Self {
        Self {
            pending: None,
            outcome: Some(Ok(())),
        }
    }

    pub(crate) fn pending(rx: mpsc::Receiver<Result<()>>) -> Self {
        Self {
            pending: Some(rx),
            outcome: None,
        }
    }

    /// Polls without blocking.
    pub fn is_complete(&mut self) -> bool {
        if self.outcome.is_none() {
            if let Some(rx) = &self.pending {
                match rx.try_recv() {
                    Ok(r) => self.outcome = Some(r),
                    Err(mpsc::TryRecvError::Empty) => return false,
                    Err(mpsc::TryRecvError::Disconnected) => {
                        self.outcome = Some(Err(TransportError::ClosedEndpoint))
                    }
                }
            }
        }
        true
    }

    /// Blocks until the payload has left this rank.
    pub fn wait(mut self) -> Result<()> {
        if let Some(r) = self.outcome.take() {
            return r;
        }
        match self.pending.take().map(|rx| rx.recv()) {
            Some(Ok(r)) => r,
            _ => Err(TransportError::ClosedEndpoint),
        }
    }
}

pub fn wait_all(handles: impl IntoIterator<Item = SendHandle>) -> Result<()> {
    let mut first_err = None;
    for h in handles {
        if let Err(e) = h.wait() {
            first_err.get_or_insert(e);
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// A rank's handle on its communicator group.
pub trait Communicator: Send {
    fn rank(&self) -> RankId;

    fn size(&self) -> usize;

    /// Queues `payload` for `dest` and returns at once.
    fn send_nonblocking(&mut self, dest: RankId, tag: Tag, payload: Vec<u8>) -> Result<SendHandle>;

    /// Blocks until a message with `tag` from `source` arrives. Messages that
    /// do not match are kept for later receives.
    fn receive(&mut self, source: Source, tag: Tag) -> Result<Envelope>;

    fn timeout(&self) -> Duration;

    fn set_timeout(&mut self, timeout: Duration);

    fn send(&mut self, dest: RankId, tag: Tag, payload: Vec<u8>) -> Result<()> {
        self.send_nonblocking(dest, tag, payload)?.wait()
    }
}

pub(crate) fn check_dest(rank: RankId, size: usize, dest: RankId) -> Result<()> {
    if dest >= size {
        return Err(TransportError::InvalidRank { rank: dest, size });
    }
    if dest == rank {
        return Err(TransportError::SendToSelf(rank));
    }
    Ok(())
}

fn gather_tagged<C: Communicator + ?Sized>(
    comm: &mut C,
    tag: Tag,
    value: &[u8],
) -> Result<Vec<Vec<u8>>> {
    let (me, size) = (comm.rank(), comm.size());
    let mut handles = Vec::with_capacity(size.saturating_sub(1));
    for dest in (0..size).filter(|&d| d != me) {
        handles.push(comm.send_nonblocking(dest, tag, value.to_vec())?);
    }
    let mut out = Vec::with_capacity(size);
    for src in 0..size {
        if src == me {
            out.push(value.to_vec());
        } else {
            out.push(comm.receive(Source::Rank(src), tag)?.payload);
        }
    }
    wait_all(handles)?;
    Ok(out)
}

/// Every rank's contribution, indexed by rank.
pub fn allgather<C: Communicator + ?Sized>(comm: &mut C, value: &[u8]) -> Result<Vec<Vec<u8>>> {
    gather_tagged(comm, TAG_ALLGATHER, value)
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(TransportError::Malformed(format!(
            "{} bytes is not a list of f64",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn allgather_f64<C: Communicator + ?Sized>(comm: &mut C, value: f64) -> Result<Vec<f64>> {
    allgather(comm, &value.to_le_bytes())?
        .iter()
        .map(|b| {
            <[u8; 8]>::try_from(b.as_slice())
                .map(f64::from_le_bytes)
                .map_err(|_| TransportError::Malformed("expected one f64".into()))
        })
        .collect()
}

pub fn allgather_u64<C: Communicator + ?Sized>(comm: &mut C, value: u64) -> Result<Vec<u64>> {
    allgather(comm, &value.to_le_bytes())?
        .iter()
        .map(|b| {
            <[u8; 8]>::try_from(b.as_slice())
                .map(u64::from_le_bytes)
                .map_err(|_| TransportError::Malformed("expected one u64".into()))
        })
        .collect()
}

fn gather_vectors<C: Communicator + ?Sized>(comm: &mut C, values: &[f64]) -> Result<Vec<Vec<f64>>> {
    let parts = gather_tagged(comm, TAG_ALLREDUCE, &encode_f64s(values))?;
    let parts: Vec<Vec<f64>> = parts
        .iter()
        .map(|p| decode_f64s(p))
        .collect::<Result<_>>()?;
    if let Some(bad) = parts.iter().position(|p| p.len() != values.len()) {
        return Err(TransportError::Malformed(format!(
            "rank {bad} contributed {} values, expected {}",
            parts[bad].len(),
            values.len()
        )));
    }
    Ok(parts)
}

/// Element-wise sum over ranks, accumulated from rank 0 upwards.
pub fn allreduce_sum<C: Communicator + ?Sized>(comm: &mut C, values: &[f64]) -> Result<Vec<f64>> {
    let parts = gather_vectors(comm, values)?;
    let mut acc = parts[0].clone();
    for part in &parts[1..] {
        for (a, v) in acc.iter_mut().zip(part) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Element-wise maximum over ranks.
pub fn allreduce_max<C: Communicator + ?Sized>(comm: &mut C, values: &[f64]) -> Result<Vec<f64>> {
    let parts = gather_vectors(comm, values)?;
    let mut acc = parts[0].clone();
    for part in &parts[1..] {
        for (a, &v) in acc.iter_mut().zip(part) {
            *a = a.max(v);
        }
    }
    Ok(acc)
}

/// Returns once every rank has entered.
pub fn barrier<C: Communicator + ?Sized>(comm: &mut C) -> Result<()> {
    gather_tagged(comm, TAG_BARRIER, &[]).map(|_| ())
}
