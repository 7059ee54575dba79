//! What every protocol role looks like to a transport.
//!
//! A [`Node`] consumes encoded frames and timer ticks and produces encoded
//! frames. It never touches sockets or queues, so the same state machine runs
//! over the in-memory network and over UDP.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{Nonce, OpCounters};
use crate::pki::Role;
use crate::wire::{EntityId, Frame, SeqCounter};

/// How long a role waits in any await state, in milliseconds.
pub const DEFAULT_AWAIT_MS: u64 = 500;
/// Client restarts before it gives up for good.
pub const DEFAULT_MAX_RESTARTS: u32 = 3;
/// The IdP forgets sessions idle for this long.
pub const DEFAULT_SESSION_GC_MS: u64 = 5_000;
/// Assertion lifetime in seconds.
pub const ASSERTION_LIFETIME_S: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timers {
    pub await_ms: u64,
    pub max_restarts: u32,
    pub session_gc_ms: u64,
}

impl Default for Timers {
    fn default() -> Self {
        Timers { await_ms: DEFAULT_AWAIT_MS, max_restarts: DEFAULT_MAX_RESTARTS, session_gc_ms: DEFAULT_SESSION_GC_MS }
    }
}

/// Simulated (or measured) time since the run started, plus the Unix time
/// the run started at. Certificate windows and assertion expiry use
/// [`Clock::unix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    pub now_ms: u64,
    pub epoch_unix: u64,
}

impl Clock {
    pub fn new(epoch_unix: u64) -> Self {
        Clock { now_ms: 0, epoch_unix }
    }

    pub fn at(self, now_ms: u64) -> Self {
        Clock { now_ms, ..self }
    }

    pub fn unix(&self) -> u64 {
        self.epoch_unix + self.now_ms / 1000
    }
}

/// Why a role gave up on a message or a whole session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    MacFailure,
    NonceMismatch,
    Replay,
    UnexpectedMessage,
    BadSignature,
    CertificateInvalid,
    DecryptionFailure,
    Malformed,
    AssertionExpired,
    AssertionMismatch,
    AccessDenied,
    Timeout,
    UnknownPeer,
    ProtocolOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The role's session (or, at the IdP, one session) ended in failure.
    Aborted { reason: AbortReason, peer: Option<EntityId> },
    /// A frame was discarded without affecting any session.
    Dropped { reason: AbortReason, src: Option<EntityId>, code: Option<u8> },
    /// The SP answered a service request with a denial.
    Denied { reason: AbortReason, peer: EntityId },
    /// The client started over with a fresh key request.
    Restarted { attempt: u32 },
    /// Client: access granted. SP: service delivered. IdP: assertion issued.
    Completed { peer: Option<EntityId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Where a node stands from the harness's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Running,
    Granted,
    Denied,
    Failed(AbortReason),
}

impl Progress {
    pub fn is_settled(self) -> bool {
        self != Progress::Running
    }
}

pub trait Node: Send {
    fn id(&self) -> EntityId;
    fn role(&self) -> Role;
    /// Frames to send when the run begins. Only clients initiate.
    fn start(&mut self, _clock: Clock) -> Vec<Vec<u8>> {
        Vec::new()
    }
    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>>;
    /// Fires expired timers. Harmless to call early.
    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>>;
    /// Next time [`Node::tick`] has work to do, in run milliseconds.
    fn deadline(&self) -> Option<u64>;
    fn ops(&self) -> OpCounters;
    fn events(&self) -> &[NodeEvent];
    fn progress(&self) -> Progress;
}

/// Per-peer sequence numbers. Outbound counters start at 0 and increment
/// per frame. Inbound, anything below the next expected value is a replay;
/// gaps are tolerated because datagrams can be lost, and the MAC on protected
/// payloads binds the header value anyway.
#[derive(Debug, Default, Clone)]
pub struct SeqBook {
    tx: HashMap<EntityId, SeqCounter>,
    rx: HashMap<EntityId, u8>,
}

impl SeqBook {
    pub fn next_tx(&mut self, peer: EntityId) -> u8 {
        self.tx.entry(peer).or_default().bump()
    }

    pub fn check_rx(&self, peer: EntityId, seq: u8) -> Result<(), AbortReason> {
        match self.rx.get(&peer) {
            Some(&expected) if seq < expected => Err(AbortReason::Replay),
            _ => Ok(()),
        }
    }

    /// Call once the frame carrying `seq` has been accepted.
    pub fn accept_rx(&mut self, peer: EntityId, seq: u8) {
        self.rx.insert(peer, seq.wrapping_add(1));
    }
}

/// Encodes an outbound frame. Payload sizes are fixed by each protocol's
/// layout, so an oversize payload is a bug rather than a runtime condition.
pub fn build_frame(code: u8, seq: u8, src: EntityId, dst: EntityId, payload: Vec<u8>) -> Vec<u8> {
    Frame { code, seq, src, dst, payload }.encode().expect("protocol payloads are sized to fit one frame")
}

/// Splits `b` into consecutive pieces of the given lengths, requiring an
/// exact fit.
pub fn split_exact<const N: usize>(b: &[u8], lens: [usize; N]) -> Result<[&[u8]; N], AbortReason> {
    if lens.iter().sum::<usize>() != b.len() {
        return Err(AbortReason::Malformed);
    }
    let mut out = [&b[..0]; N];
    let mut rest = b;
    for (slot, len) in out.iter_mut().zip(lens) {
        let (head, tail) = rest.split_at(len);
        *slot = head;
        rest = tail;
    }
    Ok(out)
}

/// Compares an echoed nonce with the one we sent.
pub fn check_echo(got: &[u8], expected: Option<Nonce>) -> Result<(), AbortReason> {
    match expected {
        Some(n) if n.as_bytes()[..] == got[..] => Ok(()),
        _ => Err(AbortReason::NonceMismatch),
    }
}

/// Event log shared by the role implementations.
#[derive(Debug, Default, Clone)]
pub struct EventLog(Vec<NodeEvent>);

impl EventLog {
    pub fn push(&mut self, at_ms: u64, kind: EventKind) {
        self.0.push(NodeEvent { at_ms, kind });
    }

    pub fn as_slice(&self) -> &[NodeEvent] {
        &self.0
    }
}
