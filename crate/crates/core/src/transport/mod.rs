//! Delivery substrates for encoded frames.
//!
//! [`mem`] is a deterministic single-threaded network with a simulated clock
//! and a pluggable [`Interceptor`] standing in for an active attacker.
//! [`udp`] sends one frame per datagram over real sockets.

pub mod mem;
pub mod udp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::EntityId;

pub use mem::{mem_poll, mem_send, InterceptContext, Interceptor, InterceptorAction, MemNetwork, PassThrough};
pub use udp::{udp_bind, udp_recv, udp_send, UdpEndpoint};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("endpoint {0} is not registered")]
    UnknownEndpoint(EntityId),
    #[error("endpoint {0} is already registered")]
    DuplicateEndpoint(EntityId),
    #[error("replay index {index} does not refer to a recorded frame ({recorded} recorded)")]
    BadReplayIndex { index: usize, recorded: usize },
    #[error("frame of {0} bytes does not fit a datagram")]
    Oversize(usize),
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

/// One frame as it went onto the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Milliseconds since the run started.
    pub time: u64,
    pub src: EntityId,
    pub dst: EntityId,
    #[serde(with = "hex_bytes")]
    pub hex: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

pub fn transcript_to_json(t: &[TranscriptEntry]) -> String {
    serde_json::to_string_pretty(t).expect("transcript entries always serialize")
}
