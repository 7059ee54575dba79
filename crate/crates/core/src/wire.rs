//! Datagram framing.
//!
//! Every protocol unit is a 10-byte header followed by at most 280 bytes of
//! payload:
//!
//! ```text
//!  0      1      2         5         8            10
//! +------+------+---------+---------+------------+------------------+
//! | type | seq  | src(3)  | dst(3)  | len(2, BE) | payload (<= 280) |
//! +------+------+---------+---------+------------+------------------+
//! ```
//!
//! All multi-byte integers are big-endian. The layout is frozen by the
//! golden fixtures under `tests/fixtures/`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header length in bytes.
pub const HEADER_LEN: usize = 10;
/// Largest payload a single frame may carry.
pub const MAX_PAYLOAD: usize = 280;
/// Largest encoded frame.
pub const MAX_FRAME: usize = HEADER_LEN + MAX_PAYLOAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated header: {0} bytes, need {HEADER_LEN}")]
    TruncatedHeader(usize),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize(usize),
    #[error("truncated payload: header declares {declared} bytes, {available} available")]
    TruncatedPayload { declared: usize, available: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("entity id {0:#x} does not fit in 24 bits")]
    EntityIdRange(u32),
}

/// 24-bit application-layer identifier of a Client, SP or IdP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct EntityId(u32);

impl EntityId {
    pub const MAX: u32 = (1 << 24) - 1;

    pub const fn new(id: u32) -> Result<Self, WireError> {
        if id > Self::MAX {
            Err(WireError::EntityIdRange(id))
        } else {
            Ok(EntityId(id))
        }
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 3] {
        let b = self.0.to_be_bytes();
        [b[1], b[2], b[3]]
    }

    pub fn from_bytes(b: [u8; 3]) -> Self {
        EntityId(u32::from_be_bytes([0, b[0], b[1], b[2]]))
    }
}

impl TryFrom<u32> for EntityId {
    type Error = WireError;

    fn try_from(v: u32) -> Result<Self, WireError> {
        EntityId::new(v)
    }
}

impl From<EntityId> for u32 {
    fn from(id: EntityId) -> u32 {
        id.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06x}", self.0)
    }
}

/// The ten protocol message types. `0x00` is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    KeyRequest = 0x01,
    ClientKey = 0x02,
    CertificateChallenge = 0x03,
    CertificateResponse = 0x04,
    SpKey = 0x05,
    KeyAcknowledgment = 0x06,
    AssertionRequest = 0x07,
    Assertion = 0x08,
    ServiceRequest = 0x09,
    Service = 0x0A,
}

impl MessageType {
    pub const ALL: [MessageType; 10] = [
        MessageType::KeyRequest,
        MessageType::ClientKey,
        MessageType::CertificateChallenge,
        MessageType::CertificateResponse,
        MessageType::SpKey,
        MessageType::KeyAcknowledgment,
        MessageType::AssertionRequest,
        MessageType::Assertion,
        MessageType::ServiceRequest,
        MessageType::Service,
    ];

    pub const fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Self::ALL.get((code as usize).wrapping_sub(1)).copied().ok_or(WireError::UnknownType(code))
    }

    pub const fn name(self) -> &'static str {
        match self {
            MessageType::KeyRequest => "key request",
            MessageType::ClientKey => "Client key",
            MessageType::CertificateChallenge => "certificate-challenge",
            MessageType::CertificateResponse => "certificate-response",
            MessageType::SpKey => "SP key",
            MessageType::KeyAcknowledgment => "key acknowledgment",
            MessageType::AssertionRequest => "assertion request",
            MessageType::Assertion => "assertion",
            MessageType::ServiceRequest => "service request",
            MessageType::Service => "service",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A frame whose type byte has not been interpreted yet.
///
/// The baseline protocol reuses the header with its own type codes, so the
/// header codec is independent of [`MessageType`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub code: u8,
    pub seq: u8,
    pub src: EntityId,
    pub dst: EntityId,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(WireError::Oversize(self.payload.len()));
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.code);
        out.push(self.seq);
        out.extend_from_slice(&self.src.to_bytes());
        out.extend_from_slice(&self.dst.to_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one frame from the front of `buf`, returning it with the
    /// number of bytes consumed. Trailing bytes are left untouched.
    pub fn decode_prefix(buf: &[u8]) -> Result<(Frame, usize), WireError> {
        if buf.len() < HEADER_LEN {
            return Err(WireError::TruncatedHeader(buf.len()));
        }
        let len = u16::from_be_bytes([buf[8], buf[9]]) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::Oversize(len));
        }
        let available = buf.len() - HEADER_LEN;
        if len > available {
            return Err(WireError::TruncatedPayload { declared: len, available });
        }
        let frame = Frame {
            code: buf[0],
            seq: buf[1],
            src: EntityId::from_bytes([buf[2], buf[3], buf[4]]),
            dst: EntityId::from_bytes([buf[5], buf[6], buf[7]]),
            payload: buf[HEADER_LEN..HEADER_LEN + len].to_vec(),
        };
        Ok((frame, HEADER_LEN + len))
    }

    pub fn decode(buf: &[u8]) -> Result<Frame, WireError> {
        Self::decode_prefix(buf).map(|(f, _)| f)
    }

    /// Reads the type byte and destination without decoding the rest.
    pub fn peek_route(buf: &[u8]) -> Option<(u8, EntityId, EntityId)> {
        (buf.len() >= HEADER_LEN).then(|| {
            (buf[0], EntityId::from_bytes([buf[2], buf[3], buf[4]]), EntityId::from_bytes([buf[5], buf[6], buf[7]]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_type: MessageType,
    pub seq: u8,
    pub src: EntityId,
    pub dst: EntityId,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(msg_type: MessageType, seq: u8, src: EntityId, dst: EntityId, payload: Vec<u8>) -> Self {
        Message { msg_type, seq, src, dst, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn into_frame(self) -> Frame {
        Frame { code: self.msg_type.code(), seq: self.seq, src: self.src, dst: self.dst, payload: self.payload }
    }
}

impl TryFrom<Frame> for Message {
    type Error = WireError;

    fn try_from(f: Frame) -> Result<Self, WireError> {
        Ok(Message {
            msg_type: MessageType::from_code(f.code)?,
            seq: f.seq,
            src: f.src,
            dst: f.dst,
            payload: f.payload,
        })
    }
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, WireError> {
    if m.payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversize(m.payload.len()));
    }
    let mut out = Vec::with_capacity(m.encoded_len());
    out.push(m.msg_type.code());
    out.push(m.seq);
    out.extend_from_slice(&m.src.to_bytes());
    out.extend_from_slice(&m.dst.to_bytes());
    out.extend_from_slice(&(m.payload.len() as u16).to_be_bytes());
    out.extend_from_slice(&m.payload);
    Ok(out)
}

/// Decodes a message from the front of `buf`.
///
/// Length checks run before the type byte is interpreted, so a short buffer
/// with a bogus type reports truncation rather than an unknown type.
pub fn decode_message(buf: &[u8]) -> Result<Message, WireError> {
    decode_message_prefix(buf).map(|(m, _)| m)
}

pub fn decode_message_prefix(buf: &[u8]) -> Result<(Message, usize), WireError> {
    let (frame, used) = Frame::decode_prefix(buf)?;
    Ok((Message::try_from(frame)?, used))
}

/// Per-direction 8-bit sequence counter; wraps modulo 256.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeqCounter(u8);

impl SeqCounter {
    pub fn current(self) -> u8 {
        self.0
    }

    /// Returns the current value and advances.
    pub fn bump(&mut self) -> u8 {
        let v = self.0;
        self.0 = self.0.wrapping_add(1);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(v: u32) -> EntityId {
        EntityId::new(v).unwrap()
    }

    #[test]
    fn empty_key_request_layout() {
        let m = Message::new(MessageType::KeyRequest, 0, id(1), id(2), vec![]);
        let bytes = encode_message(&m).unwrap();
        assert_eq!(hex::encode(&bytes), "01000000010000020000");
    }

    #[test]
    fn max_payload_is_290_bytes() {
        let m = Message::new(MessageType::Service, 7, id(3), id(4), vec![0xab; MAX_PAYLOAD]);
        assert_eq!(encode_message(&m).unwrap().len(), 290);
        let over = Message::new(MessageType::Service, 7, id(3), id(4), vec![0; 281]);
        assert_eq!(encode_message(&over), Err(WireError::Oversize(281)));
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert_eq!(decode_message(&[0u8; 9]), Err(WireError::TruncatedHeader(9)));

        let mut hdr = vec![0x01, 0, 0, 0, 1, 0, 0, 2];
        hdr.extend_from_slice(&281u16.to_be_bytes());
        assert_eq!(decode_message(&hdr), Err(WireError::Oversize(281)));

        let mut short = vec![0x01, 0, 0, 0, 1, 0, 0, 2, 0, 5, 1, 2];
        assert_eq!(decode_message(&short), Err(WireError::TruncatedPayload { declared: 5, available: 2 }));
        short[0] = 0x0B;
        short[9] = 2;
        assert_eq!(decode_message(&short), Err(WireError::UnknownType(0x0B)));
        short[0] = 0x00;
        assert_eq!(decode_message(&short), Err(WireError::UnknownType(0x00)));
    }

    #[test]
    fn decode_consumes_exactly_one_frame() {
        let m = Message::new(MessageType::Assertion, 1, id(9), id(10), vec![1, 2, 3]);
        let mut bytes = encode_message(&m).unwrap();
        bytes.extend_from_slice(&[0xff, 0xee]);
        let (back, used) = decode_message_prefix(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(used, 13);
    }

    #[test]
    fn type_codes_are_a_bijection() {
        for (i, t) in MessageType::ALL.iter().enumerate() {
            assert_eq!(t.code() as usize, i + 1);
            assert_eq!(MessageType::from_code(t.code()).unwrap(), *t);
        }
        let valid = (0..=255u8).filter(|c| MessageType::from_code(*c).is_ok()).count();
        assert_eq!(valid, 10);
    }

    #[test]
    fn entity_id_bounds() {
        assert!(EntityId::new(EntityId::MAX).is_ok());
        assert_eq!(EntityId::new(1 << 24), Err(WireError::EntityIdRange(1 << 24)));
        assert_eq!(id(0x123456).to_bytes(), [0x12, 0x34, 0x56]);
    }

    #[test]
    fn seq_counter_wraps() {
        let mut c = SeqCounter::default();
        for expect in 0..=255u8 {
            assert_eq!(c.bump(), expect);
        }
        assert_eq!(c.bump(), 0);
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        (
            0usize..10,
            any::<u8>(),
            0..=EntityId::MAX,
            0..=EntityId::MAX,
            proptest::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD),
        )
            .prop_map(|(t, seq, s, d, payload)| Message::new(MessageType::ALL[t], seq, id(s), id(d), payload))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn roundtrip_and_length_law(m in arb_message()) {
            let bytes = encode_message(&m).unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + m.payload.len());
            prop_assert!(bytes.len() <= MAX_FRAME);
            prop_assert_eq!(decode_message(&bytes).unwrap(), m);
        }

        #[test]
        fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            if let Ok((m, used)) = decode_message_prefix(&bytes) {
                prop_assert_eq!(encode_message(&m).unwrap(), bytes[..used].to_vec());
            }
        }
    }
}
