//! In-memory network with a simulated clock.
//!
//! Every frame takes a fixed latency to arrive. Pending frames sit in one
//! global queue ordered by `(arrival time, send order)`, so delivery is FIFO
//! per sender/receiver pair and the whole run is a pure function of what the
//! nodes send.

use std::collections::{BTreeMap, BTreeSet};

use crate::wire::{EntityId, Frame};

use super::{TranscriptEntry, TransportError};

pub const DEFAULT_LATENCY_MS: u64 = 1;

/// What the adversary does with a frame in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InterceptorAction {
    Deliver,
    Drop,
    /// Deliver the frame plus this many extra copies.
    Duplicate(usize),
    /// Deliver the frame, then re-deliver the recorded frame with this index.
    Replay(usize),
    /// Deliver the frame with `frame[offset] ^= mask`.
    Tamper {
        offset: usize,
        mask: u8,
    },
    /// Deliver the frame, then these bytes, routed by their own header.
    Inject(Vec<u8>),
}

/// What the adversary knows about a frame besides its bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterceptContext {
    pub time_ms: u64,
    /// Position of this frame among all frames handed to the network;
    /// usable later as a [`InterceptorAction::Replay`] index.
    pub index: usize,
}

/// An adversary on the wire. It sees encoded frames only, never node state.
pub trait Interceptor {
    fn record_and_act(&mut self, frame: &[u8], ctx: &InterceptContext) -> InterceptorAction;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PassThrough;

impl Interceptor for PassThrough {
    fn record_and_act(&mut self, _frame: &[u8], _ctx: &InterceptContext) -> InterceptorAction {
        InterceptorAction::Deliver
    }
}

struct Pending {
    src: EntityId,
    dst: EntityId,
    bytes: Vec<u8>,
}

pub struct MemNetwork {
    now_ms: u64,
    latency_ms: u64,
    endpoints: BTreeSet<EntityId>,
    queue: BTreeMap<(u64, u64), Pending>,
    next_order: u64,
    recorded: Vec<Vec<u8>>,
    transcript: Vec<TranscriptEntry>,
    interceptor: Box<dyn Interceptor>,
}

impl MemNetwork {
    pub fn new(latency_ms: u64) -> Self {
        Self::with_interceptor(latency_ms, Box::new(PassThrough))
    }

    pub fn with_interceptor(latency_ms: u64, interceptor: Box<dyn Interceptor>) -> Self {
        MemNetwork {
            now_ms: 0,
            latency_ms,
            endpoints: BTreeSet::new(),
            queue: BTreeMap::new(),
            next_order: 0,
            recorded: Vec::new(),
            transcript: Vec::new(),
            interceptor,
        }
    }

    pub fn register(&mut self, id: EntityId) -> Result<(), TransportError> {
        if !self.endpoints.insert(id) {
            return Err(TransportError::DuplicateEndpoint(id));
        }
        Ok(())
    }

    pub fn now(&self) -> u64 {
        self.now_ms
    }

    /// Moves the clock forward; never backward.
    pub fn advance_to(&mut self, t: u64) {
        self.now_ms = self.now_ms.max(t);
    }

    /// Frames actually put on the wire, in the order they were queued.
    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn next_delivery_time(&self) -> Option<u64> {
        self.queue.keys().next().map(|&(t, _)| t)
    }

    fn enqueue(&mut self, src: EntityId, dst: EntityId, bytes: Vec<u8>) {
        if !self.endpoints.contains(&dst) {
            return;
        }
        self.transcript.push(TranscriptEntry { time: self.now_ms, src, dst, hex: bytes.clone() });
        self.queue.insert((self.now_ms + self.latency_ms, self.next_order), Pending { src, dst, bytes });
        self.next_order += 1;
    }

    fn enqueue_routed(&mut self, bytes: Vec<u8>) {
        if let Some((_, src, dst)) = Frame::peek_route(&bytes) {
            self.enqueue(src, dst, bytes);
        }
    }

    pub fn send(&mut self, from: EntityId, to: EntityId, frame: Vec<u8>) -> Result<(), TransportError> {
        for id in [from, to] {
            if !self.endpoints.contains(&id) {
                return Err(TransportError::UnknownEndpoint(id));
            }
        }
        let ctx = InterceptContext { time_ms: self.now_ms, index: self.recorded.len() };
        self.recorded.push(frame.clone());
        match self.interceptor.record_and_act(&frame, &ctx) {
            InterceptorAction::Deliver => self.enqueue(from, to, frame),
            InterceptorAction::Drop => {}
            InterceptorAction::Duplicate(n) => {
                for _ in 0..=n {
                    self.enqueue(from, to, frame.clone());
                }
            }
            InterceptorAction::Replay(i) => {
                let old = self
                    .recorded
                    .get(i)
                    .filter(|_| i < ctx.index)
                    .cloned()
                    .ok_or(TransportError::BadReplayIndex { index: i, recorded: ctx.index })?;
                self.enqueue(from, to, frame);
                self.enqueue_routed(old);
            }
            InterceptorAction::Tamper { offset, mask } => {
                let mut frame = frame;
                if let Some(b) = frame.get_mut(offset) {
                    *b ^= mask;
                }
                self.enqueue(from, to, frame);
            }
            InterceptorAction::Inject(bytes) => {
                self.enqueue(from, to, frame);
                self.enqueue_routed(bytes);
            }
        }
        Ok(())
    }

    /// Removes the earliest pending frame, advancing the clock to its
    /// arrival time. Returns `(src, dst, bytes)`.
    pub fn pop_next(&mut self) -> Option<(EntityId, EntityId, Vec<u8>)> {
        let ((t, _), p) = self.queue.pop_first()?;
        self.advance_to(t);
        Some((p.src, p.dst, p.bytes))
    }

    /// Next frame addressed to `at`, or `None` once `timeout_ms` of simulated
    /// time has passed with nothing queued for it.
    pub fn poll(&mut self, at: EntityId, timeout_ms: u64) -> Result<Option<Vec<u8>>, TransportError> {
        if !self.endpoints.contains(&at) {
            return Err(TransportError::UnknownEndpoint(at));
        }
        let key = self.queue.iter().find(|(_, p)| p.dst == at).map(|(k, _)| *k);
        match key {
            Some(k) => {
                let p = self.queue.remove(&k).unwrap();
                self.advance_to(k.0);
                Ok(Some(p.bytes))
            }
            None => {
                self.now_ms += timeout_ms;
                Ok(None)
            }
        }
    }
}

pub fn mem_send(net: &mut MemNetwork, from: EntityId, to: EntityId, frame: Vec<u8>) -> Result<(), TransportError> {
    net.send(from, to, frame)
}

pub fn mem_poll(net: &mut MemNetwork, at: EntityId, timeout_ms: u64) -> Result<Option<Vec<u8>>, TransportError> {
    net.poll(at, timeout_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::build_frame;

    fn id(n: u32) -> EntityId {
        EntityId::new(n).unwrap()
    }

    fn net_with(i: Box<dyn Interceptor>) -> MemNetwork {
        let mut n = MemNetwork::with_interceptor(DEFAULT_LATENCY_MS, i);
        n.register(id(1)).unwrap();
        n.register(id(2)).unwrap();
        n
    }

    fn frame(seq: u8) -> Vec<u8> {
        build_frame(1, seq, id(1), id(2), vec![seq; 4])
    }

    struct Scripted(Vec<InterceptorAction>);

    impl Interceptor for Scripted {
        fn record_and_act(&mut self, _f: &[u8], ctx: &InterceptContext) -> InterceptorAction {
            self.0.get(ctx.index).cloned().unwrap_or(InterceptorAction::Deliver)
        }
    }

    #[test]
    fn deliver_is_exact_and_fifo() {
        let mut n = net_with(Box::new(PassThrough));
        for s in 0..5 {
            mem_send(&mut n, id(1), id(2), frame(s)).unwrap();
        }
        for s in 0..5 {
            assert_eq!(mem_poll(&mut n, id(2), 0).unwrap().unwrap(), frame(s));
        }
        assert_eq!(n.now(), 1);
    }

    #[test]
    fn empty_queue_times_out_and_advances_clock() {
        let mut n = net_with(Box::new(PassThrough));
        assert_eq!(mem_poll(&mut n, id(2), 100).unwrap(), None);
        assert_eq!(n.now(), 100);
    }

    #[test]
    fn queued_frame_returned_even_with_zero_timeout() {
        let mut n = net_with(Box::new(PassThrough));
        mem_send(&mut n, id(1), id(2), frame(0)).unwrap();
        assert!(mem_poll(&mut n, id(2), 0).unwrap().is_some());
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let mut n = net_with(Box::new(PassThrough));
        assert!(matches!(mem_send(&mut n, id(1), id(9), frame(0)), Err(TransportError::UnknownEndpoint(_))));
        assert!(matches!(mem_poll(&mut n, id(9), 1), Err(TransportError::UnknownEndpoint(_))));
        assert!(matches!(n.register(id(1)), Err(TransportError::DuplicateEndpoint(_))));
    }

    #[test]
    fn scripted_actions() {
        let injected = build_frame(7, 9, id(2), id(1), vec![]);
        let mut n = net_with(Box::new(Scripted(vec![
            InterceptorAction::Drop,
            InterceptorAction::Duplicate(2),
            InterceptorAction::Tamper { offset: 10, mask: 0xff },
            InterceptorAction::Replay(1),
            InterceptorAction::Inject(injected.clone()),
        ])));
        for s in 0..5 {
            mem_send(&mut n, id(1), id(2), frame(s)).unwrap();
        }
        let mut got = Vec::new();
        while let Some(f) = mem_poll(&mut n, id(2), 0).unwrap() {
            got.push(f);
        }
        let mut tampered = frame(2);
        tampered[10] ^= 0xff;
        assert_eq!(got, vec![frame(1), frame(1), frame(1), tampered, frame(3), frame(1), frame(4)]);
        assert_eq!(mem_poll(&mut n, id(1), 0).unwrap().unwrap(), injected);
        assert_eq!(n.transcript().len(), 8);
    }

    #[test]
    fn replay_of_unrecorded_index_rejected() {
        let mut n = net_with(Box::new(Scripted(vec![InterceptorAction::Replay(0)])));
        assert!(matches!(
            mem_send(&mut n, id(1), id(2), frame(0)),
            Err(TransportError::BadReplayIndex { index: 0, recorded: 0 })
        ));
    }

    #[test]
    fn transcript_json_shape() {
        let mut n = net_with(Box::new(PassThrough));
        mem_send(&mut n, id(1), id(2), frame(0)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&super::super::transcript_to_json(n.transcript())).unwrap();
        let e = &json[0];
        assert_eq!(e["time"], 0);
        assert_eq!(e["src"], 1);
        assert_eq!(e["dst"], 2);
        assert_eq!(e["hex"], hex::encode(frame(0)));
    }
}
