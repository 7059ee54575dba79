//! The three FLAT roles driven frame by frame, without a transport.

use flat_core::crypto::{CryptoContext, Direction, SymmetricKey};
use flat_core::flat::{Assertion, Client, ClientState, Idp, IdpPhase, Sp, SpState, ASSERTION_LEN, STATUS_DENIED};
use flat_core::harness::{Material, DEFAULT_ISSUED_AT};
use flat_core::node::{build_frame, AbortReason, Clock, EventKind, Node, Progress, Timers};
use flat_core::wire::{EntityId, Frame, MessageType};

struct Federation {
    material: Material,
    client: Client,
    sp: Sp,
    idp: Idp,
    clock: Clock,
    /// Every frame any role emitted, in order.
    wire: Vec<Vec<u8>>,
}

impl Federation {
    fn new(seed: u64) -> Self {
        let material = Material::generate(3, 2, DEFAULT_ISSUED_AT).unwrap();
        Self::with_material(material, seed)
    }

    fn with_material(material: Material, seed: u64) -> Self {
        let t = Timers::default();
        Federation {
            client: Client::new(material.flat_client(0, t), CryptoContext::from_seed(seed)),
            sp: Sp::new(material.flat_sp(t), CryptoContext::from_seed(seed + 1)),
            idp: Idp::new(material.flat_idp(t), CryptoContext::from_seed(seed + 2)),
            clock: Clock::new(material.run_epoch()),
            material,
            wire: Vec::new(),
        }
    }

    fn deliver_one(&mut self, frame: &[u8]) -> Vec<Vec<u8>> {
        let dst = Frame::decode(frame).unwrap().dst;
        let out = if dst == self.client.id() {
            self.client.handle(frame, self.clock)
        } else if dst == self.sp.id() {
            self.sp.handle(frame, self.clock)
        } else {
            self.idp.handle(frame, self.clock)
        };
        self.wire.extend(out.iter().cloned());
        out
    }

    fn start(&mut self) -> Vec<u8> {
        let m1 = self.client.start(self.clock).pop().unwrap();
        self.wire.push(m1.clone());
        m1
    }

    /// Delivers frames until the next one would have type `stop` (returned
    /// undelivered) or nothing is left in flight.
    fn run_until(&mut self, mut pending: Vec<Vec<u8>>, stop: Option<MessageType>) -> Option<Vec<u8>> {
        while let Some(f) = pending.pop() {
            if stop.is_some_and(|t| f[0] == t.code()) {
                return Some(f);
            }
            pending.extend(self.deliver_one(&f));
        }
        None
    }

    fn run_to(&mut self, stop: MessageType) -> Vec<u8> {
        let m1 = self.start();
        self.run_until(vec![m1], Some(stop)).expect("honest run reaches the requested message")
    }

    fn run_honest(&mut self) {
        let m1 = self.start();
        assert!(self.run_until(vec![m1], None).is_none());
    }

    fn k_ci(&self) -> SymmetricKey {
        self.material.clients[0].k_ci
    }
}

fn payload_of(frame: &[u8], key: &SymmetricKey, dir: Direction) -> Vec<u8> {
    let f = Frame::decode(frame).unwrap();
    CryptoContext::from_seed(0).unprotect(key, &f.payload, f.seq, dir).unwrap()
}

#[test]
fn honest_run_shares_one_key_that_never_travels_in_clear() {
    let mut fed = Federation::new(1);
    fed.run_honest();
    assert_eq!(fed.client.state(), ClientState::Done);
    assert_eq!(fed.sp.state(), SpState::Done);
    assert_eq!(fed.idp.session_phase(fed.client.id(), fed.sp.id()), Some(IdpPhase::Done));
    let k = fed.client.session_key().unwrap();
    assert_eq!(Some(k), fed.sp.session_key());

    let key = k.to_bytes();
    for half in key.chunks(16) {
        for frame in &fed.wire {
            assert!(!frame.windows(16).any(|w| w == half), "key half leaked in frame type {}", frame[0]);
        }
    }
    assert_eq!(fed.client.ops().asymmetric(), 0);
}

#[test]
fn assertion_carries_the_sp_session_nonce() {
    let mut fed = Federation::new(2);
    let m8 = fed.run_to(MessageType::Assertion);
    let pt = payload_of(&m8, &fed.k_ci(), Direction::IdpToClient);
    let a = Assertion::from_bytes(&pt[..ASSERTION_LEN]).unwrap();
    assert_eq!(Some(a.n_sp), fed.sp.session_nonce());
    assert_eq!(a.client_id, fed.client.id());
    assert_eq!(a.sp_id, fed.sp.id());
}

#[test]
fn idle_client_rejects_inbound_frames() {
    let mut fed = Federation::new(3);
    let stray = build_frame(MessageType::ClientKey.code(), 0, fed.idp.id(), fed.client.id(), vec![0; 80]);
    assert!(fed.client.handle(&stray, fed.clock).is_empty());
    assert_eq!(fed.client.state(), ClientState::Idle);
    assert!(matches!(fed.client.events()[0].kind, EventKind::Dropped { reason: AbortReason::ProtocolOrder, .. }));

    fed.client.client_start(fed.clock).unwrap();
    assert_eq!(fed.client.client_start(fed.clock), Err(AbortReason::ProtocolOrder));
}

#[test]
fn restart_sends_a_fresh_nonce() {
    let mut fed = Federation::new(4);
    let first = fed.start();
    let deadline = fed.client.deadline().unwrap();
    let again = fed.client.tick(fed.clock.at(deadline));
    assert_eq!(again.len(), 1);
    assert_eq!(fed.client.restarts(), 1);
    assert_eq!(fed.client.state(), ClientState::AwaitKey);
    assert_eq!(again[0][0], MessageType::KeyRequest.code());

    let a = payload_of(&first, &fed.k_ci(), Direction::ClientToIdp);
    let b = payload_of(&again[0], &fed.k_ci(), Direction::ClientToIdp);
    assert_eq!(a[..3], b[..3]);
    assert_ne!(a[3..], b[3..]);
    assert!(Frame::decode(&again[0]).unwrap().seq > Frame::decode(&first).unwrap().seq);
}

#[test]
fn client_gives_up_after_max_restarts() {
    let mut fed = Federation::new(5);
    fed.start();
    let max = Timers::default().max_restarts;
    while let Some(d) = fed.client.deadline() {
        fed.client.tick(fed.clock.at(d));
    }
    assert_eq!(fed.client.restarts(), max);
    assert_eq!(fed.client.progress(), Progress::Failed(AbortReason::Timeout));
}

#[test]
fn replayed_service_at_a_done_client_is_flagged() {
    let mut fed = Federation::new(6);
    let m10 = fed.run_to(MessageType::Service);
    fed.deliver_one(&m10);
    assert_eq!(fed.client.state(), ClientState::Done);
    assert!(fed.deliver_one(&m10).is_empty());
    assert_eq!(fed.client.state(), ClientState::Aborted(AbortReason::Replay));
}

#[test]
fn unknown_client_is_dropped_and_audited() {
    let mut fed = Federation::new(7);
    let stranger = EntityId::new(0x0F_0000).unwrap();
    let key = SymmetricKey::from_bytes(&[9; 32]);
    let mut ctx = CryptoContext::from_seed(70);
    let mut pt = fed.sp.id().to_bytes().to_vec();
    pt.extend_from_slice(ctx.nonce().as_bytes());
    let payload = ctx.protect(&key, &pt, 0, Direction::ClientToIdp).unwrap();
    let m1 = build_frame(MessageType::KeyRequest.code(), 0, stranger, fed.idp.id(), payload);
    assert!(fed.idp.handle(&m1, fed.clock).is_empty());
    assert_eq!(fed.idp.session_count(), 0);
    assert!(matches!(
        fed.idp.audit_log().last().unwrap().kind,
        EventKind::Dropped { reason: AbortReason::UnknownPeer, src: Some(s), .. } if s == stranger
    ));
}

#[test]
fn assertion_from_another_session_is_denied() {
    // Session one completes; its assertion is then spliced into session two,
    // re-wrapped under session two's key so that only the assertion check
    // stands between it and the service.
    let mut one = Federation::new(8);
    let m9_old = one.run_to(MessageType::ServiceRequest);
    let old_pt = payload_of(&m9_old, &one.client.session_key().unwrap(), Direction::ClientToSp);

    let mut two = Federation::with_material(one.material.clone(), 80);
    let m9 = two.run_to(MessageType::ServiceRequest);
    let k_cs = two.client.session_key().unwrap();
    let fresh_pt = payload_of(&m9, &k_cs, Direction::ClientToSp);
    let mut spliced_pt = old_pt[..ASSERTION_LEN].to_vec();
    spliced_pt.extend_from_slice(&fresh_pt[ASSERTION_LEN..]);
    let f = Frame::decode(&m9).unwrap();
    let payload = CryptoContext::from_seed(81).protect(&k_cs, &spliced_pt, f.seq, Direction::ClientToSp).unwrap();
    let spliced = build_frame(f.code, f.seq, f.src, f.dst, payload);

    let reply = two.deliver_one(&spliced);
    assert_eq!(reply.len(), 1);
    let status = payload_of(&reply[0], &k_cs, Direction::SpToClient)[0];
    assert_eq!(status, STATUS_DENIED);
    assert!(matches!(two.sp.state(), SpState::Aborted(AbortReason::NonceMismatch)));
    two.deliver_one(&reply[0]);
    assert_eq!(two.client.progress(), Progress::Denied);
}

#[test]
fn idp_forgets_idle_sessions() {
    let mut fed = Federation::new(9);
    let m1 = fed.start();
    fed.deliver_one(&m1);
    assert_eq!(fed.idp.session_count(), 1);
    let gc = Timers::default().session_gc_ms;
    assert_eq!(fed.idp.deadline(), Some(gc));
    fed.idp.tick(fed.clock.at(gc - 1));
    assert_eq!(fed.idp.session_count(), 1);
    fed.idp.tick(fed.clock.at(gc));
    assert_eq!(fed.idp.session_count(), 0);
    assert_eq!(fed.idp.deadline(), None);
}

/// Messages the client can legitimately see, with the state in which each is
/// the only acceptable one.
const CLIENT_STEPS: [(MessageType, ClientState); 3] = [
    (MessageType::ClientKey, ClientState::AwaitKey),
    (MessageType::Assertion, ClientState::AwaitAssertion),
    (MessageType::Service, ClientState::AwaitService),
];

#[test]
fn client_never_advances_on_the_wrong_type() {
    for (expected, state) in CLIENT_STEPS {
        let mut fed = Federation::new(10);
        let genuine = Frame::decode(&fed.run_to(expected)).unwrap();
        assert_eq!(fed.client.state(), state);
        for wrong in MessageType::ALL.into_iter().filter(|t| *t != expected) {
            let mut fed = Federation::new(10);
            fed.run_to(expected);
            let forged = build_frame(wrong.code(), genuine.seq, genuine.src, genuine.dst, genuine.payload.clone());
            assert!(fed.client.handle(&forged, fed.clock).is_empty(), "{wrong} in {state:?}");
            assert_eq!(
                fed.client.state(),
                ClientState::Aborted(AbortReason::UnexpectedMessage),
                "{wrong} in {state:?}"
            );
        }
    }
}

#[test]
fn sp_never_advances_on_the_wrong_type() {
    let m4 = Frame::decode(&Federation::new(11).run_to(MessageType::SpKey)).unwrap();
    for wrong in MessageType::ALL.into_iter().filter(|t| *t != MessageType::SpKey) {
        let mut fed = Federation::new(11);
        fed.run_to(MessageType::SpKey);
        assert_eq!(fed.sp.state(), SpState::AwaitKey);
        let forged = build_frame(wrong.code(), m4.seq, m4.src, m4.dst, m4.payload.clone());
        let out = fed.sp.handle(&forged, fed.clock);
        if wrong == MessageType::CertificateChallenge {
            // A challenge is the one frame that may open a new session.
            assert!(out.is_empty());
            assert!(matches!(fed.sp.state(), SpState::Aborted(_)), "{wrong}");
            continue;
        }
        assert!(out.is_empty(), "{wrong}");
        assert_eq!(fed.sp.state(), SpState::Aborted(AbortReason::UnexpectedMessage), "{wrong}");
        assert!(fed.sp.session_key().is_none());
    }
}

#[test]
fn idp_ignores_frames_for_sessions_it_does_not_have() {
    let mut fed = Federation::new(12);
    let mut other = Federation::with_material(fed.material.clone(), 120);
    let m5 = other.run_to(MessageType::KeyAcknowledgment);
    let m7 = {
        let mut third = Federation::with_material(fed.material.clone(), 121);
        third.run_to(MessageType::AssertionRequest)
    };
    for frame in [m5, m7] {
        assert!(fed.idp.handle(&frame, fed.clock).is_empty());
        assert_eq!(fed.idp.session_count(), 0);
        assert!(matches!(
            fed.idp.audit_log().last().unwrap().kind,
            EventKind::Dropped { reason: AbortReason::UnexpectedMessage, .. }
        ));
    }
}
