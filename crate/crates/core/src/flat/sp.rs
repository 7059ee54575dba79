use std::collections::HashSet;

use crate::crypto::{
    CryptoContext, CurvePoint, Direction, Nonce, OpCounters, PrivateKey, Signature, SymmetricKey, NONCE_LEN,
    SIGNATURE_LEN,
};
use crate::node::{
    build_frame, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook, Timers,
};
use crate::pki::{ImplicitCertificate, Role, IMPLICIT_CERT_LEN};
use crate::wire::{EntityId, Frame, MessageType};

use super::{Assertion, ASSERTION_LEN, SESSION_KEY_LEN, STATUS_DENIED, STATUS_GRANTED};

const SP_KEY_CT_LEN: usize = crate::crypto::ECIES_OVERHEAD + SESSION_KEY_LEN + 3;

#[derive(Debug, Clone, Copy)]
pub struct SpConfig {
    pub id: EntityId,
    pub idp: EntityId,
    pub q_ca: CurvePoint,
    pub cert: ImplicitCertificate,
    pub sk: PrivateKey,
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpState {
    Idle,
    AwaitKey,
    KeyHeld,
    Done,
    Aborted(AbortReason),
}

pub struct Sp {
    cfg: SpConfig,
    ctx: CryptoContext,
    state: SpState,
    seq: SeqBook,
    q_idp: Option<CurvePoint>,
    n_idp: Option<Nonce>,
    n_sp: Option<Nonce>,
    k_cs: Option<SymmetricKey>,
    client: Option<EntityId>,
    consumed: HashSet<[u8; ASSERTION_LEN]>,
    deadline: Option<u64>,
    denied: bool,
    log: EventLog,
}

impl Sp {
    pub fn new(cfg: SpConfig, ctx: CryptoContext) -> Self {
        Sp {
            cfg,
            ctx,
            state: SpState::Idle,
            seq: SeqBook::default(),
            q_idp: None,
            n_idp: None,
            n_sp: None,
            k_cs: None,
            client: None,
            consumed: HashSet::new(),
            deadline: None,
            denied: false,
            log: EventLog::default(),
        }
    }

    pub fn state(&self) -> SpState {
        self.state
    }

    pub fn session_key(&self) -> Option<SymmetricKey> {
        self.k_cs
    }

    /// The session nonce `n_SP` this SP sent in its certificate response.
    pub fn session_nonce(&self) -> Option<Nonce> {
        self.n_sp
    }

    fn abort(&mut self, reason: AbortReason, peer: Option<EntityId>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Aborted { reason, peer });
        self.state = SpState::Aborted(reason);
        self.deadline = None;
    }

    fn drop_frame(&mut self, reason: AbortReason, f: &Frame, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: Some(f.src), code: Some(f.code) });
    }

    fn frame(&mut self, dst: EntityId, t: MessageType, payload: Vec<u8>) -> Vec<u8> {
        build_frame(t.code(), self.seq.next_tx(dst), self.cfg.id, dst, payload)
    }

    pub fn sp_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let challenge = f.code == MessageType::CertificateChallenge.code() && f.src == self.cfg.idp;
        let result = match self.state {
            SpState::Idle | SpState::Done | SpState::Aborted(_) if challenge => self.on_challenge(f, clock),
            SpState::AwaitKey if f.src == self.cfg.idp => self.on_sp_key(f, clock),
            SpState::KeyHeld if Some(f.src) == self.client => self.on_service_request(f, clock),
            SpState::Done if Some(f.src) == self.client && f.code == MessageType::ServiceRequest.code() => {
                // Authenticated under its own header sequence number so that a
                // replayed request reaches the single-use check and is denied.
                return self.serve(f, clock);
            }
            SpState::AwaitKey | SpState::KeyHeld => {
                let reason = if f.src == self.cfg.idp || Some(f.src) == self.client {
                    AbortReason::UnexpectedMessage
                } else {
                    AbortReason::UnknownPeer
                };
                self.drop_frame(reason, f, clock);
                return Vec::new();
            }
            _ => {
                self.drop_frame(AbortReason::UnexpectedMessage, f, clock);
                return Vec::new();
            }
        };
        match result {
            Ok(out) => out,
            Err(reason) => {
                self.abort(reason, Some(f.src), clock);
                Vec::new()
            }
        }
    }

    /// Step 2.2: answer the IdP's challenge with our certificate and a
    /// signature binding both nonces.
    fn on_challenge(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [cert, n_idp] = split_exact(&f.payload, [IMPLICIT_CERT_LEN, NONCE_LEN])?;
        let cert_idp = ImplicitCertificate::from_bytes(cert).map_err(|_| AbortReason::CertificateInvalid)?;
        let id = &cert_idp.identity;
        if id.entity_id != self.cfg.idp || id.role != Role::Idp || !id.is_valid_at(clock.unix()) {
            return Err(AbortReason::CertificateInvalid);
        }
        self.seq.accept_rx(f.src, f.seq);
        // A new challenge starts a new session.
        self.k_cs = None;
        self.client = None;
        self.consumed.clear();
        self.denied = false;
        self.q_idp =
            Some(self.ctx.ecqv_extract(&self.cfg.q_ca, &cert_idp).map_err(|_| AbortReason::CertificateInvalid)?);
        let n_idp = Nonce::from_slice(n_idp).unwrap();
        let n_sp = self.ctx.nonce();
        self.n_idp = Some(n_idp);
        self.n_sp = Some(n_sp);

        let own_cert = self.cfg.cert.to_bytes();
        let mut signed = Vec::with_capacity(2 * NONCE_LEN + IMPLICIT_CERT_LEN);
        signed.extend_from_slice(n_idp.as_bytes());
        signed.extend_from_slice(n_sp.as_bytes());
        signed.extend_from_slice(&own_cert);
        let sig = self.ctx.sign(&self.cfg.sk, &signed);

        let mut payload = Vec::with_capacity(IMPLICIT_CERT_LEN + NONCE_LEN + SIGNATURE_LEN);
        payload.extend_from_slice(&own_cert);
        payload.extend_from_slice(n_sp.as_bytes());
        payload.extend_from_slice(sig.as_bytes());
        let out = self.frame(self.cfg.idp, MessageType::CertificateResponse, payload);
        self.state = SpState::AwaitKey;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
        Ok(vec![out])
    }

    /// Step 2.3 in, 2.4 out: check the IdP's signature, unwrap `K_CS` and
    /// acknowledge with a signed fresh nonce bound to `n_IdP`.
    fn on_sp_key(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        if f.code != MessageType::SpKey.code() {
            return Err(AbortReason::UnexpectedMessage);
        }
        self.seq.check_rx(f.src, f.seq)?;
        let [ct, sig] = split_exact(&f.payload, [SP_KEY_CT_LEN, SIGNATURE_LEN])?;
        let (q_idp, n_sp, n_idp) = match (self.q_idp, self.n_sp, self.n_idp) {
            (Some(q), Some(s), Some(i)) => (q, s, i),
            _ => return Err(AbortReason::ProtocolOrder),
        };
        let mut signed = ct.to_vec();
        signed.extend_from_slice(n_sp.as_bytes());
        if !self.ctx.verify(&q_idp, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        let pt = self.ctx.ecies_decrypt(&self.cfg.sk, ct).map_err(|_| AbortReason::DecryptionFailure)?;
        let [k, client] = split_exact(&pt, [SESSION_KEY_LEN, 3])?;
        self.seq.accept_rx(f.src, f.seq);
        self.k_cs = Some(SymmetricKey::from_slice(k).unwrap());
        self.client = Some(EntityId::from_bytes(client.try_into().unwrap()));

        let ack = self.ctx.nonce();
        let mut signed = Vec::with_capacity(2 * NONCE_LEN);
        signed.extend_from_slice(ack.as_bytes());
        signed.extend_from_slice(n_idp.as_bytes());
        let sig = self.ctx.sign(&self.cfg.sk, &signed);
        let mut payload = ack.as_bytes().to_vec();
        payload.extend_from_slice(sig.as_bytes());
        let out = self.frame(self.cfg.idp, MessageType::KeyAcknowledgment, payload);
        self.state = SpState::KeyHeld;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
        Ok(vec![out])
    }

    /// Step 4.1 in, 4.2 out.
    fn on_service_request(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        if f.code != MessageType::ServiceRequest.code() {
            return Err(AbortReason::UnexpectedMessage);
        }
        self.seq.check_rx(f.src, f.seq)?;
        Ok(self.serve(f, clock))
    }

    fn serve(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let client = f.src;
        let Some(k_cs) = self.k_cs else {
            self.abort(AbortReason::ProtocolOrder, Some(client), clock);
            return Vec::new();
        };
        let pt = match self.ctx.unprotect(&k_cs, &f.payload, f.seq, Direction::ClientToSp) {
            Ok(pt) => pt,
            Err(_) if self.state == SpState::Done => {
                self.drop_frame(AbortReason::MacFailure, f, clock);
                return Vec::new();
            }
            Err(_) => {
                self.abort(AbortReason::MacFailure, Some(client), clock);
                return Vec::new();
            }
        };
        let Ok([assertion, n_c3]) = split_exact(&pt, [ASSERTION_LEN, NONCE_LEN]) else {
            self.abort(AbortReason::Malformed, Some(client), clock);
            return Vec::new();
        };
        if self.state != SpState::Done {
            self.seq.accept_rx(client, f.seq);
        }
        let verdict = self.check_assertion(assertion, client, clock);
        let status = if verdict.is_ok() { STATUS_GRANTED } else { STATUS_DENIED };
        let mut reply = vec![status];
        reply.extend_from_slice(n_c3);
        let seq = self.seq.next_tx(client);
        let payload = self.ctx.protect(&k_cs, &reply, seq, Direction::SpToClient).expect("payload sized to fit");
        let out = build_frame(MessageType::Service.code(), seq, self.cfg.id, client, payload);
        self.deadline = None;
        match verdict {
            Ok(()) => {
                self.consumed.insert(assertion.try_into().unwrap());
                self.state = SpState::Done;
                self.log.push(clock.now_ms, EventKind::Completed { peer: Some(client) });
            }
            Err(reason) => {
                self.denied = true;
                self.log.push(clock.now_ms, EventKind::Denied { reason, peer: client });
                self.state = SpState::Aborted(reason);
            }
        }
        vec![out]
    }

    fn check_assertion(&mut self, bytes: &[u8], client: EntityId, clock: Clock) -> Result<(), AbortReason> {
        let a = Assertion::from_bytes(bytes).map_err(|_| AbortReason::Malformed)?;
        let q_idp = self.q_idp.ok_or(AbortReason::ProtocolOrder)?;
        if !a.verify(&mut self.ctx, &q_idp) {
            return Err(AbortReason::BadSignature);
        }
        if a.sp_id != self.cfg.id || a.client_id != client {
            return Err(AbortReason::AssertionMismatch);
        }
        if Some(a.n_sp) != self.n_sp {
            return Err(AbortReason::NonceMismatch);
        }
        if a.expiry < clock.unix() {
            return Err(AbortReason::AssertionExpired);
        }
        if self.consumed.contains(bytes) {
            return Err(AbortReason::Replay);
        }
        Ok(())
    }
}

impl Node for Sp {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Sp
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.sp_on_message(&f, clock),
            Err(_) => {
                self.log
                    .push(clock.now_ms, EventKind::Dropped { reason: AbortReason::Malformed, src: None, code: None });
                Vec::new()
            }
        }
    }

    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        if let Some(d) = self.deadline {
            if d <= clock.now_ms && matches!(self.state, SpState::AwaitKey | SpState::KeyHeld) {
                self.abort(AbortReason::Timeout, None, clock);
            }
        }
        Vec::new()
    }

    fn deadline(&self) -> Option<u64> {
        self.deadline
    }

    fn ops(&self) -> OpCounters {
        self.ctx.ops
    }

    fn events(&self) -> &[NodeEvent] {
        self.log.as_slice()
    }

    fn progress(&self) -> Progress {
        match self.state {
            SpState::Done => Progress::Granted,
            SpState::Aborted(_) if self.denied => Progress::Denied,
            SpState::Aborted(r) => Progress::Failed(r),
            _ => Progress::Running,
        }
    }
}
