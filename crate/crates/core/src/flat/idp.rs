use std::collections::{BTreeMap, HashMap};

use crate::crypto::{
    CryptoContext, CurvePoint, Direction, Nonce, OpCounters, PrivateKey, Signature, SymmetricKey, NONCE_LEN,
    SIGNATURE_LEN,
};
use crate::node::{
    build_frame, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook, Timers,
    ASSERTION_LIFETIME_S,
};
use crate::pki::{ImplicitCertificate, Role, IMPLICIT_CERT_LEN};
use crate::wire::{EntityId, Frame, MessageType};

use super::{Assertion, SESSION_KEY_LEN};

#[derive(Debug, Clone)]
pub struct IdpConfig {
    pub id: EntityId,
    pub q_ca: CurvePoint,
    pub cert: ImplicitCertificate,
    pub sk: PrivateKey,
    /// Client registry: pre-shared `K_CI` per client.
    pub clients: HashMap<EntityId, SymmetricKey>,
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdpPhase {
    AwaitCertResponse,
    AwaitAck,
    AwaitAssertionRequest,
    Done,
    Aborted(AbortReason),
}

#[derive(Debug, Clone)]
struct Session {
    phase: IdpPhase,
    n_c: Nonce,
    n_idp: Nonce,
    n_sp: Option<Nonce>,
    q_sp: Option<CurvePoint>,
    k_cs: Option<[u8; SESSION_KEY_LEN]>,
    last_ms: u64,
}

/// The IdP serves many sessions at once, one per `(client, sp)` pair. Each
/// call to [`Node::handle`] processes one frame to completion; callers that
/// share an IdP between delivery threads must serialize those calls (the
/// harness gives each IdP a single owning thread).
pub struct Idp {
    cfg: IdpConfig,
    ctx: CryptoContext,
    seq: SeqBook,
    sessions: BTreeMap<(EntityId, EntityId), Session>,
    log: EventLog,
}

impl Idp {
    pub fn new(cfg: IdpConfig, ctx: CryptoContext) -> Self {
        Idp { cfg, ctx, seq: SeqBook::default(), sessions: BTreeMap::new(), log: EventLog::default() }
    }

    pub fn session_phase(&self, client: EntityId, sp: EntityId) -> Option<IdpPhase> {
        self.sessions.get(&(client, sp)).map(|s| s.phase)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Every dropped frame and aborted session, in order.
    pub fn audit_log(&self) -> &[NodeEvent] {
        self.log.as_slice()
    }

    fn frame(&mut self, dst: EntityId, t: MessageType, payload: Vec<u8>) -> Vec<u8> {
        build_frame(t.code(), self.seq.next_tx(dst), self.cfg.id, dst, payload)
    }

    fn drop_frame(&mut self, reason: AbortReason, f: &Frame, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: Some(f.src), code: Some(f.code) });
    }

    /// Most recently active session of `sp` in `phase`.
    fn find_by_sp(&self, sp: EntityId, phase: IdpPhase) -> Option<(EntityId, EntityId)> {
        self.sessions
            .iter()
            .filter(|((_, s), sess)| *s == sp && sess.phase == phase)
            .max_by_key(|(_, sess)| sess.last_ms)
            .map(|(k, _)| *k)
    }

    fn find_by_client(&self, client: EntityId, phase: IdpPhase) -> Option<(EntityId, EntityId)> {
        self.sessions
            .iter()
            .filter(|((c, _), sess)| *c == client && sess.phase == phase)
            .max_by_key(|(_, sess)| sess.last_ms)
            .map(|(k, _)| *k)
    }

    pub fn idp_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let Ok(t) = MessageType::from_code(f.code) else {
            self.drop_frame(AbortReason::Malformed, f, clock);
            return Vec::new();
        };
        if t == MessageType::KeyRequest {
            return match self.on_key_request(f, clock) {
                Ok(out) => out,
                Err(reason) => {
                    self.log.push(clock.now_ms, EventKind::Aborted { reason, peer: Some(f.src) });
                    Vec::new()
                }
            };
        }
        let session = match t {
            MessageType::CertificateResponse => self.find_by_sp(f.src, IdpPhase::AwaitCertResponse),
            MessageType::KeyAcknowledgment => self.find_by_sp(f.src, IdpPhase::AwaitAck),
            MessageType::AssertionRequest if !self.cfg.clients.contains_key(&f.src) => {
                self.drop_frame(AbortReason::UnknownPeer, f, clock);
                return Vec::new();
            }
            MessageType::AssertionRequest => self.find_by_client(f.src, IdpPhase::AwaitAssertionRequest),
            _ => None,
        };
        let Some(key) = session else {
            self.drop_frame(AbortReason::UnexpectedMessage, f, clock);
            return Vec::new();
        };
        let result = match t {
            MessageType::CertificateResponse => self.on_certificate_response(key, f, clock),
            MessageType::KeyAcknowledgment => self.on_key_ack(key, f, clock),
            _ => self.on_assertion_request(key, f, clock),
        };
        match result {
            Ok(out) => out,
            Err(Failure::Drop(reason)) => {
                self.drop_frame(reason, f, clock);
                Vec::new()
            }
            Err(Failure::Abort(reason)) => {
                if let Some(s) = self.sessions.get_mut(&key) {
                    s.phase = IdpPhase::Aborted(reason);
                    s.last_ms = clock.now_ms;
                }
                self.log.push(clock.now_ms, EventKind::Aborted { reason, peer: Some(f.src) });
                Vec::new()
            }
        }
    }

    /// Step 1.1 in, 2.1 out. Unknown clients are dropped and audited.
    fn on_key_request(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        let Some(k_ci) = self.cfg.clients.get(&f.src).copied() else {
            self.drop_frame(AbortReason::UnknownPeer, f, clock);
            return Ok(Vec::new());
        };
        self.seq.check_rx(f.src, f.seq)?;
        let pt = self
            .ctx
            .unprotect(&k_ci, &f.payload, f.seq, Direction::ClientToIdp)
            .map_err(|_| AbortReason::MacFailure)?;
        self.seq.accept_rx(f.src, f.seq);
        let [sp, n_c] = split_exact(&pt, [3, NONCE_LEN])?;
        let sp = EntityId::from_bytes(sp.try_into().unwrap());
        let n_idp = self.ctx.nonce();
        self.sessions.insert(
            (f.src, sp),
            Session {
                phase: IdpPhase::AwaitCertResponse,
                n_c: Nonce::from_slice(n_c).unwrap(),
                n_idp,
                n_sp: None,
                q_sp: None,
                k_cs: None,
                last_ms: clock.now_ms,
            },
        );
        let mut payload = self.cfg.cert.to_bytes().to_vec();
        payload.extend_from_slice(n_idp.as_bytes());
        Ok(vec![self.frame(sp, MessageType::CertificateChallenge, payload)])
    }

    /// Step 2.2 in, 2.3 out. The SP's key is reconstructed from its implicit
    /// certificate; a certificate from any other CA yields a key under which
    /// the SP's signature cannot verify, and the session is abandoned.
    fn on_certificate_response(
        &mut self,
        key: (EntityId, EntityId),
        f: &Frame,
        clock: Clock,
    ) -> Result<Vec<Vec<u8>>, Failure> {
        self.seq.check_rx(f.src, f.seq).map_err(Failure::Drop)?;
        let [cert, n_sp, sig] = split_exact(&f.payload, [IMPLICIT_CERT_LEN, NONCE_LEN, SIGNATURE_LEN])?;
        let cert_sp = ImplicitCertificate::from_bytes(cert).map_err(|_| AbortReason::CertificateInvalid)?;
        let id = &cert_sp.identity;
        if id.entity_id != f.src || id.role != Role::Sp || !id.is_valid_at(clock.unix()) {
            return Err(AbortReason::CertificateInvalid.into());
        }
        let q_sp = self.ctx.ecqv_extract(&self.cfg.q_ca, &cert_sp).map_err(|_| AbortReason::CertificateInvalid)?;
        let n_idp = self.sessions[&key].n_idp;
        let mut signed = Vec::with_capacity(2 * NONCE_LEN + IMPLICIT_CERT_LEN);
        signed.extend_from_slice(n_idp.as_bytes());
        signed.extend_from_slice(n_sp);
        signed.extend_from_slice(cert);
        if !self.ctx.verify(&q_sp, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature.into());
        }
        self.seq.accept_rx(f.src, f.seq);

        let k_cs = self.ctx.fresh_key().to_bytes();
        let mut pt = k_cs.to_vec();
        pt.extend_from_slice(&key.0.to_bytes());
        let ct = self.ctx.ecies_encrypt(&q_sp, &pt);
        let mut signed = ct.clone();
        signed.extend_from_slice(n_sp);
        let sig = self.ctx.sign(&self.cfg.sk, &signed);
        let mut payload = ct;
        payload.extend_from_slice(sig.as_bytes());

        let s = self.sessions.get_mut(&key).unwrap();
        s.n_sp = Some(Nonce::from_slice(n_sp).unwrap());
        s.q_sp = Some(q_sp);
        s.k_cs = Some(k_cs);
        s.phase = IdpPhase::AwaitAck;
        s.last_ms = clock.now_ms;
        Ok(vec![self.frame(f.src, MessageType::SpKey, payload)])
    }

    /// Step 2.4 in, 1.2 out: only a confirmed SP key releases the key to
    /// the Client.
    fn on_key_ack(&mut self, key: (EntityId, EntityId), f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, Failure> {
        self.seq.check_rx(f.src, f.seq).map_err(Failure::Drop)?;
        let [ack, sig] = split_exact(&f.payload, [NONCE_LEN, SIGNATURE_LEN])?;
        let s = &self.sessions[&key];
        let (q_sp, n_idp, n_c, k_cs) = (s.q_sp.unwrap(), s.n_idp, s.n_c, s.k_cs.unwrap());
        let mut signed = ack.to_vec();
        signed.extend_from_slice(n_idp.as_bytes());
        if !self.ctx.verify(&q_sp, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature.into());
        }
        self.seq.accept_rx(f.src, f.seq);

        let client = key.0;
        let k_ci = self.cfg.clients[&client];
        let mut pt = k_cs.to_vec();
        pt.extend_from_slice(n_c.as_bytes());
        let seq = self.seq.next_tx(client);
        let payload = self.ctx.protect(&k_ci, &pt, seq, Direction::IdpToClient).expect("payload sized to fit");
        let s = self.sessions.get_mut(&key).unwrap();
        s.phase = IdpPhase::AwaitAssertionRequest;
        s.last_ms = clock.now_ms;
        Ok(vec![build_frame(MessageType::ClientKey.code(), seq, self.cfg.id, client, payload)])
    }

    /// Step 3.1 in, 3.2 out. The assertion carries the SP's `n_SP` so the SP
    /// can tie it to this session.
    fn on_assertion_request(
        &mut self,
        key: (EntityId, EntityId),
        f: &Frame,
        clock: Clock,
    ) -> Result<Vec<Vec<u8>>, Failure> {
        self.seq.check_rx(f.src, f.seq).map_err(Failure::Drop)?;
        let k_ci = self.cfg.clients[&f.src];
        let pt = self
            .ctx
            .unprotect(&k_ci, &f.payload, f.seq, Direction::ClientToIdp)
            .map_err(|_| AbortReason::MacFailure)?;
        self.seq.accept_rx(f.src, f.seq);
        let [n_c2, sp] = split_exact(&pt, [NONCE_LEN, 3])?;
        let (client, session_sp) = key;
        if EntityId::from_bytes(sp.try_into().unwrap()) != session_sp {
            return Err(AbortReason::AssertionMismatch.into());
        }
        let n_sp = self.sessions[&key].n_sp.unwrap();
        let expiry = clock.unix() + ASSERTION_LIFETIME_S;
        let assertion = Assertion::issue(&mut self.ctx, &self.cfg.sk, client, session_sp, n_sp, expiry);
        let mut out = assertion.to_bytes().to_vec();
        out.extend_from_slice(n_c2);
        let seq = self.seq.next_tx(client);
        let payload = self.ctx.protect(&k_ci, &out, seq, Direction::IdpToClient).expect("payload sized to fit");
        let s = self.sessions.get_mut(&key).unwrap();
        s.phase = IdpPhase::Done;
        s.last_ms = clock.now_ms;
        self.log.push(clock.now_ms, EventKind::Completed { peer: Some(client) });
        Ok(vec![build_frame(MessageType::Assertion.code(), seq, self.cfg.id, client, payload)])
    }
}

/// How a failed step affects the IdP: `Drop` discards the frame and leaves
/// the session as it was, `Abort` ends the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Drop(AbortReason),
    Abort(AbortReason),
}

impl From<AbortReason> for Failure {
    fn from(r: AbortReason) -> Self {
        Failure::Abort(r)
    }
}

impl Node for Idp {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Idp
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.idp_on_message(&f, clock),
            Err(_) => {
                self.log
                    .push(clock.now_ms, EventKind::Dropped { reason: AbortReason::Malformed, src: None, code: None });
                Vec::new()
            }
        }
    }

    /// Forgets sessions idle for longer than the configured GC interval.
    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        let gc = self.cfg.timers.session_gc_ms;
        self.sessions.retain(|_, s| s.last_ms + gc > clock.now_ms);
        Vec::new()
    }

    fn deadline(&self) -> Option<u64> {
        self.sessions.values().map(|s| s.last_ms + self.cfg.timers.session_gc_ms).min()
    }

    fn ops(&self) -> OpCounters {
        self.ctx.ops
    }

    fn events(&self) -> &[NodeEvent] {
        self.log.as_slice()
    }

    fn progress(&self) -> Progress {
        Progress::Running
    }
}
