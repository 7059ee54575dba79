use std::collections::HashSet;

use crate::crypto::{
    CryptoContext, CurvePoint, Direction, Nonce, OpCounters, PrivateKey, Signature, SymmetricKey, NONCE_LEN,
    SIGNATURE_LEN,
};
use crate::flat::{Assertion, ASSERTION_LEN, SESSION_KEY_LEN, STATUS_DENIED, STATUS_GRANTED};
use crate::node::{
    build_frame, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook, Timers,
};
use crate::pki::{ExplicitCertificate, Role, EXPLICIT_CERT_LEN};
use crate::wire::{EntityId, Frame};

use super::{BaselineType, REQUEST_CT_LEN, SP_KEY_CT_LEN};

#[derive(Debug, Clone, Copy)]
pub struct BaselineSpConfig {
    pub id: EntityId,
    pub idp: EntityId,
    pub q_ca: CurvePoint,
    pub cert: ExplicitCertificate,
    pub sk: PrivateKey,
    /// The federation's IdP, known from setup.
    pub idp_cert: ExplicitCertificate,
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSpState {
    Idle,
    AwaitKey,
    KeyHeld,
    Done,
    Aborted(AbortReason),
}

pub struct BaselineSp {
    cfg: BaselineSpConfig,
    ctx: CryptoContext,
    state: BaselineSpState,
    seq: SeqBook,
    client: Option<EntityId>,
    q_client: Option<CurvePoint>,
    n_s: Option<Nonce>,
    k_cs: Option<SymmetricKey>,
    consumed: HashSet<[u8; ASSERTION_LEN]>,
    deadline: Option<u64>,
    denied: bool,
    log: EventLog,
}

impl BaselineSp {
    pub fn new(cfg: BaselineSpConfig, ctx: CryptoContext) -> Self {
        BaselineSp {
            cfg,
            ctx,
            state: BaselineSpState::Idle,
            seq: SeqBook::default(),
            client: None,
            q_client: None,
            n_s: None,
            k_cs: None,
            consumed: HashSet::new(),
            deadline: None,
            denied: false,
            log: EventLog::default(),
        }
    }

    pub fn state(&self) -> BaselineSpState {
        self.state
    }

    pub fn session_key(&self) -> Option<SymmetricKey> {
        self.k_cs
    }

    fn abort(&mut self, reason: AbortReason, peer: Option<EntityId>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Aborted { reason, peer });
        self.state = BaselineSpState::Aborted(reason);
        self.deadline = None;
    }

    fn drop_frame(&mut self, reason: AbortReason, f: &Frame, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: Some(f.src), code: Some(f.code) });
    }

    pub fn baseline_sp_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let init = f.code == BaselineType::ServiceInit.code() && f.src != self.cfg.idp;
        let result = match self.state {
            BaselineSpState::Idle | BaselineSpState::Done | BaselineSpState::Aborted(_) if init => {
                self.on_service_init(f, clock)
            }
            BaselineSpState::AwaitKey if f.src == self.cfg.idp && f.code == BaselineType::KeyDelivery.code() => {
                self.on_key_delivery(f, clock)
            }
            BaselineSpState::KeyHeld if Some(f.src) == self.client && f.code == BaselineType::ServiceRequest.code() => {
                self.on_service_request(f, clock)
            }
            BaselineSpState::AwaitKey | BaselineSpState::KeyHeld
                if f.src == self.cfg.idp || Some(f.src) == self.client =>
            {
                Err(AbortReason::UnexpectedMessage)
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

    /// b1 in, b2 out. A new init starts a new session.
    fn on_service_init(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [cert, idp] = split_exact(&f.payload, [EXPLICIT_CERT_LEN, 3])?;
        if EntityId::from_bytes(idp.try_into().unwrap()) != self.cfg.idp {
            return Err(AbortReason::UnknownPeer);
        }
        let cert = ExplicitCertificate::from_bytes(cert).map_err(|_| AbortReason::CertificateInvalid)?;
        if cert.identity.entity_id != f.src || cert.identity.role != Role::Client {
            return Err(AbortReason::CertificateInvalid);
        }
        if !self.ctx.explicit_verify(&self.cfg.q_ca, &cert, clock.unix()) {
            return Err(AbortReason::CertificateInvalid);
        }
        self.seq.accept_rx(f.src, f.seq);
        self.q_client = Some(cert.public_key().map_err(|_| AbortReason::CertificateInvalid)?);
        self.client = Some(f.src);
        self.k_cs = None;
        self.consumed.clear();
        self.denied = false;
        let n_s = self.ctx.nonce();
        self.n_s = Some(n_s);

        let mut payload = self.cfg.cert.to_bytes().to_vec();
        payload.extend_from_slice(n_s.as_bytes());
        let out = build_frame(BaselineType::Redirect.code(), self.seq.next_tx(f.src), self.cfg.id, f.src, payload);
        self.state = BaselineSpState::AwaitKey;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
        Ok(vec![out])
    }

    /// b7 in.
    fn on_key_delivery(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [ct, sig] = split_exact(&f.payload, [SP_KEY_CT_LEN, SIGNATURE_LEN])?;
        let q_idp = self.cfg.idp_cert.public_key().map_err(|_| AbortReason::CertificateInvalid)?;
        let n_s = self.n_s.ok_or(AbortReason::ProtocolOrder)?;
        let mut signed = ct.to_vec();
        signed.extend_from_slice(n_s.as_bytes());
        if !self.ctx.verify(&q_idp, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        let pt = self.ctx.ecies_decrypt(&self.cfg.sk, ct).map_err(|_| AbortReason::DecryptionFailure)?;
        let [k, client] = split_exact(&pt, [SESSION_KEY_LEN, 3])?;
        if Some(EntityId::from_bytes(client.try_into().unwrap())) != self.client {
            return Err(AbortReason::AssertionMismatch);
        }
        self.seq.accept_rx(f.src, f.seq);
        self.k_cs = Some(SymmetricKey::from_slice(k).unwrap());
        self.state = BaselineSpState::KeyHeld;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
        Ok(Vec::new())
    }

    /// b8 in, b9 out.
    fn on_service_request(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [ct, sig] = split_exact(&f.payload, [REQUEST_CT_LEN, SIGNATURE_LEN])?;
        let q_client = self.q_client.ok_or(AbortReason::ProtocolOrder)?;
        if !self.ctx.verify(&q_client, ct, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        let k_cs = self.k_cs.ok_or(AbortReason::ProtocolOrder)?;
        let pt = self.ctx.unprotect(&k_cs, ct, f.seq, Direction::ClientToSp).map_err(|_| AbortReason::MacFailure)?;
        let [assertion, n_c3] = split_exact(&pt, [ASSERTION_LEN, NONCE_LEN])?;
        self.seq.accept_rx(f.src, f.seq);

        let verdict = self.check_assertion(assertion, f.src, clock);
        let mut reply = vec![if verdict.is_ok() { STATUS_GRANTED } else { STATUS_DENIED }];
        reply.extend_from_slice(n_c3);
        let seq = self.seq.next_tx(f.src);
        let mut payload = self.ctx.protect(&k_cs, &reply, seq, Direction::SpToClient).expect("payload sized to fit");
        let sig = self.ctx.sign(&self.cfg.sk, &payload);
        payload.extend_from_slice(sig.as_bytes());
        let out = build_frame(BaselineType::ServiceGrant.code(), seq, self.cfg.id, f.src, payload);
        self.deadline = None;
        match verdict {
            Ok(()) => {
                self.consumed.insert(assertion.try_into().unwrap());
                self.state = BaselineSpState::Done;
                self.log.push(clock.now_ms, EventKind::Completed { peer: Some(f.src) });
            }
            Err(reason) => {
                self.denied = true;
                self.state = BaselineSpState::Aborted(reason);
                self.log.push(clock.now_ms, EventKind::Denied { reason, peer: f.src });
            }
        }
        Ok(vec![out])
    }

    fn check_assertion(&mut self, bytes: &[u8], client: EntityId, clock: Clock) -> Result<(), AbortReason> {
        let a = Assertion::from_bytes(bytes).map_err(|_| AbortReason::Malformed)?;
        let q_idp = self.cfg.idp_cert.public_key().map_err(|_| AbortReason::CertificateInvalid)?;
        if !a.verify(&mut self.ctx, &q_idp) {
            return Err(AbortReason::BadSignature);
        }
        if a.sp_id != self.cfg.id || a.client_id != client {
            return Err(AbortReason::AssertionMismatch);
        }
        if Some(a.n_sp) != self.n_s {
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

impl Node for BaselineSp {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Sp
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.baseline_sp_on_message(&f, clock),
            Err(_) => {
                self.log
                    .push(clock.now_ms, EventKind::Dropped { reason: AbortReason::Malformed, src: None, code: None });
                Vec::new()
            }
        }
    }

    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        if matches!(self.deadline, Some(d) if d <= clock.now_ms)
            && matches!(self.state, BaselineSpState::AwaitKey | BaselineSpState::KeyHeld)
        {
            self.abort(AbortReason::Timeout, None, clock);
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
            BaselineSpState::Done => Progress::Granted,
            BaselineSpState::Aborted(_) if self.denied => Progress::Denied,
            BaselineSpState::Aborted(r) => Progress::Failed(r),
            _ => Progress::Running,
        }
    }
}
