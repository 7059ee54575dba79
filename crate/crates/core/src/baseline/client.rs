use crate::crypto::{
    CryptoContext, CurvePoint, Direction, Nonce, OpCounters, PrivateKey, Signature, SymmetricKey, NONCE_LEN,
    SIGNATURE_LEN,
};
use crate::flat::{Assertion, ASSERTION_LEN, SESSION_KEY_LEN, STATUS_GRANTED};
use crate::node::{
    build_frame, check_echo, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook,
    Timers,
};
use crate::pki::{ExplicitCertificate, Role, EXPLICIT_CERT_LEN};
use crate::wire::{EntityId, Frame};

use super::{BaselineType, CLIENT_KEY_CT_LEN, CREDENTIAL_LEN, GRANT_CT_LEN};

#[derive(Debug, Clone, Copy)]
pub struct BaselineClientConfig {
    pub id: EntityId,
    pub idp: EntityId,
    pub sp: EntityId,
    pub q_ca: CurvePoint,
    pub cert: ExplicitCertificate,
    pub sk: PrivateKey,
    pub credential: [u8; CREDENTIAL_LEN],
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineClientState {
    Idle,
    AwaitRedirect,
    AwaitChallenge,
    AwaitAssertion,
    AwaitGrant,
    Done,
    Aborted(AbortReason),
}

pub struct BaselineClient {
    cfg: BaselineClientConfig,
    ctx: CryptoContext,
    state: BaselineClientState,
    seq: SeqBook,
    q_sp: Option<CurvePoint>,
    q_idp: Option<CurvePoint>,
    n_s: Option<Nonce>,
    n_c2: Option<Nonce>,
    n_c3: Option<Nonce>,
    k_cs: Option<SymmetricKey>,
    deadline: Option<u64>,
    log: EventLog,
}

impl BaselineClient {
    pub fn new(cfg: BaselineClientConfig, ctx: CryptoContext) -> Self {
        BaselineClient {
            cfg,
            ctx,
            state: BaselineClientState::Idle,
            seq: SeqBook::default(),
            q_sp: None,
            q_idp: None,
            n_s: None,
            n_c2: None,
            n_c3: None,
            k_cs: None,
            deadline: None,
            log: EventLog::default(),
        }
    }

    pub fn state(&self) -> BaselineClientState {
        self.state
    }

    pub fn session_key(&self) -> Option<SymmetricKey> {
        self.k_cs
    }

    /// b1: announce ourselves to the SP.
    pub fn baseline_client_start(&mut self, clock: Clock) -> Result<Vec<u8>, AbortReason> {
        if self.state != BaselineClientState::Idle {
            return Err(AbortReason::ProtocolOrder);
        }
        let mut payload = self.cfg.cert.to_bytes().to_vec();
        payload.extend_from_slice(&self.cfg.idp.to_bytes());
        let out = self.frame(self.cfg.sp, BaselineType::ServiceInit, payload);
        self.enter(BaselineClientState::AwaitRedirect, clock);
        Ok(out)
    }

    fn frame(&mut self, dst: EntityId, t: BaselineType, payload: Vec<u8>) -> Vec<u8> {
        build_frame(t.code(), self.seq.next_tx(dst), self.cfg.id, dst, payload)
    }

    fn enter(&mut self, state: BaselineClientState, clock: Clock) {
        self.state = state;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
    }

    fn abort(&mut self, reason: AbortReason, peer: Option<EntityId>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Aborted { reason, peer });
        self.state = BaselineClientState::Aborted(reason);
        self.deadline = None;
    }

    fn drop_frame(&mut self, reason: AbortReason, f: Option<&Frame>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: f.map(|f| f.src), code: f.map(|f| f.code) });
    }

    fn verify_peer_cert(
        &mut self,
        bytes: &[u8],
        id: EntityId,
        role: Role,
        clock: Clock,
    ) -> Result<CurvePoint, AbortReason> {
        let cert = ExplicitCertificate::from_bytes(bytes).map_err(|_| AbortReason::CertificateInvalid)?;
        if cert.identity.entity_id != id || cert.identity.role != role {
            return Err(AbortReason::CertificateInvalid);
        }
        if !self.ctx.explicit_verify(&self.cfg.q_ca, &cert, clock.unix()) {
            return Err(AbortReason::CertificateInvalid);
        }
        cert.public_key().map_err(|_| AbortReason::CertificateInvalid)
    }

    pub fn baseline_client_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let (expected_src, expected_type) = match self.state {
            BaselineClientState::AwaitRedirect => (self.cfg.sp, BaselineType::Redirect),
            BaselineClientState::AwaitChallenge => (self.cfg.idp, BaselineType::Challenge),
            BaselineClientState::AwaitAssertion => (self.cfg.idp, BaselineType::AssertionResponse),
            BaselineClientState::AwaitGrant => (self.cfg.sp, BaselineType::ServiceGrant),
            BaselineClientState::Idle | BaselineClientState::Done | BaselineClientState::Aborted(_) => {
                self.drop_frame(AbortReason::UnexpectedMessage, Some(f), clock);
                return Vec::new();
            }
        };
        if f.src != self.cfg.idp && f.src != self.cfg.sp {
            self.drop_frame(AbortReason::UnknownPeer, Some(f), clock);
            return Vec::new();
        }
        if f.src != expected_src || f.code != expected_type.code() {
            self.abort(AbortReason::UnexpectedMessage, Some(f.src), clock);
            return Vec::new();
        }
        let result = self.seq.check_rx(f.src, f.seq).and_then(|()| match expected_type {
            BaselineType::Redirect => self.on_redirect(f, clock),
            BaselineType::Challenge => self.on_challenge(f, clock),
            BaselineType::AssertionResponse => self.on_assertion(f, clock),
            _ => self.on_grant(f, clock),
        });
        match result {
            Ok(out) => {
                self.seq.accept_rx(f.src, f.seq);
                out.into_iter().collect()
            }
            Err(reason) => {
                self.abort(reason, Some(f.src), clock);
                Vec::new()
            }
        }
    }

    /// b2 in, b3 out.
    fn on_redirect(&mut self, f: &Frame, clock: Clock) -> Result<Option<Vec<u8>>, AbortReason> {
        let [cert, n_s] = split_exact(&f.payload, [EXPLICIT_CERT_LEN, NONCE_LEN])?;
        self.q_sp = Some(self.verify_peer_cert(cert, self.cfg.sp, Role::Sp, clock)?);
        let n_s = Nonce::from_slice(n_s).unwrap();
        let n_c2 = self.ctx.nonce();
        self.n_s = Some(n_s);
        self.n_c2 = Some(n_c2);
        let mut payload = self.cfg.sp.to_bytes().to_vec();
        payload.extend_from_slice(n_s.as_bytes());
        payload.extend_from_slice(n_c2.as_bytes());
        let out = self.frame(self.cfg.idp, BaselineType::AssertionRequest, payload);
        self.enter(BaselineClientState::AwaitChallenge, clock);
        Ok(Some(out))
    }

    /// b4 in, b5 out.
    fn on_challenge(&mut self, f: &Frame, clock: Clock) -> Result<Option<Vec<u8>>, AbortReason> {
        let [cert, n_i, sig] = split_exact(&f.payload, [EXPLICIT_CERT_LEN, NONCE_LEN, SIGNATURE_LEN])?;
        let q_idp = self.verify_peer_cert(cert, self.cfg.idp, Role::Idp, clock)?;
        let n_c2 = self.n_c2.ok_or(AbortReason::ProtocolOrder)?;
        let mut signed = n_i.to_vec();
        signed.extend_from_slice(n_c2.as_bytes());
        signed.extend_from_slice(&self.cfg.id.to_bytes());
        signed.extend_from_slice(&self.cfg.sp.to_bytes());
        if !self.ctx.verify(&q_idp, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        self.q_idp = Some(q_idp);

        let mut pt = self.cfg.credential.to_vec();
        pt.extend_from_slice(n_i);
        let ct = self.ctx.ecies_encrypt(&q_idp, &pt);
        let mut signed = ct.clone();
        signed.extend_from_slice(n_i);
        let sig = self.ctx.sign(&self.cfg.sk, &signed);
        let mut payload = ct;
        payload.extend_from_slice(sig.as_bytes());
        let out = self.frame(self.cfg.idp, BaselineType::Credentials, payload);
        self.enter(BaselineClientState::AwaitAssertion, clock);
        Ok(Some(out))
    }

    /// b6 in, b8 out.
    fn on_assertion(&mut self, f: &Frame, clock: Clock) -> Result<Option<Vec<u8>>, AbortReason> {
        let [assertion, ct] = split_exact(&f.payload, [ASSERTION_LEN, CLIENT_KEY_CT_LEN])?;
        let a = Assertion::from_bytes(assertion).map_err(|_| AbortReason::Malformed)?;
        let q_idp = self.q_idp.ok_or(AbortReason::ProtocolOrder)?;
        if !a.verify(&mut self.ctx, &q_idp) {
            return Err(AbortReason::BadSignature);
        }
        if a.client_id != self.cfg.id || a.sp_id != self.cfg.sp {
            return Err(AbortReason::AssertionMismatch);
        }
        if Some(a.n_sp) != self.n_s {
            return Err(AbortReason::NonceMismatch);
        }
        let pt = self.ctx.ecies_decrypt(&self.cfg.sk, ct).map_err(|_| AbortReason::DecryptionFailure)?;
        let [k, n] = split_exact(&pt, [SESSION_KEY_LEN, NONCE_LEN])?;
        check_echo(n, self.n_c2)?;
        let k_cs = SymmetricKey::from_slice(k).unwrap();
        self.k_cs = Some(k_cs);

        let n_c3 = self.ctx.nonce();
        self.n_c3 = Some(n_c3);
        let mut pt = assertion.to_vec();
        pt.extend_from_slice(n_c3.as_bytes());
        let seq = self.seq.next_tx(self.cfg.sp);
        let mut payload = self.ctx.protect(&k_cs, &pt, seq, Direction::ClientToSp).expect("payload sized to fit");
        let sig = self.ctx.sign(&self.cfg.sk, &payload);
        payload.extend_from_slice(sig.as_bytes());
        let out = build_frame(BaselineType::ServiceRequest.code(), seq, self.cfg.id, self.cfg.sp, payload);
        self.enter(BaselineClientState::AwaitGrant, clock);
        Ok(Some(out))
    }

    /// b9 in.
    fn on_grant(&mut self, f: &Frame, clock: Clock) -> Result<Option<Vec<u8>>, AbortReason> {
        let [ct, sig] = split_exact(&f.payload, [GRANT_CT_LEN, SIGNATURE_LEN])?;
        let q_sp = self.q_sp.ok_or(AbortReason::ProtocolOrder)?;
        if !self.ctx.verify(&q_sp, ct, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        let k_cs = self.k_cs.ok_or(AbortReason::ProtocolOrder)?;
        let pt = self.ctx.unprotect(&k_cs, ct, f.seq, Direction::SpToClient).map_err(|_| AbortReason::MacFailure)?;
        let [status, n] = split_exact(&pt, [1, NONCE_LEN])?;
        check_echo(n, self.n_c3)?;
        if status[0] != STATUS_GRANTED {
            return Err(AbortReason::AccessDenied);
        }
        self.state = BaselineClientState::Done;
        self.deadline = None;
        self.log.push(clock.now_ms, EventKind::Completed { peer: Some(self.cfg.sp) });
        Ok(None)
    }
}

impl Node for BaselineClient {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Client
    }

    fn start(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        match self.baseline_client_start(clock) {
            Ok(f) => vec![f],
            Err(reason) => {
                self.drop_frame(reason, None, clock);
                Vec::new()
            }
        }
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.baseline_client_on_message(&f, clock),
            Err(_) => {
                self.drop_frame(AbortReason::Malformed, None, clock);
                Vec::new()
            }
        }
    }

    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        if matches!(self.deadline, Some(d) if d <= clock.now_ms) {
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
            BaselineClientState::Done => Progress::Granted,
            BaselineClientState::Aborted(AbortReason::AccessDenied) => Progress::Denied,
            BaselineClientState::Aborted(r) => Progress::Failed(r),
            _ => Progress::Running,
        }
    }
}
