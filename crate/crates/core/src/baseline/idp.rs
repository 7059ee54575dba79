use std::collections::{BTreeMap, HashMap};

use subtle::ConstantTimeEq;

use crate::crypto::{CryptoContext, CurvePoint, Nonce, OpCounters, PrivateKey, Signature, NONCE_LEN, SIGNATURE_LEN};
use crate::flat::Assertion;
use crate::node::{
    build_frame, check_echo, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook,
    Timers, ASSERTION_LIFETIME_S,
};
use crate::pki::{ExplicitCertificate, Role};
use crate::wire::{EntityId, Frame};

use super::{BaselineType, CREDENTIAL_CT_LEN, CREDENTIAL_LEN};

/// What the IdP learned about a Client at registration.
#[derive(Debug, Clone, Copy)]
pub struct RegisteredClient {
    pub cert: ExplicitCertificate,
    pub credential: [u8; CREDENTIAL_LEN],
}

#[derive(Debug, Clone)]
pub struct BaselineIdpConfig {
    pub id: EntityId,
    pub cert: ExplicitCertificate,
    pub sk: PrivateKey,
    pub clients: HashMap<EntityId, RegisteredClient>,
    /// SPs in the federation, known from setup.
    pub sps: HashMap<EntityId, ExplicitCertificate>,
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineIdpPhase {
    AwaitCredentials,
    Done,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, Copy)]
struct Session {
    phase: BaselineIdpPhase,
    sp: EntityId,
    n_s: Nonce,
    n_c2: Nonce,
    n_i: Nonce,
    last_ms: u64,
}

/// One session per Client; a fresh assertion request replaces the old one.
pub struct BaselineIdp {
    cfg: BaselineIdpConfig,
    ctx: CryptoContext,
    seq: SeqBook,
    sessions: BTreeMap<EntityId, Session>,
    log: EventLog,
}

impl BaselineIdp {
    pub fn new(cfg: BaselineIdpConfig, ctx: CryptoContext) -> Self {
        BaselineIdp { cfg, ctx, seq: SeqBook::default(), sessions: BTreeMap::new(), log: EventLog::default() }
    }

    pub fn session_phase(&self, client: EntityId) -> Option<BaselineIdpPhase> {
        self.sessions.get(&client).map(|s| s.phase)
    }

    fn frame(&mut self, dst: EntityId, t: BaselineType, payload: Vec<u8>) -> Vec<u8> {
        build_frame(t.code(), self.seq.next_tx(dst), self.cfg.id, dst, payload)
    }

    fn drop_frame(&mut self, reason: AbortReason, f: &Frame, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: Some(f.src), code: Some(f.code) });
    }

    pub fn baseline_idp_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let Some(client) = self.cfg.clients.get(&f.src).copied() else {
            self.drop_frame(AbortReason::UnknownPeer, f, clock);
            return Vec::new();
        };
        let result = match BaselineType::from_code(f.code) {
            Some(BaselineType::AssertionRequest) => self.on_assertion_request(f, clock),
            Some(BaselineType::Credentials)
                if self.session_phase(f.src) == Some(BaselineIdpPhase::AwaitCredentials) =>
            {
                self.on_credentials(f, &client, clock)
            }
            _ => {
                self.drop_frame(AbortReason::UnexpectedMessage, f, clock);
                return Vec::new();
            }
        };
        match result {
            Ok(out) => out,
            Err(reason) => {
                if let Some(s) = self.sessions.get_mut(&f.src) {
                    s.phase = BaselineIdpPhase::Aborted(reason);
                    s.last_ms = clock.now_ms;
                }
                self.log.push(clock.now_ms, EventKind::Aborted { reason, peer: Some(f.src) });
                Vec::new()
            }
        }
    }

    /// b3 in, b4 out.
    fn on_assertion_request(&mut self, f: &Frame, clock: Clock) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [sp, n_s, n_c2] = split_exact(&f.payload, [3, NONCE_LEN, NONCE_LEN])?;
        let sp = EntityId::from_bytes(sp.try_into().unwrap());
        if !self.cfg.sps.contains_key(&sp) {
            return Err(AbortReason::UnknownPeer);
        }
        self.seq.accept_rx(f.src, f.seq);
        let n_i = self.ctx.nonce();
        self.sessions.insert(
            f.src,
            Session {
                phase: BaselineIdpPhase::AwaitCredentials,
                sp,
                n_s: Nonce::from_slice(n_s).unwrap(),
                n_c2: Nonce::from_slice(n_c2).unwrap(),
                n_i,
                last_ms: clock.now_ms,
            },
        );
        let mut signed = n_i.as_bytes().to_vec();
        signed.extend_from_slice(n_c2);
        signed.extend_from_slice(&f.src.to_bytes());
        signed.extend_from_slice(&sp.to_bytes());
        let sig = self.ctx.sign(&self.cfg.sk, &signed);
        let mut payload = self.cfg.cert.to_bytes().to_vec();
        payload.extend_from_slice(n_i.as_bytes());
        payload.extend_from_slice(sig.as_bytes());
        Ok(vec![self.frame(f.src, BaselineType::Challenge, payload)])
    }

    /// b5 in; b7 to the SP, then b6 to the Client.
    fn on_credentials(
        &mut self,
        f: &Frame,
        client: &RegisteredClient,
        clock: Clock,
    ) -> Result<Vec<Vec<u8>>, AbortReason> {
        self.seq.check_rx(f.src, f.seq)?;
        let [ct, sig] = split_exact(&f.payload, [CREDENTIAL_CT_LEN, SIGNATURE_LEN])?;
        let s = self.sessions[&f.src];
        let q_client = client.cert.public_key().map_err(|_| AbortReason::CertificateInvalid)?;
        let mut signed = ct.to_vec();
        signed.extend_from_slice(s.n_i.as_bytes());
        if !self.ctx.verify(&q_client, &signed, &Signature::from_slice(sig).unwrap()) {
            return Err(AbortReason::BadSignature);
        }
        let pt = self.ctx.ecies_decrypt(&self.cfg.sk, ct).map_err(|_| AbortReason::DecryptionFailure)?;
        let [cred, n_i] = split_exact(&pt, [CREDENTIAL_LEN, NONCE_LEN])?;
        check_echo(n_i, Some(s.n_i))?;
        if !bool::from(cred.ct_eq(&client.credential)) {
            return Err(AbortReason::AccessDenied);
        }
        self.seq.accept_rx(f.src, f.seq);

        let q_sp: CurvePoint = self.cfg.sps[&s.sp].public_key().map_err(|_| AbortReason::CertificateInvalid)?;
        let k_cs = self.ctx.fresh_key().to_bytes();

        let mut pt = k_cs.to_vec();
        pt.extend_from_slice(&f.src.to_bytes());
        let sp_ct = self.ctx.ecies_encrypt(&q_sp, &pt);
        let mut signed = sp_ct.clone();
        signed.extend_from_slice(s.n_s.as_bytes());
        let sig = self.ctx.sign(&self.cfg.sk, &signed);
        let mut sp_payload = sp_ct;
        sp_payload.extend_from_slice(sig.as_bytes());
        let to_sp = self.frame(s.sp, BaselineType::KeyDelivery, sp_payload);

        let expiry = clock.unix() + ASSERTION_LIFETIME_S;
        let assertion = Assertion::issue(&mut self.ctx, &self.cfg.sk, f.src, s.sp, s.n_s, expiry);
        let mut pt = k_cs.to_vec();
        pt.extend_from_slice(s.n_c2.as_bytes());
        let mut payload = assertion.to_bytes().to_vec();
        payload.extend_from_slice(&self.ctx.ecies_encrypt(&q_client, &pt));
        let to_client = self.frame(f.src, BaselineType::AssertionResponse, payload);

        let s = self.sessions.get_mut(&f.src).unwrap();
        s.phase = BaselineIdpPhase::Done;
        s.last_ms = clock.now_ms;
        self.log.push(clock.now_ms, EventKind::Completed { peer: Some(f.src) });
        Ok(vec![to_sp, to_client])
    }
}

impl Node for BaselineIdp {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Idp
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.baseline_idp_on_message(&f, clock),
            Err(_) => {
                self.log
                    .push(clock.now_ms, EventKind::Dropped { reason: AbortReason::Malformed, src: None, code: None });
                Vec::new()
            }
        }
    }

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
