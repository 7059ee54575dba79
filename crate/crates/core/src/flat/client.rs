use crate::crypto::{CryptoContext, Direction, Nonce, OpCounters, SymmetricKey, NONCE_LEN};
use crate::node::{
    build_frame, check_echo, split_exact, AbortReason, Clock, EventKind, EventLog, Node, NodeEvent, Progress, SeqBook,
    Timers,
};
use crate::pki::Role;
use crate::wire::{EntityId, Frame, MessageType};

use super::{ASSERTION_LEN, SESSION_KEY_LEN, STATUS_GRANTED};

#[derive(Debug, Clone, Copy)]
pub struct ClientConfig {
    pub id: EntityId,
    pub idp: EntityId,
    pub sp: EntityId,
    /// Pre-shared with the IdP.
    pub k_ci: SymmetricKey,
    pub timers: Timers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientState {
    Idle,
    AwaitKey,
    AwaitAssertion,
    AwaitService,
    Done,
    Aborted(AbortReason),
}

pub struct Client {
    cfg: ClientConfig,
    ctx: CryptoContext,
    state: ClientState,
    seq: SeqBook,
    k_cs: Option<SymmetricKey>,
    n_c: Option<Nonce>,
    n_c2: Option<Nonce>,
    n_c3: Option<Nonce>,
    assertion: Option<[u8; ASSERTION_LEN]>,
    deadline: Option<u64>,
    restarts: u32,
    log: EventLog,
}

impl Client {
    pub fn new(cfg: ClientConfig, ctx: CryptoContext) -> Self {
        Client {
            cfg,
            ctx,
            state: ClientState::Idle,
            seq: SeqBook::default(),
            k_cs: None,
            n_c: None,
            n_c2: None,
            n_c3: None,
            assertion: None,
            deadline: None,
            restarts: 0,
            log: EventLog::default(),
        }
    }

    pub fn state(&self) -> ClientState {
        self.state
    }

    pub fn session_key(&self) -> Option<SymmetricKey> {
        self.k_cs
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    /// Step 1.1: ask the IdP for a key to talk to the configured SP.
    pub fn client_start(&mut self, clock: Clock) -> Result<Vec<u8>, AbortReason> {
        if self.state != ClientState::Idle {
            return Err(AbortReason::ProtocolOrder);
        }
        Ok(self.key_request(clock))
    }

    fn key_request(&mut self, clock: Clock) -> Vec<u8> {
        self.k_cs = None;
        self.n_c2 = None;
        self.n_c3 = None;
        self.assertion = None;
        let n_c = self.ctx.nonce();
        self.n_c = Some(n_c);
        let mut pt = Vec::with_capacity(3 + NONCE_LEN);
        pt.extend_from_slice(&self.cfg.sp.to_bytes());
        pt.extend_from_slice(n_c.as_bytes());
        let frame = self.protected(self.cfg.idp, MessageType::KeyRequest, self.cfg.k_ci, Direction::ClientToIdp, &pt);
        self.enter(ClientState::AwaitKey, clock);
        frame
    }

    fn protected(&mut self, dst: EntityId, t: MessageType, key: SymmetricKey, dir: Direction, pt: &[u8]) -> Vec<u8> {
        let seq = self.seq.next_tx(dst);
        let payload = self.ctx.protect(&key, pt, seq, dir).expect("payload sized to fit");
        build_frame(t.code(), seq, self.cfg.id, dst, payload)
    }

    fn enter(&mut self, state: ClientState, clock: Clock) {
        self.state = state;
        self.deadline = Some(clock.now_ms + self.cfg.timers.await_ms);
    }

    fn abort(&mut self, reason: AbortReason, peer: Option<EntityId>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Aborted { reason, peer });
        self.state = ClientState::Aborted(reason);
        let recoverable = reason != AbortReason::AccessDenied && self.restarts < self.cfg.timers.max_restarts;
        self.deadline = recoverable.then_some(clock.now_ms + self.cfg.timers.await_ms);
    }

    fn drop_frame(&mut self, reason: AbortReason, f: Option<&Frame>, clock: Clock) {
        self.log.push(clock.now_ms, EventKind::Dropped { reason, src: f.map(|f| f.src), code: f.map(|f| f.code) });
    }

    /// Steps 1.2, 3.2 and 4.2. Returns the frame to send, if any.
    pub fn client_on_message(&mut self, f: &Frame, clock: Clock) -> Vec<Vec<u8>> {
        let (expected_src, expected_type) = match self.state {
            ClientState::AwaitKey => (self.cfg.idp, MessageType::ClientKey),
            ClientState::AwaitAssertion => (self.cfg.idp, MessageType::Assertion),
            ClientState::AwaitService => (self.cfg.sp, MessageType::Service),
            ClientState::Idle => {
                self.drop_frame(AbortReason::ProtocolOrder, Some(f), clock);
                return Vec::new();
            }
            ClientState::Done => {
                if self.seq.check_rx(f.src, f.seq).is_err() {
                    self.abort(AbortReason::Replay, Some(f.src), clock);
                    self.deadline = None;
                } else {
                    self.drop_frame(AbortReason::UnexpectedMessage, Some(f), clock);
                }
                return Vec::new();
            }
            ClientState::Aborted(_) => {
                self.drop_frame(AbortReason::UnexpectedMessage, Some(f), clock);
                return Vec::new();
            }
        };
        if f.src != self.cfg.idp && f.src != self.cfg.sp {
            self.drop_frame(AbortReason::UnknownPeer, Some(f), clock);
            return Vec::new();
        }
        match self.step(f, expected_src, expected_type, clock) {
            Ok(out) => out.into_iter().collect(),
            Err(reason) => {
                self.abort(reason, Some(f.src), clock);
                Vec::new()
            }
        }
    }

    fn step(
        &mut self,
        f: &Frame,
        expected_src: EntityId,
        expected_type: MessageType,
        clock: Clock,
    ) -> Result<Option<Vec<u8>>, AbortReason> {
        if f.src != expected_src || f.code != expected_type.code() {
            return Err(AbortReason::UnexpectedMessage);
        }
        self.seq.check_rx(f.src, f.seq)?;
        let (key, dir) = match expected_type {
            MessageType::Service => (self.k_cs.ok_or(AbortReason::ProtocolOrder)?, Direction::SpToClient),
            _ => (self.cfg.k_ci, Direction::IdpToClient),
        };
        let pt = self.ctx.unprotect(&key, &f.payload, f.seq, dir).map_err(|_| AbortReason::MacFailure)?;
        self.seq.accept_rx(f.src, f.seq);

        match expected_type {
            MessageType::ClientKey => {
                let [k, n] = split_exact(&pt, [SESSION_KEY_LEN, NONCE_LEN])?;
                check_echo(n, self.n_c)?;
                self.k_cs = Some(SymmetricKey::from_slice(k).map_err(|_| AbortReason::Malformed)?);
                let n_c2 = self.ctx.nonce();
                self.n_c2 = Some(n_c2);
                let mut out = Vec::with_capacity(NONCE_LEN + 3);
                out.extend_from_slice(n_c2.as_bytes());
                out.extend_from_slice(&self.cfg.sp.to_bytes());
                let frame = self.protected(
                    self.cfg.idp,
                    MessageType::AssertionRequest,
                    self.cfg.k_ci,
                    Direction::ClientToIdp,
                    &out,
                );
                self.enter(ClientState::AwaitAssertion, clock);
                Ok(Some(frame))
            }
            MessageType::Assertion => {
                let [assertion, n] = split_exact(&pt, [ASSERTION_LEN, NONCE_LEN])?;
                check_echo(n, self.n_c2)?;
                // The assertion is opaque here: the Client has no way to check
                // an IdP signature and relies on the authenticated channel.
                self.assertion = Some(assertion.try_into().unwrap());
                let n_c3 = self.ctx.nonce();
                self.n_c3 = Some(n_c3);
                let mut out = Vec::with_capacity(ASSERTION_LEN + NONCE_LEN);
                out.extend_from_slice(assertion);
                out.extend_from_slice(n_c3.as_bytes());
                let k_cs = self.k_cs.ok_or(AbortReason::ProtocolOrder)?;
                let frame = self.protected(self.cfg.sp, MessageType::ServiceRequest, k_cs, Direction::ClientToSp, &out);
                self.enter(ClientState::AwaitService, clock);
                Ok(Some(frame))
            }
            MessageType::Service => {
                let [status, n] = split_exact(&pt, [1, NONCE_LEN])?;
                check_echo(n, self.n_c3)?;
                if status[0] != STATUS_GRANTED {
                    return Err(AbortReason::AccessDenied);
                }
                self.state = ClientState::Done;
                self.deadline = None;
                self.log.push(clock.now_ms, EventKind::Completed { peer: Some(self.cfg.sp) });
                Ok(None)
            }
            _ => unreachable!("expected types are fixed above"),
        }
    }

    /// Await-state timeouts and delayed restarts after an abort.
    fn on_deadline(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        match self.state {
            ClientState::AwaitKey | ClientState::AwaitAssertion | ClientState::AwaitService => {
                self.abort(AbortReason::Timeout, None, clock);
                if self.deadline.is_some() {
                    self.restart(clock)
                } else {
                    Vec::new()
                }
            }
            ClientState::Aborted(_) => self.restart(clock),
            _ => {
                self.deadline = None;
                Vec::new()
            }
        }
    }

    fn restart(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        self.restarts += 1;
        self.log.push(clock.now_ms, EventKind::Restarted { attempt: self.restarts });
        vec![self.key_request(clock)]
    }
}

impl Node for Client {
    fn id(&self) -> EntityId {
        self.cfg.id
    }

    fn role(&self) -> Role {
        Role::Client
    }

    fn start(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        match self.client_start(clock) {
            Ok(f) => vec![f],
            Err(reason) => {
                self.drop_frame(reason, None, clock);
                Vec::new()
            }
        }
    }

    fn handle(&mut self, frame: &[u8], clock: Clock) -> Vec<Vec<u8>> {
        match Frame::decode(frame) {
            Ok(f) => self.client_on_message(&f, clock),
            Err(_) => {
                self.drop_frame(AbortReason::Malformed, None, clock);
                Vec::new()
            }
        }
    }

    fn tick(&mut self, clock: Clock) -> Vec<Vec<u8>> {
        match self.deadline {
            Some(d) if d <= clock.now_ms => self.on_deadline(clock),
            _ => Vec::new(),
        }
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
            ClientState::Done => Progress::Granted,
            ClientState::Aborted(AbortReason::AccessDenied) => Progress::Denied,
            ClientState::Aborted(r) if self.deadline.is_none() => Progress::Failed(r),
            _ => Progress::Running,
        }
    }
}
