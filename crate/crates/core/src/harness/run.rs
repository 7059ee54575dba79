//! Executes scenarios and collects per-run metrics.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{BaselineClient, BaselineIdp, BaselineSp};
use crate::crypto::{CryptoContext, OpCounters};
use crate::flat::{Client, Idp, Sp};
use crate::node::{AbortReason, Clock, EventKind, Node, NodeEvent, Progress};
use crate::pki::Role;
use crate::transport::{
    udp_bind, InterceptContext, Interceptor, InterceptorAction, MemNetwork, TranscriptEntry, UdpEndpoint,
};
use crate::wire::{EntityId, Frame, MessageType, HEADER_LEN};

use super::material::{load_material, rogue_sp, Material, DEFAULT_ISSUED_AT};
use super::{Attack, HarnessError, Protocol, ScenarioConfig, Transport};

/// Simulated time after which a mem run is cut off.
const MEM_TIME_LIMIT_MS: u64 = 60_000;
/// Wall time after which a UDP run is cut off.
const UDP_TIME_LIMIT: Duration = Duration::from_secs(10);
/// Upper bound on how long a UDP role blocks before re-checking timers.
const UDP_POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMetrics {
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub tx_msgs: u64,
    pub rx_msgs: u64,
    pub ops: OpCounters,
    /// Time spent inside the role's handlers, transport waits excluded.
    pub wall_time_us: u64,
}

impl RoleMetrics {
    pub fn total_bytes(&self) -> u64 {
        self.tx_bytes + self.rx_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Granted,
    Denied,
    Aborted { role: Role, reason: AbortReason },
}

/// A node event tagged with the role that logged it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleEvent {
    pub role: Role,
    #[serde(flatten)]
    pub event: NodeEvent,
}

/// One frame as it went onto the wire (after the adversary acted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub time_ms: u64,
    pub code: u8,
    pub src: EntityId,
    pub dst: EntityId,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub protocol: Protocol,
    pub client: RoleMetrics,
    pub sp: RoleMetrics,
    pub idp: RoleMetrics,
    pub wall_time_us: u64,
    pub outcome: Outcome,
    pub restarts: u32,
    /// Earliest abort or dropped frame at any role.
    pub first_failure: Option<RoleEvent>,
    /// Denials the SP issued.
    pub attack_outcomes: Vec<RoleEvent>,
    pub wire: Vec<WireRecord>,
    /// SHA-256 over the wire transcript, for determinism checks.
    pub transcript_sha256: String,
}

impl RunMetrics {
    pub fn role(&self, role: Role) -> &RoleMetrics {
        match role {
            Role::Client => &self.client,
            Role::Sp => &self.sp,
            _ => &self.idp,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.client.total_bytes() + self.sp.total_bytes() + self.idp.total_bytes()
    }
}

/// Seed for one role in one run, independent across roles and runs.
pub fn derive_seed(seed: u64, run: usize, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"flat-harness/v1");
    h.update(seed.to_be_bytes());
    h.update((run as u64).to_be_bytes());
    h.update(tag.as_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

/// The adversary for each attack scenario. It reacts to frame type codes
/// only; it never sees role state.
struct Adversary {
    attack: Attack,
    service_request_index: Option<usize>,
    fired: bool,
}

impl Adversary {
    fn new(attack: Attack) -> Self {
        Adversary { attack, service_request_index: None, fired: false }
    }
}

/// Byte to flip for a tamper scenario on message type `t`: the first
/// ciphertext byte of protected payloads, otherwise a byte covered by the
/// signature the receiver checks.
pub fn tamper_offset(t: MessageType) -> usize {
    use crate::crypto::{IV_LEN, POINT_LEN};
    use crate::pki::IMPLICIT_CERT_LEN;
    HEADER_LEN
        + match t {
            MessageType::CertificateChallenge | MessageType::CertificateResponse => IMPLICIT_CERT_LEN,
            MessageType::SpKey => POINT_LEN,
            MessageType::KeyAcknowledgment => 0,
            _ => IV_LEN,
        }
}

impl Interceptor for Adversary {
    fn record_and_act(&mut self, frame: &[u8], ctx: &InterceptContext) -> InterceptorAction {
        let code = frame.first().copied().unwrap_or(0);
        match self.attack {
            Attack::None | Attack::FakeSp => InterceptorAction::Deliver,
            Attack::Tamper(t) if code == t.code() => InterceptorAction::Tamper { offset: tamper_offset(t), mask: 0x01 },
            Attack::Tamper(_) => InterceptorAction::Deliver,
            Attack::Drop if code == MessageType::ServiceRequest.code() && !self.fired => {
                self.fired = true;
                InterceptorAction::Drop
            }
            Attack::Drop => InterceptorAction::Deliver,
            Attack::Replay => {
                if code == MessageType::ServiceRequest.code() && self.service_request_index.is_none() {
                    self.service_request_index = Some(ctx.index);
                }
                match self.service_request_index {
                    Some(i) if code == MessageType::Service.code() && !self.fired => {
                        self.fired = true;
                        InterceptorAction::Replay(i)
                    }
                    _ => InterceptorAction::Deliver,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    tx_bytes: u64,
    rx_bytes: u64,
    tx_msgs: u64,
    rx_msgs: u64,
    busy: Duration,
}

/// Runs a node step, charging the elapsed time to its tally.
fn timed<T>(tally: &mut Tally, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    tally.busy += start.elapsed();
    out
}

fn build_nodes(cfg: &ScenarioConfig, m: &Material, run: usize) -> Result<[Box<dyn Node>; 3], HarnessError> {
    let t = cfg.timers;
    let ctx = |tag: &str| CryptoContext::from_seed(derive_seed(cfg.seed, run, tag));
    Ok(match cfg.protocol {
        Protocol::Flat => {
            let mut sp_cfg = m.flat_sp(t);
            if cfg.attack == Attack::FakeSp {
                let rogue = rogue_sp(m, derive_seed(cfg.seed, run, "rogue-ca"))?;
                sp_cfg.cert = rogue.implicit_cert;
                sp_cfg.sk = rogue.implicit_key;
            }
            [
                Box::new(Client::new(m.flat_client(0, t), ctx("client"))),
                Box::new(Sp::new(sp_cfg, ctx("sp"))),
                Box::new(Idp::new(m.flat_idp(t), ctx("idp"))),
            ]
        }
        Protocol::Baseline => [
            Box::new(BaselineClient::new(m.baseline_client(0, t), ctx("client"))),
            Box::new(BaselineSp::new(m.baseline_sp(t), ctx("sp"))),
            Box::new(BaselineIdp::new(m.baseline_idp(t), ctx("idp"))),
        ],
    })
}

struct RawRun {
    nodes: [Box<dyn Node>; 3],
    tallies: [Tally; 3],
    wire: Vec<WireRecord>,
    transcript: Vec<u8>,
    wall: Duration,
}

fn run_mem(mut nodes: [Box<dyn Node>; 3], cfg: &ScenarioConfig, epoch: u64) -> Result<RawRun, HarnessError> {
    let started = Instant::now();
    let mut net = MemNetwork::with_interceptor(cfg.latency_ms, Box::new(Adversary::new(cfg.attack)));
    let index: HashMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
    for n in &nodes {
        net.register(n.id())?;
    }
    let mut tallies = [Tally::default(); 3];
    let clock = Clock::new(epoch);

    let send = |net: &mut MemNetwork,
                tallies: &mut [Tally; 3],
                from: usize,
                frames: Vec<Vec<u8>>|
     -> Result<(), HarnessError> {
        for f in frames {
            let Some((_, src, dst)) = Frame::peek_route(&f) else { continue };
            tallies[from].tx_bytes += f.len() as u64;
            tallies[from].tx_msgs += 1;
            net.send(src, dst, f)?;
        }
        Ok(())
    };

    let out = timed(&mut tallies[0], || nodes[0].start(clock));
    send(&mut net, &mut tallies, 0, out)?;
    loop {
        if nodes[0].progress().is_settled() && net.is_idle() {
            break;
        }
        let next_deadline = nodes.iter().filter_map(|n| n.deadline()).min();
        let next_delivery = net.next_delivery_time();
        let fire_timers = match (next_deadline, next_delivery) {
            (None, None) => break,
            (Some(d), Some(t)) => d <= t,
            (Some(_), None) => true,
            (None, Some(_)) => false,
        };
        if fire_timers {
            let d = next_deadline.unwrap();
            if d > MEM_TIME_LIMIT_MS {
                break;
            }
            net.advance_to(d);
            let now = clock.at(net.now());
            for i in 0..nodes.len() {
                if nodes[i].deadline().is_some_and(|d| d <= now.now_ms) {
                    let out = timed(&mut tallies[i], || nodes[i].tick(now));
                    send(&mut net, &mut tallies, i, out)?;
                }
            }
        } else {
            if next_delivery.unwrap() > MEM_TIME_LIMIT_MS {
                break;
            }
            let (_, dst, bytes) = net.pop_next().expect("queue is non-empty");
            let i = index[&dst];
            tallies[i].rx_bytes += bytes.len() as u64;
            tallies[i].rx_msgs += 1;
            let now = clock.at(net.now());
            let out = timed(&mut tallies[i], || nodes[i].handle(&bytes, now));
            send(&mut net, &mut tallies, i, out)?;
        }
    }
    let wire = net.transcript().iter().map(wire_record).collect();
    let transcript = serde_json::to_vec(net.transcript()).expect("transcript serializes");
    Ok(RawRun { nodes, tallies, wire, transcript, wall: started.elapsed() })
}

fn wire_record(e: &TranscriptEntry) -> WireRecord {
    WireRecord { time_ms: e.time, code: e.hex.first().copied().unwrap_or(0), src: e.src, dst: e.dst, len: e.hex.len() }
}

/// Frames a role sent, each with its send time in run milliseconds.
type SentLog = Vec<(u64, Vec<u8>)>;

/// One UDP role's receive loop. Returns the node, its tally and what it
/// sent.
fn udp_role(
    mut node: Box<dyn Node>,
    ep: UdpEndpoint,
    book: &BTreeMap<EntityId, SocketAddr>,
    start: Instant,
    epoch: u64,
    stop: &AtomicBool,
    is_client: bool,
) -> Result<(Box<dyn Node>, Tally, SentLog), HarnessError> {
    let mut tally = Tally::default();
    let mut sent = Vec::new();
    let clock = |now: Instant| Clock::new(epoch).at(now.duration_since(start).as_millis() as u64);
    let mut out = if is_client { timed(&mut tally, || node.start(clock(Instant::now()))) } else { Vec::new() };
    loop {
        for f in out.drain(..) {
            let Some((_, _, dst)) = Frame::peek_route(&f) else { continue };
            let Some(addr) = book.get(&dst) else { continue };
            ep.send(*addr, &f)?;
            tally.tx_bytes += f.len() as u64;
            tally.tx_msgs += 1;
            sent.push((clock(Instant::now()).now_ms, f));
        }
        if is_client && node.progress().is_settled() {
            stop.store(true, Ordering::SeqCst);
        }
        if stop.load(Ordering::SeqCst) {
            break;
        }
        if start.elapsed() > UDP_TIME_LIMIT {
            stop.store(true, Ordering::SeqCst);
            break;
        }
        let now = clock(Instant::now());
        let wait = match node.deadline() {
            Some(d) if d <= now.now_ms => {
                out = timed(&mut tally, || node.tick(now));
                continue;
            }
            Some(d) => Duration::from_millis(d - now.now_ms).min(UDP_POLL),
            None => UDP_POLL,
        };
        if let Some(frame) = ep.recv(wait)? {
            tally.rx_bytes += frame.len() as u64;
            tally.rx_msgs += 1;
            let now = clock(Instant::now());
            out = timed(&mut tally, || node.handle(&frame, now));
        }
    }
    Ok((node, tally, sent))
}

fn run_udp(nodes: [Box<dyn Node>; 3], epoch: u64) -> Result<RawRun, HarnessError> {
    let eps = nodes.iter().map(|n| udp_bind(n.id(), "127.0.0.1:0")).collect::<Result<Vec<_>, _>>()?;
    let book: BTreeMap<EntityId, SocketAddr> =
        eps.iter().map(|e| Ok((e.entity_id, e.local_addr()?))).collect::<Result<_, HarnessError>>()?;
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let results = std::thread::scope(|s| {
        let handles: Vec<_> = nodes
            .into_iter()
            .zip(eps)
            .enumerate()
            .map(|(i, (node, ep))| {
                let (book, stop) = (&book, &stop);
                s.spawn(move || {
                    let r = udp_role(node, ep, book, start, epoch, stop, i == 0);
                    if r.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("UDP role thread panicked")).collect::<Vec<_>>()
    });
    let wall = start.elapsed();
    let mut nodes_out = Vec::new();
    let mut tallies = [Tally::default(); 3];
    let mut sent: Vec<(u64, usize, Vec<u8>)> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (node, tally, frames) = r?;
        nodes_out.push(node);
        tallies[i] = tally;
        sent.extend(frames.into_iter().map(|(t, f)| (t, i, f)));
    }
    sent.sort_by_key(|(t, i, _)| (*t, *i));
    let entries: Vec<TranscriptEntry> = sent
        .into_iter()
        .filter_map(|(time, _, f)| {
            let (_, src, dst) = Frame::peek_route(&f)?;
            Some(TranscriptEntry { time, src, dst, hex: f })
        })
        .collect();
    let nodes: [Box<dyn Node>; 3] = nodes_out.try_into().map_err(|_| HarnessError::Internal("lost a UDP role"))?;
    Ok(RawRun {
        nodes,
        tallies,
        wire: entries.iter().map(wire_record).collect(),
        transcript: serde_json::to_vec(&entries).expect("transcript serializes"),
        wall,
    })
}

fn tagged(nodes: &[Box<dyn Node>; 3]) -> Vec<RoleEvent> {
    let mut all: Vec<RoleEvent> =
        nodes.iter().flat_map(|n| n.events().iter().map(|e| RoleEvent { role: n.role(), event: e.clone() })).collect();
    // Stable, so same-time events keep Client, SP, IdP order.
    all.sort_by_key(|e| e.event.at_ms);
    all
}

fn outcome(client: Progress, events: &[RoleEvent]) -> Outcome {
    let completed =
        events.iter().any(|e| e.role == Role::Client && matches!(e.event.kind, EventKind::Completed { .. }));
    if completed {
        return Outcome::Granted;
    }
    if client == Progress::Denied {
        return Outcome::Denied;
    }
    events
        .iter()
        .find_map(|e| match e.event.kind {
            EventKind::Aborted { reason, .. } => Some(Outcome::Aborted { role: e.role, reason }),
            _ => None,
        })
        .unwrap_or(Outcome::Aborted { role: Role::Client, reason: AbortReason::Timeout })
}

fn metrics(run: usize, protocol: Protocol, raw: RawRun) -> RunMetrics {
    let role = |i: usize| {
        let t = raw.tallies[i];
        RoleMetrics {
            tx_bytes: t.tx_bytes,
            rx_bytes: t.rx_bytes,
            tx_msgs: t.tx_msgs,
            rx_msgs: t.rx_msgs,
            ops: raw.nodes[i].ops(),
            wall_time_us: t.busy.as_micros() as u64,
        }
    };
    let events = tagged(&raw.nodes);
    let restarts =
        events.iter().filter(|e| e.role == Role::Client && matches!(e.event.kind, EventKind::Restarted { .. })).count()
            as u32;
    let first_failure =
        events.iter().find(|e| matches!(e.event.kind, EventKind::Aborted { .. } | EventKind::Dropped { .. })).cloned();
    let attack_outcomes = events
        .iter()
        .filter(|e| e.role == Role::Sp && matches!(e.event.kind, EventKind::Denied { .. }))
        .cloned()
        .collect();
    RunMetrics {
        run,
        protocol,
        client: role(0),
        sp: role(1),
        idp: role(2),
        wall_time_us: raw.wall.as_micros() as u64,
        outcome: outcome(raw.nodes[0].progress(), &events),
        restarts,
        first_failure,
        attack_outcomes,
        wire: raw.wire,
        transcript_sha256: hex::encode(Sha256::digest(&raw.transcript)),
    }
}

/// Loads the scenario's material: from disk when a directory is given,
/// otherwise generated from the scenario seed.
pub fn scenario_material(cfg: &ScenarioConfig) -> Result<Material, HarnessError> {
    Ok(match &cfg.material {
        Some(dir) => load_material(dir)?,
        None => Material::generate(cfg.seed, 1, DEFAULT_ISSUED_AT)?,
    })
}

/// Runs `cfg.runs` independent sessions. Configuration and material errors
/// surface before any run starts; protocol failures are recorded in each
/// run's outcome.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>, HarnessError> {
    cfg.validate()?;
    let material = scenario_material(cfg)?;
    run_with_material(cfg, &material)
}

pub fn run_with_material(cfg: &ScenarioConfig, material: &Material) -> Result<Vec<RunMetrics>, HarnessError> {
    cfg.validate()?;
    let epoch = material.run_epoch();
    (0..cfg.runs)
        .map(|run| {
            let nodes = build_nodes(cfg, material, run)?;
            let raw = match cfg.transport {
                Transport::Mem => run_mem(nodes, cfg, epoch)?,
                Transport::Udp => run_udp(nodes, epoch)?,
            };
            Ok(metrics(run, cfg.protocol, raw))
        })
        .collect()
}
