//! Run summaries, comparisons and their JSON and table renderings.
//!
//! The JSON forms are the machine interface; their schemas live in
//! `schemas/` at the crate root. Tables are rendered from the same structs,
//! so both forms always carry the same numbers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baseline::baseline_layout_bytes;
use crate::flat::layout_bytes;
use crate::pki::Role;

use super::run::{Outcome, RoleMetrics, RunMetrics};
use super::{Attack, HarnessError, Protocol, ScenarioConfig, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

impl std::str::FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            _ => Err(HarnessError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

/// Mean operation counts per run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpMeans {
    pub sym_ops: f64,
    pub ecdsa_sign: f64,
    pub ecdsa_verify: f64,
    pub ecies_enc: f64,
    pub ecies_dec: f64,
    pub ecqv_extract: f64,
}

impl OpMeans {
    pub fn asymmetric(&self) -> f64 {
        self.ecdsa_sign + self.ecdsa_verify + self.ecies_enc + self.ecies_dec + self.ecqv_extract
    }
}

/// Per-role means over a set of runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleSummary {
    pub tx_bytes: f64,
    pub rx_bytes: f64,
    pub total_bytes: f64,
    pub tx_msgs: f64,
    pub rx_msgs: f64,
    pub ops: OpMeans,
    pub wall_time_us: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub granted: usize,
    pub denied: usize,
    pub aborted: usize,
}

/// Bytes per role that one honest run should move, from the protocol's
/// layout table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBytes {
    pub client: u64,
    pub sp: u64,
    pub idp: u64,
    pub total: u64,
}

impl LayoutBytes {
    pub fn for_protocol(p: Protocol) -> Self {
        let per_role = |r: Role| match p {
            Protocol::Flat => layout_bytes(r),
            Protocol::Baseline => baseline_layout_bytes(r),
        } as u64;
        let (client, sp, idp) = (per_role(Role::Client), per_role(Role::Sp), per_role(Role::Idp));
        // Every frame has one sender and one receiver among the three roles.
        LayoutBytes { client, sp, idp, total: (client + sp + idp) / 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: Protocol,
    pub runs: usize,
    pub outcomes: OutcomeCounts,
    pub client: RoleSummary,
    pub sp: RoleSummary,
    pub idp: RoleSummary,
    /// Mean bytes on the wire per run (each frame counted once).
    pub total_bytes: f64,
    pub layout: LayoutBytes,
}

/// Which scenario produced a [`RunReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub protocol: Protocol,
    pub transport: Transport,
    pub attack: Attack,
    pub seed: u64,
    pub runs: usize,
}

impl From<&ScenarioConfig> for Scenario {
    fn from(c: &ScenarioConfig) -> Self {
        Scenario { protocol: c.protocol, transport: c.transport, attack: c.attack, seed: c.seed, runs: c.runs }
    }
}

/// Output of `run`: the scenario, its summary and every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub summary: Summary,
    pub runs: Vec<RunMetrics>,
}

impl RunReport {
    pub fn new(cfg: &ScenarioConfig, runs: Vec<RunMetrics>) -> Result<Self, HarnessError> {
        Ok(RunReport { scenario: cfg.into(), summary: summarize(&runs)?, runs })
    }
}

/// Percentage change of `a` relative to `b`: negative when `a` is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub client: f64,
    pub sp: f64,
    pub idp: f64,
    pub total: f64,
}

/// A directional statement about `a` versus `b`, with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub description: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub a: Summary,
    pub b: Summary,
    pub deltas: Deltas,
    /// `b`'s mean Client handler time over `a`'s.
    pub client_time_ratio: f64,
    pub claims: Vec<Claim>,
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

fn role_summary(runs: &[RunMetrics], pick: impl Fn(&RunMetrics) -> &RoleMetrics) -> RoleSummary {
    let n = runs.len();
    let m = |f: &dyn Fn(&RoleMetrics) -> u64| mean(runs.iter().map(|r| f(pick(r)) as f64), n);
    RoleSummary {
        tx_bytes: m(&|r| r.tx_bytes),
        rx_bytes: m(&|r| r.rx_bytes),
        total_bytes: m(&|r| r.total_bytes()),
        tx_msgs: m(&|r| r.tx_msgs),
        rx_msgs: m(&|r| r.rx_msgs),
        ops: OpMeans {
            sym_ops: m(&|r| r.ops.sym_ops),
            ecdsa_sign: m(&|r| r.ops.ecdsa_sign),
            ecdsa_verify: m(&|r| r.ops.ecdsa_verify),
            ecies_enc: m(&|r| r.ops.ecies_enc),
            ecies_dec: m(&|r| r.ops.ecies_dec),
            ecqv_extract: m(&|r| r.ops.ecqv_extract),
        },
        wall_time_us: m(&|r| r.wall_time_us),
    }
}

/// Means over a non-empty set of runs of one protocol.
pub fn summarize(runs: &[RunMetrics]) -> Result<Summary, HarnessError> {
    let first = runs.first().ok_or_else(|| HarnessError::Compare("no runs".into()))?;
    if runs.iter().any(|r| r.protocol != first.protocol) {
        return Err(HarnessError::Compare("runs mix protocols".into()));
    }
    let mut outcomes = OutcomeCounts::default();
    for r in runs {
        match r.outcome {
            Outcome::Granted => outcomes.granted += 1,
            Outcome::Denied => outcomes.denied += 1,
            Outcome::Aborted { .. } => outcomes.aborted += 1,
        }
    }
    let n = runs.len();
    Ok(Summary {
        protocol: first.protocol,
        runs: n,
        outcomes,
        client: role_summary(runs, |r| &r.client),
        sp: role_summary(runs, |r| &r.sp),
        idp: role_summary(runs, |r| &r.idp),
        total_bytes: mean(runs.iter().map(|r| r.total_bytes() as f64 / 2.0), n),
        layout: LayoutBytes::for_protocol(first.protocol),
    })
}

fn pct(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        100.0 * (a - b) / b
    }
}

/// Compares two equally sized sets of runs. The claims read as statements
/// about `a` relative to `b`; they are written with `a` = FLAT and
/// `b` = baseline in mind.
pub fn compare(a: &[RunMetrics], b: &[RunMetrics]) -> Result<Report, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::Compare(format!("run counts differ: {} vs {}", a.len(), b.len())));
    }
    let (sa, sb) = (summarize(a)?, summarize(b)?);
    Ok(compare_summaries(sa, sb))
}

pub(crate) fn compare_summaries(a: Summary, b: Summary) -> Report {
    let deltas = Deltas {
        client: pct(a.client.total_bytes, b.client.total_bytes),
        sp: pct(a.sp.total_bytes, b.sp.total_bytes),
        idp: pct(a.idp.total_bytes, b.idp.total_bytes),
        total: pct(a.total_bytes, b.total_bytes),
    };
    let client_time_ratio =
        if a.client.wall_time_us > 0.0 { b.client.wall_time_us / a.client.wall_time_us } else { f64::INFINITY };
    let claims = vec![
        Claim {
            id: "client_bytes_reduction_55".into(),
            description: "a's Client moves at most 45% of b's Client bytes".into(),
            holds: a.client.total_bytes <= 0.45 * b.client.total_bytes,
        },
        Claim {
            id: "total_bytes_lower".into(),
            description: "a moves fewer bytes than b overall".into(),
            holds: a.total_bytes < b.total_bytes,
        },
        Claim {
            id: "idp_bytes_higher".into(),
            description: "a's IdP moves more bytes than b's".into(),
            holds: a.idp.total_bytes > b.idp.total_bytes,
        },
        Claim {
            id: "client_symmetric_only".into(),
            description: "a's Client performs no public-key operations".into(),
            holds: a.client.ops.asymmetric() == 0.0,
        },
        Claim {
            id: "client_time_10x".into(),
            description: "a's Client spends at most a tenth of b's Client handler time".into(),
            holds: 10.0 * a.client.wall_time_us <= b.client.wall_time_us,
        },
    ];
    Report { a, b, deltas, client_time_ratio, claims }
}

/// Numbers in tables use this many decimals.
pub const TABLE_DECIMALS: usize = 2;

fn fmt_num(x: f64) -> String {
    format!("{x:.TABLE_DECIMALS$}")
}

fn traffic_table(out: &mut String, s: &Summary) {
    let _ = writeln!(
        out,
        "{:<8} {:>10} {:>10} {:>10} {:>8} {:>8} {:>10}",
        "role", "Tx", "Rx", "Total", "TxMsg", "RxMsg", "layout"
    );
    for (name, r, layout) in
        [("Client", &s.client, s.layout.client), ("SP", &s.sp, s.layout.sp), ("IdP", &s.idp, s.layout.idp)]
    {
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>10} {:>10} {:>8} {:>8} {:>10}",
            name,
            fmt_num(r.tx_bytes),
            fmt_num(r.rx_bytes),
            fmt_num(r.total_bytes),
            fmt_num(r.tx_msgs),
            fmt_num(r.rx_msgs),
            layout
        );
    }
    let _ = writeln!(out, "{:<8} {:>32} {:>28}", "wire", fmt_num(s.total_bytes), s.layout.total);
}

fn ops_table(out: &mut String, s: &Summary) {
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>12}",
        "role", "sym", "sign", "verify", "enc", "dec", "extract", "time_us"
    );
    for (name, r) in [("Client", &s.client), ("SP", &s.sp), ("IdP", &s.idp)] {
        let o = &r.ops;
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>12}",
            name,
            fmt_num(o.sym_ops),
            fmt_num(o.ecdsa_sign),
            fmt_num(o.ecdsa_verify),
            fmt_num(o.ecies_enc),
            fmt_num(o.ecies_dec),
            fmt_num(o.ecqv_extract),
            fmt_num(r.wall_time_us)
        );
    }
}

fn summary_table(out: &mut String, s: &Summary) {
    let _ = writeln!(
        out,
        "{} ({} runs): granted {}, denied {}, aborted {}",
        s.protocol, s.runs, s.outcomes.granted, s.outcomes.denied, s.outcomes.aborted
    );
    let _ = writeln!(out, "\nBytes per run (mean)");
    traffic_table(out, s);
    let _ = writeln!(out, "\nCrypto operations per run (mean)");
    ops_table(out, s);
}

pub fn emit_report(r: &Report, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(r).expect("reports always serialize"),
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "== a ==");
            summary_table(&mut out, &r.a);
            let _ = writeln!(out, "\n== b ==");
            summary_table(&mut out, &r.b);
            let _ = writeln!(out, "\n== a vs b (change in bytes) ==");
            let d = &r.deltas;
            let _ = writeln!(out, "{:<8} {:>10}%", "Client", fmt_num(d.client));
            let _ = writeln!(out, "{:<8} {:>10}%", "SP", fmt_num(d.sp));
            let _ = writeln!(out, "{:<8} {:>10}%", "IdP", fmt_num(d.idp));
            let _ = writeln!(out, "{:<8} {:>10}%", "wire", fmt_num(d.total));
            let _ = writeln!(out, "client time ratio (b/a): {}", fmt_num(r.client_time_ratio));
            let _ = writeln!(out, "\nClaims");
            for c in &r.claims {
                let _ = writeln!(out, "[{}] {}: {}", if c.holds { "holds" } else { "fails" }, c.id, c.description);
            }
            out
        }
    }
}

pub fn emit_run_report(r: &RunReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(r).expect("reports always serialize"),
        Format::Table => {
            let mut out = String::new();
            let s = &r.scenario;
            let _ = writeln!(
                out,
                "scenario: protocol={} transport={} attack={} seed={} runs={}",
                s.protocol, s.transport, s.attack, s.seed, s.runs
            );
            summary_table(&mut out, &r.summary);
            let restarts: u32 = r.runs.iter().map(|m| m.restarts).sum();
            let denials: usize = r.runs.iter().map(|m| m.attack_outcomes.len()).sum();
            let _ = writeln!(out, "\nrestarts: {restarts}, SP denials: {denials}");
            if let Some(m) = r.runs.iter().find(|m| m.outcome != Outcome::Granted) {
                let _ = writeln!(out, "first non-granted run: #{} {:?}", m.run, m.outcome);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OpCounters;

    fn run(protocol: Protocol, client: u64, sp: u64, idp: u64, time: u64) -> RunMetrics {
        let role = |bytes: u64, wall_time_us: u64| RoleMetrics {
            tx_bytes: bytes / 2,
            rx_bytes: bytes - bytes / 2,
            tx_msgs: 3,
            rx_msgs: 3,
            ops: OpCounters::default(),
            wall_time_us,
        };
        RunMetrics {
            run: 0,
            protocol,
            client: role(client, time),
            sp: role(sp, 1),
            idp: role(idp, 1),
            wall_time_us: 10,
            outcome: Outcome::Granted,
            restarts: 0,
            first_failure: None,
            attack_outcomes: vec![],
            wire: vec![],
            transcript_sha256: String::new(),
        }
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let a = vec![run(Protocol::Flat, 577, 735, 888, 5); 3];
        let r = compare(&a, &a).unwrap();
        assert_eq!(r.deltas, Deltas { client: 0.0, sp: 0.0, idp: 0.0, total: 0.0 });
        assert_eq!(r.client_time_ratio, 1.0);
    }

    #[test]
    fn compare_requires_matching_nonempty_sets() {
        let a = vec![run(Protocol::Flat, 1, 1, 1, 1); 2];
        assert!(matches!(compare(&a, &a[..1]), Err(HarnessError::Compare(_))));
        assert!(matches!(compare(&[], &[]), Err(HarnessError::Compare(_))));
        let mixed = vec![run(Protocol::Flat, 1, 1, 1, 1), run(Protocol::Baseline, 1, 1, 1, 1)];
        assert!(compare(&mixed, &mixed).is_err());
    }

    #[test]
    fn deltas_and_claims_from_layout_numbers() {
        let a = vec![run(Protocol::Flat, 577, 735, 888, 10)];
        let b = vec![run(Protocol::Baseline, 1325, 824, 851, 1000)];
        let r = compare(&a, &b).unwrap();
        // Independent arithmetic on the raw numbers.
        assert!((r.deltas.client - (577.0 - 1325.0) / 1325.0 * 100.0).abs() < 1e-9);
        assert!((r.deltas.total - (1100.0 - 1500.0) / 1500.0 * 100.0).abs() < 1e-9);
        assert!(r.claims.iter().all(|c| c.holds), "{:?}", r.claims);
        assert_eq!(r.a.layout, LayoutBytes { client: 577, sp: 735, idp: 888, total: 1100 });
        assert_eq!(r.b.layout, LayoutBytes { client: 1325, sp: 824, idp: 851, total: 1500 });
    }

    #[test]
    fn table_and_json_carry_the_same_numbers() {
        let a = vec![run(Protocol::Flat, 577, 735, 888, 7), run(Protocol::Flat, 578, 736, 889, 9)];
        let b = vec![run(Protocol::Baseline, 1325, 824, 851, 700); 2];
        let r = compare(&a, &b).unwrap();
        let table = emit_report(&r, Format::Table);
        let json: serde_json::Value = serde_json::from_str(&emit_report(&r, Format::Json)).unwrap();
        for key in ["client", "sp", "idp"] {
            for field in ["tx_bytes", "rx_bytes", "total_bytes"] {
                let v = json["a"][key][field].as_f64().unwrap();
                assert!(table.contains(&format!("{v:.2}")), "{key}.{field}={v} missing from table");
            }
        }
        for row in ["Client", "SP", "IdP"] {
            assert!(table.lines().any(|l| l.starts_with(row)));
        }
        assert!(table.contains("Tx") && table.contains("Rx") && table.contains("Total"));
    }
}
