//! Scenario runner: builds a federation, runs FLAT or the baseline over the
//! in-memory network or loopback UDP, optionally under attack, and turns
//! the runs into reports.

mod material;
mod report;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::flat::LAYOUT;
use crate::node::Timers;
use crate::transport::mem::DEFAULT_LATENCY_MS;
use crate::transport::TransportError;
use crate::wire::MessageType;

pub use material::{
    load_material, rogue_sp, save_material, setup_material, CaEntry, ClientMaterial, EntityEntry, Manifest, Material,
    MaterialError, ServerMaterial, DEFAULT_ISSUED_AT, DOMAIN_ID, IDP_ID, MANIFEST, SP_ID, VALIDITY_S,
};
pub use report::{
    compare, emit_report, emit_run_report, summarize, Claim, Deltas, Format, LayoutBytes, OpMeans, OutcomeCounts,
    Report, RoleSummary, RunReport, Scenario, Summary,
};
pub use run::{
    derive_seed, run_scenario, run_with_material, scenario_material, tamper_offset, Outcome, RoleEvent, RoleMetrics,
    RunMetrics, WireRecord,
};

/// Runs per scenario unless told otherwise, matching the usual practice of
/// averaging over 100 runs.
pub const DEFAULT_RUNS: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cannot compare: {0}")]
    Compare(String),
    #[error("internal error: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Flat,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Mem,
    Udp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Flat => "flat",
            Protocol::Baseline => "baseline",
        })
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Mem => "mem",
            Transport::Udp => "udp",
        })
    }
}

impl FromStr for Protocol {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Protocol::Flat),
            "baseline" => Ok(Protocol::Baseline),
            _ => Err(HarnessError::Config(format!("unknown protocol {s:?}"))),
        }
    }
}

impl FromStr for Transport {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mem" => Ok(Transport::Mem),
            "udp" => Ok(Transport::Udp),
            _ => Err(HarnessError::Config(format!("unknown transport {s:?}"))),
        }
    }
}

/// Short FLAT message label, `m1` through `m10`, numbered by position in an
/// honest run (which differs from type-code order).
pub fn message_label(t: MessageType) -> String {
    let pos = LAYOUT.iter().position(|r| r.msg == t).expect("every type appears in the layout");
    format!("m{}", pos + 1)
}

fn parse_message_label(s: &str) -> Option<MessageType> {
    let n: usize = s.strip_prefix('m')?.parse().ok()?;
    LAYOUT.get(n.checked_sub(1)?).map(|r| r.msg)
}

/// What the adversary on the in-memory network does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attack {
    None,
    /// Re-deliver the first service request to the SP once the service
    /// response goes out.
    Replay,
    /// Flip one bit in every frame of this type.
    Tamper(MessageType),
    /// The SP presents a certificate from a CA outside the federation.
    FakeSp,
    /// Lose the first service request.
    Drop,
}

impl Attack {
    /// The tamper scenario's default target.
    pub const DEFAULT_TAMPER: MessageType = MessageType::ClientKey;
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attack::None => f.write_str("none"),
            Attack::Replay => f.write_str("replay"),
            Attack::Tamper(t) => write!(f, "tamper:{}", message_label(*t)),
            Attack::FakeSp => f.write_str("fake-sp"),
            Attack::Drop => f.write_str("drop"),
        }
    }
}

impl FromStr for Attack {
    type Err = HarnessError;

    /// Accepts `none`, `replay`, `tamper` (targets m6), `tamper:mN`,
    /// `fake-sp` and `drop`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Attack::None),
            "replay" => Ok(Attack::Replay),
            "tamper" => Ok(Attack::Tamper(Attack::DEFAULT_TAMPER)),
            "fake-sp" => Ok(Attack::FakeSp),
            "drop" => Ok(Attack::Drop),
            _ => s
                .strip_prefix("tamper:")
                .and_then(parse_message_label)
                .map(Attack::Tamper)
                .ok_or_else(|| HarnessError::Config(format!("unknown attack {s:?}"))),
        }
    }
}

impl Serialize for Attack {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attack {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub transport: Transport,
    pub attack: Attack,
    pub seed: u64,
    pub runs: usize,
    /// Directory written by [`setup_material`]; `None` generates material
    /// from `seed`.
    pub material: Option<PathBuf>,
    pub timers: Timers,
    pub latency_ms: u64,
}

impl ScenarioConfig {
    pub fn new(protocol: Protocol, transport: Transport) -> Self {
        ScenarioConfig {
            protocol,
            transport,
            attack: Attack::None,
            seed: 0,
            runs: DEFAULT_RUNS,
            material: None,
            timers: Timers::default(),
            latency_ms: DEFAULT_LATENCY_MS,
        }
    }

    pub fn with_attack(mut self, attack: Attack) -> Self {
        self.attack = attack;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.attack != Attack::None && self.transport != Transport::Mem {
            return Err(HarnessError::Config("attack scenarios need the mem transport".into()));
        }
        if self.attack != Attack::None && self.protocol != Protocol::Flat {
            return Err(HarnessError::Config("attack scenarios are defined for FLAT only".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_strings_roundtrip() {
        let mut all = vec![Attack::None, Attack::Replay, Attack::FakeSp, Attack::Drop];
        all.extend(MessageType::ALL.into_iter().map(Attack::Tamper));
        for a in all {
            assert_eq!(a.to_string().parse::<Attack>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<Attack>(&json).unwrap(), a);
        }
        assert_eq!("tamper".parse::<Attack>().unwrap(), Attack::Tamper(MessageType::ClientKey));
        assert_eq!("tamper:m3".parse::<Attack>().unwrap(), Attack::Tamper(MessageType::CertificateResponse));
        assert_eq!(message_label(MessageType::ClientKey), "m6");
        assert_eq!(message_label(MessageType::Service), "m10");
        for bad in ["tamper:m0", "tamper:m11", "tamper:x", "flood", ""] {
            assert!(bad.parse::<Attack>().is_err(), "{bad}");
        }
    }

    #[test]
    fn validation() {
        let ok = ScenarioConfig::new(Protocol::Flat, Transport::Mem).with_attack(Attack::Replay);
        assert!(ok.validate().is_ok());
        assert!(ScenarioConfig::new(Protocol::Flat, Transport::Udp).with_attack(Attack::Drop).validate().is_err());
        assert!(ScenarioConfig::new(Protocol::Baseline, Transport::Mem)
            .with_attack(Attack::Replay)
            .validate()
            .is_err());
        assert!(ScenarioConfig::new(Protocol::Flat, Transport::Mem).with_runs(0).validate().is_err());
    }
}
