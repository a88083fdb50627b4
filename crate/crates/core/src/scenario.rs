// SPDX-License-Identifier: Apache-2.0

//! Simulation scenarios: versioned JSON, every field defaulted, validated
//! before a run.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{ProtocolParams, Timeouts};
use crate::incentives::EconomyParams;
use crate::pbft::max_faulty;
use crate::sortition::CommitteeParams;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// The delay bound holds from time zero.
    #[default]
    Strong,
    /// The delay bound holds only after `gst_ms`.
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkModel {
    pub mode: SyncMode,
    /// Upper bound on message delay once the network is synchronous.
    pub delta_ms: u64,
    pub min_delay_ms: u64,
    pub gst_ms: u64,
    /// Largest delay drawn before GST; deliveries are still capped at `gst + delta`.
    pub pre_gst_max_delay_ms: u64,
    /// Processing speed spread: each node is assigned a multiplier in `1..=phi`.
    pub phi: u64,
    pub drop_rate: f64,
    pub duplicate_rate: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            mode: SyncMode::Strong,
            delta_ms: 100,
            min_delay_ms: 10,
            gst_ms: 0,
            pre_gst_max_delay_ms: 4000,
            phi: 1,
            drop_rate: 0.0,
            duplicate_rate: 0.0,
        }
    }
}

impl NetworkModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.delta_ms == 0 {
            return Err("network.delta_ms must be positive".into());
        }
        if self.min_delay_ms > self.delta_ms {
            return Err("network.min_delay_ms exceeds delta_ms".into());
        }
        if self.pre_gst_max_delay_ms < self.min_delay_ms {
            return Err("network.pre_gst_max_delay_ms is below min_delay_ms".into());
        }
        if self.phi == 0 {
            return Err("network.phi must be at least 1".into());
        }
        for (name, r) in [("drop_rate", self.drop_rate), ("duplicate_rate", self.duplicate_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(format!("network.{name} must be in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Whether the delay bound holds for a message sent at `t`.
    pub fn synchronous_at(&self, t: u64) -> bool {
        self.mode == SyncMode::Strong || t >= self.gst_ms
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionScript {
    pub groups: Vec<Vec<u32>>,
    pub start_ms: u64,
    pub heal_ms: u64,
}

impl PartitionScript {
    pub fn group_of(&self, node: u32) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&node))
    }

    /// Whether a message sent at `t` between the two nodes is cut.
    pub fn cuts(&self, t: u64, a: u32, b: u32) -> bool {
        t >= self.start_ms && t < self.heal_ms && self.group_of(a) != self.group_of(b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    Crash,
    Equivocate,
    WithholdVotes,
    DelayMax,
    SelfishPack,
    Partition(PartitionScript),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Crash => "crash",
            Strategy::Equivocate => "equivocate",
            Strategy::WithholdVotes => "withhold_votes",
            Strategy::DelayMax => "delay_max",
            Strategy::SelfishPack => "selfish_pack",
            Strategy::Partition(_) => "partition",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySpec {
    pub strategy: Strategy,
    /// Explicit corrupted node ids.
    pub corrupted: Vec<u32>,
    /// Additional corrupted nodes drawn from the seed.
    pub random_corrupt: u32,
    pub seed: Option<u64>,
    pub crash_at_ms: u64,
    /// Permits more than `(n - 1) / 3` corrupted nodes, for attack demonstrations.
    pub allow_over_threshold: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    pub tx_per_round: u32,
    pub tx_size: u32,
    /// Sizes are drawn from `tx_size ± size_jitter`.
    pub size_jitter: u32,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            tx_per_round: 8,
            tx_size: 536,
            size_jitter: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_nodes")]
    pub n_all: u32,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default)]
    pub seed: u64,
    /// Omitted means every node sits on both committees.
    #[serde(default)]
    pub committee: Option<CommitteeParams>,
    #[serde(default)]
    pub timeouts: Timeouts,
    #[serde(default = "default_block_bytes")]
    pub max_block_bytes: u64,
    #[serde(default = "default_processing")]
    pub processing_ms: u64,
    #[serde(default)]
    pub network: NetworkModel,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub economy: EconomyParams,
    /// Defaults to a bound derived from the round count.
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
    #[serde(default)]
    pub trace_path: Option<String>,
    #[serde(default)]
    pub report_path: Option<String>,
}

fn default_nodes() -> u32 {
    16
}

fn default_rounds() -> u64 {
    10
}

fn default_block_bytes() -> u64 {
    ProtocolParams::default().max_block_bytes
}

fn default_processing() -> u64 {
    ProtocolParams::default().processing_ms
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            version: SCENARIO_VERSION,
            name: String::new(),
            n_all: default_nodes(),
            rounds: default_rounds(),
            seed: 0,
            committee: None,
            timeouts: Timeouts::default(),
            max_block_bytes: default_block_bytes(),
            processing_ms: default_processing(),
            network: NetworkModel::default(),
            adversary: AdversarySpec::default(),
            workload: Workload::default(),
            economy: EconomyParams::default(),
            time_limit_ms: None,
            trace_path: None,
            report_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted path of the offending field, empty for whole-document errors.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "field `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

impl Scenario {
    /// Parses, resolves defaults and validates.
    pub fn from_json(text: &str) -> Result<Scenario, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut s: Scenario = serde_path_to_error::deserialize(de)
            .map_err(|e| invalid(&e.path().to_string(), e.inner().to_string()))?;
        s.resolve();
        s.validate()?;
        Ok(s)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Replaces implicit defaults with explicit values.
    pub fn resolve(&mut self) {
        if self.committee.is_none() {
            let n = self.n_all.max(1);
            self.committee = Some(CommitteeParams {
                n_pc: n,
                n_fc: n,
                n_valid_leaders: 3.min(n),
                n_empty_leaders: 3.min(n),
            });
        }
        if self.time_limit_ms.is_none() {
            self.time_limit_ms = Some(self.default_time_limit());
        }
    }

    fn default_time_limit(&self) -> u64 {
        let per_round = self.timeouts.round_bound() + self.processing_ms * self.network.phi + self.network.delta_ms;
        let gst = if self.network.mode == SyncMode::Partial { self.network.gst_ms } else { 0 };
        gst + (self.rounds + 10) * per_round * 2
    }

    pub fn committee(&self) -> CommitteeParams {
        self.committee.expect("resolved scenario")
    }

    pub fn protocol(&self) -> ProtocolParams {
        ProtocolParams {
            committee: self.committee(),
            timeouts: self.timeouts,
            max_block_bytes: self.max_block_bytes,
            processing_ms: self.processing_ms,
        }
    }

    pub fn time_limit(&self) -> u64 {
        self.time_limit_ms.unwrap_or_else(|| self.default_time_limit())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid("version", format!("unsupported version {}, expected {SCENARIO_VERSION}", self.version)));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be positive"));
        }
        if self.processing_ms == 0 {
            return Err(invalid("processing_ms", "must be positive"));
        }
        if self.max_block_bytes == 0 {
            return Err(invalid("max_block_bytes", "must be positive"));
        }
        if self.n_all > 0 {
            self.committee().validate(self.n_all).map_err(|m| invalid("committee", m))?;
        }
        self.timeouts.validate().map_err(|m| invalid("timeouts", m))?;
        self.network.validate().map_err(|m| invalid("network", m))?;
        self.economy.validate().map_err(|m| invalid("economy", m))?;
        if self.workload.tx_size == 0 || self.workload.size_jitter >= self.workload.tx_size {
            return Err(invalid("workload", "tx_size must be positive and exceed size_jitter"));
        }
        self.validate_adversary()
    }

    fn validate_adversary(&self) -> Result<(), ConfigError> {
        let adv = &self.adversary;
        let mut ids = BTreeSet::new();
        for &id in &adv.corrupted {
            if id >= self.n_all {
                return Err(invalid("adversary.corrupted", format!("node {id} does not exist")));
            }
            if !ids.insert(id) {
                return Err(invalid("adversary.corrupted", format!("node {id} listed twice")));
            }
        }
        let total = adv.corrupted.len() as u64 + adv.random_corrupt as u64;
        if total > self.n_all as u64 {
            return Err(invalid("adversary.random_corrupt", "more corrupted nodes than nodes"));
        }
        if !adv.allow_over_threshold && total > max_faulty(self.n_all) as u64 {
            return Err(invalid(
                "adversary",
                format!("{total} corrupted nodes exceed the tolerated {}; set allow_over_threshold", max_faulty(self.n_all)),
            ));
        }
        if total > 0 && adv.strategy == Strategy::None {
            return Err(invalid("adversary.strategy", "corrupted nodes need a strategy"));
        }
        if let Strategy::Partition(p) = &adv.strategy {
            if p.heal_ms <= p.start_ms {
                return Err(invalid("adversary.strategy.partition.heal_ms", "must be after start_ms"));
            }
            let mut seen = BTreeSet::new();
            for g in &p.groups {
                for &id in g {
                    if id >= self.n_all || !seen.insert(id) {
                        return Err(invalid("adversary.strategy.partition.groups", format!("bad or repeated node {id}")));
                    }
                }
            }
            if p.groups.len() < 2 {
                return Err(invalid("adversary.strategy.partition.groups", "need at least two groups"));
            }
        }
        Ok(())
    }
}
