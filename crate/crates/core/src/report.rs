// SPDX-License-Identifier: Apache-2.0

//! Run reports computed from a trace alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::Value;

use crate::estimators::{message_volume, EstimatorInput, VolumeVariant};
use crate::incentives::{parse_exact, to_f64};
use crate::netsim::scenario_from_trace;
use crate::netsim::trace::{parse_line, TraceRecord};
use crate::scenario::{Scenario, SyncMode};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundRow {
    pub round: u64,
    /// `None` until some honest node settles the round.
    pub is_final: Option<bool>,
    pub first_close_ms: Option<u64>,
    pub latencies: Vec<u64>,
    pub messages: u64,
    pub lost: u64,
    pub abc: String,
    pub abit: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub node: u64,
    pub abc: String,
    pub abit: String,
    pub frozen: String,
    pub reputation_micros: u64,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub scenario: Scenario,
    pub corrupted: BTreeSet<u32>,
    pub stop: String,
    pub end_time: u64,
    pub rounds: BTreeMap<u64, RoundRow>,
    pub violations: BTreeMap<String, u64>,
    pub violation_details: Vec<String>,
    pub message_bound: u128,
    pub max_round_messages: u64,
    /// Honest closures of rounds begun after GST that took longer than the bound.
    pub slow_closures: u64,
    pub round_bound_ms: u64,
    /// Rounds from the first post-GST round to the first final one.
    pub rounds_to_final_after_gst: Option<u64>,
    pub recoveries: u64,
    /// ABC credited per final-committee member, averaged over final rounds.
    pub fc_income_mean: Option<f64>,
    pub ledger: Vec<LedgerRow>,
}

fn percentile(sorted: &[u64], p: usize) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    sorted[((sorted.len() - 1) * p) / 100]
}

impl Report {
    pub fn from_trace(lines: &[String]) -> Result<Report, String> {
        let scenario = scenario_from_trace(lines)?;
        let records: Vec<TraceRecord> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| parse_line(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        let header = &records[0];
        let corrupted: BTreeSet<u32> = header.detail["corrupted"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as u32).collect())
            .unwrap_or_default();
        let honest = |n: Option<u32>| n.map_or(false, |n| !corrupted.contains(&n));
        let gst = match scenario.network.mode {
            SyncMode::Strong => 0,
            SyncMode::Partial => scenario.network.gst_ms,
        };
        let round_bound_ms = scenario.timeouts.round_bound();

        let mut rounds: BTreeMap<u64, RoundRow> = BTreeMap::new();
        let mut begins: BTreeMap<(u32, u64), u64> = BTreeMap::new();
        let mut violations: BTreeMap<String, u64> = BTreeMap::new();
        let mut violation_details = Vec::new();
        let mut slow_closures = 0;
        let mut fc_income = (0.0f64, 0u64);
        let mut first_post_gst_round: Option<u64> = None;
        let mut end: Option<&TraceRecord> = None;
        for r in &records[1..] {
            match r.kind.as_str() {
                "deliver" => {
                    if let Some(round) = r.round {
                        rounds.entry(round).or_insert_with(|| RoundRow { round, ..Default::default() }).messages += 1;
                    }
                }
                "lost" => {
                    if let Some(round) = r.round {
                        rounds.entry(round).or_insert_with(|| RoundRow { round, ..Default::default() }).lost += 1;
                    }
                }
                "begin" if honest(r.to) => {
                    let round = r.round.unwrap_or(0);
                    begins.insert((r.to.unwrap_or(0), round), r.t);
                    if r.t >= gst && first_post_gst_round.map_or(true, |f| round < f) {
                        first_post_gst_round = Some(round);
                    }
                }
                "closed" if honest(r.to) => {
                    let round = r.round.unwrap_or(0);
                    let row = rounds.entry(round).or_insert_with(|| RoundRow { round, ..Default::default() });
                    row.first_close_ms = Some(row.first_close_ms.map_or(r.t, |t| t.min(r.t)));
                    if let Some(b) = begins.get(&(r.to.unwrap_or(0), round)) {
                        let latency = r.t - b;
                        row.latencies.push(latency);
                        if *b >= gst && latency > round_bound_ms {
                            slow_closures += 1;
                        }
                    }
                }
                "settle" => {
                    if r.detail["final"].as_bool() == Some(true) {
                        let abc = r.detail["abc"].as_str().and_then(|v| parse_exact(v).ok()).map_or(0.0, |v| to_f64(&v));
                        fc_income.0 += abc;
                        fc_income.1 += r.detail["n_fc"].as_u64().unwrap_or(0);
                    }
                    let round = r.round.unwrap_or(0);
                    let row = rounds.entry(round).or_insert_with(|| RoundRow { round, ..Default::default() });
                    row.is_final = r.detail["final"].as_bool();
                    row.abc = r.detail["abc"].as_str().unwrap_or("0").to_string();
                    row.abit = r.detail["abit"].as_str().unwrap_or("0").to_string();
                }
                "violation" => {
                    *violations.entry(r.stage.clone().unwrap_or_default()).or_default() += 1;
                    violation_details.push(format!(
                        "round {} node {}: {} ({})",
                        r.round.unwrap_or(0),
                        r.to.unwrap_or(0),
                        r.stage.as_deref().unwrap_or("?"),
                        r.detail["detail"].as_str().unwrap_or("")
                    ));
                }
                "end" => end = Some(r),
                _ => {}
            }
        }
        let end = end.ok_or("trace has no end line")?;
        for row in rounds.values_mut() {
            row.latencies.sort_unstable();
        }
        let rounds_to_final_after_gst = first_post_gst_round.and_then(|g| {
            rounds.range(g..).find(|(_, row)| row.is_final == Some(true)).map(|(r, _)| r - g)
        });
        let c = scenario.committee();
        let input = EstimatorInput {
            n_all: scenario.n_all as u64,
            n_pc: c.n_pc as u64,
            n_fc: c.n_fc as u64,
            n_valid_leaders: c.n_valid_leaders as u64,
            n_empty_leaders: c.n_empty_leaders as u64,
            ..EstimatorInput::default()
        };
        let ledger = end.detail["ledger"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|v| LedgerRow {
                        node: v["node"].as_u64().unwrap_or(0),
                        abc: v["abc"].as_str().unwrap_or("0").into(),
                        abit: v["abit"].as_str().unwrap_or("0").into(),
                        frozen: v["frozen"].as_str().unwrap_or("0").into(),
                        reputation_micros: v["reputation"].as_u64().unwrap_or(0),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let recoveries = end.detail["nodes"]
            .as_array()
            .map(|a| a.iter().filter_map(|n| n["recoveries"].as_u64()).sum())
            .unwrap_or(0);
        Ok(Report {
            max_round_messages: rounds.values().map(|r| r.messages).max().unwrap_or(0),
            message_bound: message_volume(&input, VolumeVariant::Printed),
            stop: end.detail["stop"].as_str().unwrap_or("").into(),
            end_time: end.t,
            scenario,
            corrupted,
            rounds,
            violations,
            violation_details,
            slow_closures,
            round_bound_ms,
            rounds_to_final_after_gst,
            recoveries,
            fc_income_mean: (fc_income.1 > 0).then(|| fc_income.0 / fc_income.1 as f64),
            ledger,
        })
    }

    pub fn final_rounds(&self) -> usize {
        self.rounds.values().filter(|r| r.is_final == Some(true)).count()
    }

    pub fn tentative_rounds(&self) -> usize {
        self.rounds.values().filter(|r| r.is_final == Some(false)).count()
    }

    pub fn safety_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn liveness_ok(&self) -> bool {
        self.stop == "rounds_reached" && self.slow_closures == 0
    }

    fn all_latencies(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.rounds.values().flat_map(|r| r.latencies.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let name = if self.scenario.name.is_empty() { "unnamed" } else { &self.scenario.name };
        let _ = writeln!(s, "scenario      {name} (seed {}, {} nodes, {} corrupted, strategy {})", self.scenario.seed, self.scenario.n_all, self.corrupted.len(), self.scenario.adversary.strategy.name());
        let _ = writeln!(s, "stop          {} at {} ms", self.stop, self.end_time);
        let _ = writeln!(s, "rounds        {} final, {} tentative", self.final_rounds(), self.tentative_rounds());
        let lat = self.all_latencies();
        let _ = writeln!(
            s,
            "latency ms    min {} p50 {} p90 {} p99 {} max {} (bound {})",
            lat.first().copied().unwrap_or(0),
            percentile(&lat, 50),
            percentile(&lat, 90),
            percentile(&lat, 99),
            lat.last().copied().unwrap_or(0),
            self.round_bound_ms
        );
        let _ = writeln!(s, "messages      max {} per round, bound {}", self.max_round_messages, self.message_bound);
        let safety = if self.safety_ok() { "OK".to_string() } else { format!("VIOLATED {:?}", self.violations) };
        let _ = writeln!(s, "safety        {safety}");
        let liveness = if self.liveness_ok() { "OK" } else { "NOT MET" };
        let _ = writeln!(s, "liveness      {liveness} ({} slow closures)", self.slow_closures);
        if let Some(k) = self.rounds_to_final_after_gst {
            let _ = writeln!(s, "first final   {k} rounds after the first post-GST round");
        }
        let _ = writeln!(s, "recoveries    {}", self.recoveries);
        if let Some(m) = self.fc_income_mean {
            let _ = writeln!(s, "fc income     {m:.6} ABC per final-committee member per final round");
        }
        for d in self.violation_details.iter().take(20) {
            let _ = writeln!(s, "  violation   {d}");
        }
        let _ = writeln!(s, "\nround  outcome    first_close  p50_ms  max_ms  messages  lost");
        for r in self.rounds.values() {
            let outcome = match r.is_final {
                Some(true) => "final",
                Some(false) => "tentative",
                None => "open",
            };
            let _ = writeln!(
                s,
                "{:>5}  {:<9}  {:>11}  {:>6}  {:>6}  {:>8}  {:>4}",
                r.round,
                outcome,
                r.first_close_ms.map_or("-".into(), |t| t.to_string()),
                percentile(&r.latencies, 50),
                r.latencies.last().copied().unwrap_or(0),
                r.messages,
                r.lost
            );
        }
        let _ = writeln!(s, "\nnode  abc  abit  frozen  reputation");
        for a in &self.ledger {
            let _ = writeln!(s, "{:>4}  {}  {}  {}  {}", a.node, a.abc, a.abit, a.frozen, a.reputation_micros as f64 / 1e6);
        }
        s
    }

    pub fn rounds_csv(&self) -> String {
        let mut s = String::from("round,outcome,first_close_ms,latency_min_ms,latency_p50_ms,latency_max_ms,messages,lost,abc,abit\n");
        for r in self.rounds.values() {
            let outcome = match r.is_final {
                Some(true) => "final",
                Some(false) => "tentative",
                None => "open",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.round,
                outcome,
                r.first_close_ms.map_or(String::new(), |t| t.to_string()),
                r.latencies.first().copied().unwrap_or(0),
                percentile(&r.latencies, 50),
                r.latencies.last().copied().unwrap_or(0),
                r.messages,
                r.lost,
                r.abc,
                r.abit
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let lat = self.all_latencies();
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.scenario.seed.to_string()),
            ("n_all", self.scenario.n_all.to_string()),
            ("corrupted", self.corrupted.len().to_string()),
            ("strategy", self.scenario.adversary.strategy.name().into()),
            ("stop", self.stop.clone()),
            ("end_time_ms", self.end_time.to_string()),
            ("final_rounds", self.final_rounds().to_string()),
            ("tentative_rounds", self.tentative_rounds().to_string()),
            ("latency_p50_ms", percentile(&lat, 50).to_string()),
            ("latency_max_ms", lat.last().copied().unwrap_or(0).to_string()),
            ("max_round_messages", self.max_round_messages.to_string()),
            ("message_bound", self.message_bound.to_string()),
            ("violations", self.violations.values().sum::<u64>().to_string()),
            ("safety", if self.safety_ok() { "ok" } else { "violated" }.into()),
            ("liveness", if self.liveness_ok() { "ok" } else { "not_met" }.into()),
            ("slow_closures", self.slow_closures.to_string()),
            ("recoveries", self.recoveries.to_string()),
            ("fc_income_mean", self.fc_income_mean.map_or(String::new(), |m| format!("{m:.6}"))),
        ];
        let mut s = String::from("key,value\n");
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn ledger_csv(&self) -> String {
        let mut s = String::from("node_id,abc,abit,frozen,reputation\n");
        for a in &self.ledger {
            let rep = format!("{}.{:06}", a.reputation_micros / 1_000_000, a.reputation_micros % 1_000_000);
            let _ = writeln!(s, "{},{},{},{},{}", a.node, a.abc, a.abit, a.frozen, rep);
        }
        s
    }
}
