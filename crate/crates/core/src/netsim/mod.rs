// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event network kernel.
//!
//! Events are processed in `(time, messages before timers, sequence)` order
//! on one logical clock. All randomness comes from per-purpose ChaCha streams
//! derived from the scenario seed, so a scenario and seed fix the trace.

pub mod adversary;
pub mod monitor;
pub mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::crypto::{hash_parts, vrf_keygen, Digest, KeyPair, KeyRegistry};
use crate::engine::{Behavior, Ctx, Environment, Input, Node, Note, Output, ReputationHistory, Timer};
use crate::incentives::{format_exact, FinalRound, RewardLedger, RoundSummary, Verdict};
use crate::ledger::{Block, ConsensusKind, Transaction};
use crate::message::{Envelope, Payload};
use crate::scenario::{Scenario, Strategy};
use crate::sortition::{make_credential, passes_fc_threshold, rank_leaders, select_pc, NodeRecord, RandomSeed, Reputation};
use crate::NodeId;

use self::adversary::{behavior_for, corrupted_set, equivocate};
use self::monitor::{Monitor, Property, Violation};
use self::trace::{CompareSink, Divergence, TraceLine, TraceSink, TRACE_FORMAT};

/// Independent random stream for one purpose of one run.
pub fn rng_stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(hash_parts(&[b"acp/rng", purpose.as_bytes(), &seed.to_be_bytes()]).0)
}

pub fn node_keys(seed: u64, id: u32) -> KeyPair {
    vrf_keygen(&hash_parts(&[b"acp/key", &seed.to_be_bytes(), &id.to_be_bytes()]).0)
}

pub fn genesis_block(seed: u64) -> Block {
    Block::genesis(hash_parts(&[b"acp/genesis", &seed.to_be_bytes()]))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CloseRecord {
    pub node: NodeId,
    pub round: u64,
    pub kind: ConsensusKind,
    pub via: &'static str,
    pub begin_at: Option<u64>,
    pub at: u64,
    pub hash: Digest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RoundsReached,
    TimeLimit,
    Idle,
    TraceStopped,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::RoundsReached => "rounds_reached",
            StopReason::TimeLimit => "time_limit",
            StopReason::Idle => "idle",
            StopReason::TraceStopped => "trace_stopped",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub events: u64,
    pub delivered: u64,
    pub lost: u64,
    pub withheld: u64,
    pub end_time: u64,
}

pub struct RunResult {
    pub scenario: Scenario,
    pub nodes: Vec<Node>,
    pub corrupted: BTreeSet<NodeId>,
    pub violations: Vec<Violation>,
    pub closes: Vec<CloseRecord>,
    pub ledger: RewardLedger,
    pub stats: RunStats,
    pub stop: StopReason,
}

impl RunResult {
    pub fn is_honest(&self, id: NodeId) -> bool {
        !self.corrupted.contains(&id)
    }

    pub fn honest_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !self.corrupted.contains(&n.id))
    }
}

enum Body {
    Deliver { env: Arc<Envelope>, sent_at: u64 },
    Timer(Timer),
}

struct Event {
    at: u64,
    seq: u64,
    target: NodeId,
    body: Body,
}

impl Event {
    fn key(&self) -> (u64, u8, u64) {
        let class = match self.body {
            Body::Deliver { .. } => 0,
            Body::Timer(_) => 1,
        };
        (self.at, class, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

struct Kernel<'s> {
    scenario: Scenario,
    env: Environment,
    keys: Vec<KeyPair>,
    nodes: Vec<Node>,
    corrupted: BTreeSet<NodeId>,
    honest_count: usize,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    delay_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    workload_rng: ChaCha8Rng,
    tx_counter: u64,
    workload_rounds: BTreeSet<u64>,
    reputation: ReputationHistory,
    ledger: RewardLedger,
    last_settled: u64,
    evidence: BTreeSet<NodeId>,
    begins: BTreeMap<(NodeId, u64), u64>,
    monitor: Monitor,
    violations: Vec<Violation>,
    closes: Vec<CloseRecord>,
    done: BTreeSet<NodeId>,
    stats: RunStats,
    sink: &'s mut dyn TraceSink,
    halted: bool,
}

/// Runs a resolved scenario to completion, streaming the trace into `sink`.
pub fn run(scenario: &Scenario, sink: &mut dyn TraceSink) -> RunResult {
    let mut k = Kernel::new(scenario.clone(), sink);
    let stop = k.run();
    k.finish(stop)
}

/// Re-executes the scenario recorded in a trace header and compares line by line.
pub fn replay(lines: &[String]) -> Result<Option<Divergence>, String> {
    let scenario = scenario_from_trace(lines)?;
    let mut sink = CompareSink::new(lines);
    run(&scenario, &mut sink);
    Ok(sink.finish())
}

pub fn scenario_from_trace(lines: &[String]) -> Result<Scenario, String> {
    let first = lines.first().ok_or("trace is empty")?;
    let header = trace::parse_line(first).map_err(|e| format!("bad header line: {e}"))?;
    if header.kind != "header" {
        return Err("first line is not a trace header".into());
    }
    if header.detail.get("format").and_then(Value::as_u64) != Some(TRACE_FORMAT as u64) {
        return Err("unsupported trace format".into());
    }
    let value = header.detail.get("scenario").cloned().ok_or("header has no scenario")?;
    let text = serde_json::to_string(&value).map_err(|e| e.to_string())?;
    Scenario::from_json(&text).map_err(|e| format!("header scenario: {e}"))
}

impl<'s> Kernel<'s> {
    fn new(scenario: Scenario, sink: &'s mut dyn TraceSink) -> Self {
        let seed = scenario.seed;
        let n = scenario.n_all;
        let keys: Vec<KeyPair> = (0..n).map(|i| node_keys(seed, i)).collect();
        let mut registry = KeyRegistry::new();
        for k in &keys {
            registry.register(k);
        }
        let env = Environment {
            params: scenario.protocol(),
            registry,
            public_keys: keys.iter().map(|k| k.public_key).collect(),
        };
        let adv_seed = scenario.adversary.seed.unwrap_or(seed);
        let corrupted = corrupted_set(&scenario.adversary, n, &mut rng_stream(adv_seed, "corrupt"));
        let behavior = behavior_for(&scenario.adversary.strategy);
        let mut speed_rng = rng_stream(seed, "speed");
        let genesis = genesis_block(seed);
        let nodes: Vec<Node> = (0..n)
            .map(|i| {
                let id = NodeId(i);
                let b = if corrupted.contains(&id) { behavior } else { Behavior::Honest };
                let speed = speed_rng.gen_range(1..=scenario.network.phi);
                Node::new(id, keys[i as usize].clone(), genesis.clone(), b, speed)
            })
            .collect();
        let reps = vec![Reputation::ONE; n as usize];
        let mut reputation = ReputationHistory::new();
        reputation.insert(0, reps.clone());
        Kernel {
            honest_count: n as usize - corrupted.len(),
            ledger: RewardLedger::new(scenario.economy.clone(), &reps),
            env,
            keys,
            nodes,
            corrupted,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            delay_rng: rng_stream(seed, "delay"),
            noise_rng: rng_stream(seed, "noise"),
            workload_rng: rng_stream(seed, "workload"),
            tx_counter: 0,
            workload_rounds: BTreeSet::new(),
            reputation,
            last_settled: 0,
            evidence: BTreeSet::new(),
            begins: BTreeMap::new(),
            monitor: Monitor::new(),
            violations: Vec::new(),
            closes: Vec::new(),
            done: BTreeSet::new(),
            stats: RunStats::default(),
            sink,
            halted: false,
            scenario,
        }
    }

    fn emit(&mut self, line: TraceLine) {
        if !self.halted && !self.sink.record(line.render()) {
            self.halted = true;
        }
    }

    fn header(&mut self) {
        let speeds: Vec<u64> = self.nodes.iter().map(|n| n.speed).collect();
        let detail = json!({
            "format": TRACE_FORMAT,
            "scenario": serde_json::to_value(&self.scenario).expect("scenario serializes"),
            "corrupted": self.corrupted.iter().map(|n| n.0).collect::<Vec<_>>(),
            "strategy": self.scenario.adversary.strategy.name(),
            "speeds": speeds,
        });
        self.emit(TraceLine { t: 0, kind: "header", from: None, to: None, round: None, stage: None, detail });
    }

    fn crashed(&self, id: NodeId, t: u64) -> bool {
        self.nodes[id.index()].behavior == Behavior::Crash && t >= self.scenario.adversary.crash_at_ms
    }

    fn push(&mut self, at: u64, target: NodeId, body: Body) {
        self.seq += 1;
        self.queue.push(Reverse(Event { at, seq: self.seq, target, body }));
    }

    fn run(&mut self) -> StopReason {
        self.header();
        if self.nodes.is_empty() {
            return StopReason::Idle;
        }
        self.generate_workload(1);
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            if !self.crashed(id, 0) {
                self.step(id, Input::Start);
            }
        }
        let limit = self.scenario.time_limit();
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.at > limit {
                return StopReason::TimeLimit;
            }
            self.now = ev.at;
            self.stats.events += 1;
            let target = ev.target;
            match ev.body {
                Body::Deliver { env, sent_at } => {
                    let round = env.payload.round();
                    let stage = env.payload.kind();
                    if self.crashed(target, self.now) {
                        self.emit(TraceLine {
                            t: self.now,
                            kind: "drop",
                            from: Some(env.from.0),
                            to: Some(target.0),
                            round,
                            stage: Some(stage),
                            detail: json!({"reason": "crashed"}),
                        });
                        continue;
                    }
                    self.stats.delivered += 1;
                    let mut detail = json!({"sent": sent_at});
                    if let Some(h) = env.payload.digest() {
                        detail["hash"] = Value::from(h.short());
                    }
                    self.emit(TraceLine { t: self.now, kind: "deliver", from: Some(env.from.0), to: Some(target.0), round, stage: Some(stage), detail });
                    self.step(target, Input::Message(&env));
                }
                Body::Timer(t) => {
                    if self.crashed(target, self.now) {
                        continue;
                    }
                    self.emit(TraceLine {
                        t: self.now,
                        kind: "timer",
                        from: None,
                        to: Some(target.0),
                        round: Some(t.round),
                        stage: Some(t.kind.as_str()),
                        detail: json!({"epoch": t.epoch}),
                    });
                    self.step(target, Input::Timer(t));
                }
            }
            if self.halted {
                return StopReason::TraceStopped;
            }
            if self.done.len() == self.honest_count {
                return StopReason::RoundsReached;
            }
        }
        StopReason::Idle
    }

    fn step(&mut self, id: NodeId, input: Input) {
        let ctx = Ctx { now: self.now, env: &self.env, reputation: &self.reputation };
        let outputs = self.nodes[id.index()].handle(&ctx, input);
        for o in outputs {
            match o {
                Output::Send { to, payload } => self.route(id, to, payload),
                Output::SetTimer { at, timer } => self.push(at, id, Body::Timer(timer)),
                Output::Note(n) => self.on_note(id, n),
            }
        }
        if !self.corrupted.contains(&id) && self.nodes[id.index()].chain().tip_round() >= self.scenario.rounds {
            self.done.insert(id);
        }
    }

    fn route(&mut self, from: NodeId, to: Vec<NodeId>, payload: Payload) {
        if self.crashed(from, self.now) {
            return;
        }
        let behavior = self.nodes[from.index()].behavior;
        if behavior == Behavior::WithholdVotes && matches!(payload, Payload::Vote(_)) {
            self.stats.withheld += to.len() as u64;
            return;
        }
        let twin = if behavior == Behavior::Equivocate && to.len() > 1 {
            let tip = self.nodes[from.index()].chain().tip_hash();
            equivocate(&payload, &self.keys[from.index()], tip)
        } else {
            None
        };
        if let Some(Payload::Proposal(p)) = &twin {
            self.monitor.proposed(p.block.round, p.block.block_hash, false);
        }
        let env = Arc::new(Envelope { from, payload });
        let twin = twin.map(|payload| Arc::new(Envelope { from, payload }));
        let half = to.len().div_ceil(2);
        for (k, r) in to.into_iter().enumerate() {
            let e = match (&twin, k >= half) {
                (Some(t), true) => t.clone(),
                _ => env.clone(),
            };
            self.send_one(from, r, e);
        }
    }

    fn lost(&mut self, from: NodeId, to: NodeId, env: &Envelope, reason: &str) {
        self.stats.lost += 1;
        self.emit(TraceLine {
            t: self.now,
            kind: "lost",
            from: Some(from.0),
            to: Some(to.0),
            round: env.payload.round(),
            stage: Some(env.payload.kind()),
            detail: json!({"reason": reason}),
        });
    }

    fn send_one(&mut self, from: NodeId, to: NodeId, env: Arc<Envelope>) {
        let sent_at = self.now;
        if from == to {
            return self.push(sent_at, to, Body::Deliver { env, sent_at });
        }
        if let Strategy::Partition(p) = &self.scenario.adversary.strategy {
            if p.cuts(sent_at, from.0, to.0) {
                return self.lost(from, to, &env, "partition");
            }
        }
        let net = &self.scenario.network;
        if net.drop_rate > 0.0 && self.noise_rng.gen_bool(net.drop_rate) {
            return self.lost(from, to, &env, "noise");
        }
        let duplicate = net.duplicate_rate > 0.0 && self.noise_rng.gen_bool(net.duplicate_rate);
        let d = self.delay(from);
        self.push(sent_at + d, to, Body::Deliver { env: env.clone(), sent_at });
        if duplicate {
            let d = self.delay(from);
            self.push(sent_at + d, to, Body::Deliver { env, sent_at });
        }
    }

    fn delay(&mut self, from: NodeId) -> u64 {
        let net = &self.scenario.network;
        let now = self.now;
        let worst = self.nodes[from.index()].behavior == Behavior::DelayMax;
        if net.synchronous_at(now) {
            if worst {
                return net.delta_ms;
            }
            return self.delay_rng.gen_range(net.min_delay_ms..=net.delta_ms);
        }
        let cap = net.gst_ms + net.delta_ms - now;
        if worst {
            return net.pre_gst_max_delay_ms.min(cap);
        }
        self.delay_rng.gen_range(net.min_delay_ms..=net.pre_gst_max_delay_ms).min(cap)
    }

    fn on_note(&mut self, id: NodeId, note: Note) {
        let honest = !self.corrupted.contains(&id);
        let (kind, round, detail) = note_line(&note);
        self.emit(TraceLine { t: self.now, kind, from: None, to: Some(id.0), round, stage: None, detail });
        match note {
            Note::Begin { round, .. } => {
                self.begins.insert((id, round), self.now);
            }
            Note::Proposed { round, hash } => self.monitor.proposed(round, hash, honest),
            Note::Closed { round, kind, block, seed, via } => {
                self.closes.push(CloseRecord {
                    node: id,
                    round,
                    kind,
                    via,
                    begin_at: self.begins.get(&(id, round)).copied(),
                    at: self.now,
                    hash: block.block_hash,
                });
                if honest {
                    self.settle(round, kind, &block, &seed);
                }
            }
            Note::Confirmed { blocks } if honest => {
                for v in self.monitor.confirmed(id, &blocks) {
                    self.violation(v);
                }
            }
            Note::Evidence { culprit, .. } if honest => {
                self.evidence.insert(culprit);
            }
            Note::Violation { round, what } if honest => {
                self.violation(Violation { property: Property::NodeReported, round, node: id, detail: what });
            }
            _ => {}
        }
    }

    fn violation(&mut self, v: Violation) {
        self.emit(TraceLine {
            t: self.now,
            kind: "violation",
            from: None,
            to: Some(v.node.0),
            round: Some(v.round),
            stage: Some(v.property.as_str()),
            detail: json!({"detail": v.detail}),
        });
        self.violations.push(v);
    }

    fn generate_workload(&mut self, round: u64) {
        if !self.workload_rounds.insert(round) {
            return;
        }
        let w = self.scenario.workload.clone();
        let n = self.nodes.len() as u32;
        let mut txs = Vec::with_capacity(w.tx_per_round as usize);
        for _ in 0..w.tx_per_round {
            self.tx_counter += 1;
            let id = hash_parts(&[b"acp/tx", &self.scenario.seed.to_be_bytes(), &self.tx_counter.to_be_bytes()]);
            let size = w.tx_size - w.size_jitter + self.workload_rng.gen_range(0..=2 * w.size_jitter);
            let submitter = NodeId(self.workload_rng.gen_range(0..n));
            txs.push(Transaction { id, payload_size: size, submitter });
        }
        for node in &mut self.nodes {
            node.add_transactions(&txs);
        }
    }

    /// Settles rewards and reputation for a round at its first honest closure,
    /// recomputing the round's committees from the seed that node used.
    fn settle(&mut self, round: u64, kind: ConsensusKind, block: &Block, seed: &RandomSeed) {
        if round <= self.last_settled {
            return;
        }
        while self.last_settled + 1 < round {
            self.last_settled += 1;
            let summary = RoundSummary { round: self.last_settled, final_block: None, pc_members: Vec::new(), verdicts: BTreeMap::new() };
            self.ledger.settle(&summary);
        }
        let ctx = Ctx { now: self.now, env: &self.env, reputation: &self.reputation };
        let reps = ctx.reputations(round);
        let records: Vec<NodeRecord> = self
            .env
            .public_keys
            .iter()
            .enumerate()
            .map(|(i, pk)| NodeRecord { node_id: NodeId(i as u32), public_key: *pk, reputation: reps[i] })
            .collect();
        let params = self.env.params.committee;
        let pc = select_pc(&records, seed, round, params.n_pc as usize).expect("reputations are positive");
        let creds: Vec<_> = pc
            .iter()
            .map(|&id| make_credential(id, &self.keys[id.index()], round))
            .filter(|c| passes_fc_threshold(&c.vrf.value, &params))
            .collect();
        let fc: Vec<NodeId> = creds.iter().map(|c| c.node_id).collect();
        let (valid, empty) = rank_leaders(&creds, &params);
        let mut leaders = valid;
        for l in empty {
            if !leaders.contains(&l) {
                leaders.push(l);
            }
        }
        let mut verdicts = BTreeMap::new();
        let final_block = match (kind, &block.certificate) {
            (ConsensusKind::Final, Some(cert)) => {
                for s in &cert.signatures {
                    verdicts.insert(s.node, Verdict::HonestSuccess);
                }
                Some(FinalRound {
                    miner: block.proposer.unwrap_or(cert.leader),
                    leaders: leaders.clone(),
                    verifiers: fc.clone(),
                    packed_bytes: block.tx_bytes(),
                })
            }
            _ => None,
        };
        for culprit in std::mem::take(&mut self.evidence) {
            verdicts.insert(culprit, Verdict::DetectedMalicious);
        }
        let summary = RoundSummary { round, final_block, pc_members: pc.clone(), verdicts };
        let record = self.ledger.settle(&summary).clone();
        self.last_settled = round;
        self.reputation.insert(round + 1, self.ledger.reputations());
        let credits: Vec<Value> = record
            .credits
            .iter()
            .map(|c| json!([c.node.0, c.role, format_exact(&c.amount)]))
            .collect();
        let detail = json!({
            "final": record.is_final,
            "abc": format_exact(&record.abc_issued),
            "abit": format_exact(&record.abit_issued),
            "factor": format_exact(&record.factor),
            "n_leaders": record.n_leaders,
            "n_fc": record.n_fc,
            "n_pc": record.n_pc,
            "packed_bytes": block.tx_bytes(),
            "credits": credits,
        });
        self.emit(TraceLine { t: self.now, kind: "settle", from: None, to: None, round: Some(round), stage: None, detail });
        self.generate_workload(round + 1);
    }

    fn finish(mut self, stop: StopReason) -> RunResult {
        for v in self.monitor.finish() {
            self.violation(v);
        }
        self.stats.end_time = self.now;
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.id.0,
                    "behavior": n.behavior,
                    "tip_round": n.chain().tip_round(),
                    "last_final_round": n.chain().last_final().round,
                    "tip": n.chain().tip_hash().short(),
                    "recoveries": n.stats.recoveries,
                    "stale": n.stats.stale,
                })
            })
            .collect();
        let accounts: Vec<Value> = self
            .ledger
            .accounts()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                json!({
                    "node": i,
                    "abc": format_exact(&a.abc),
                    "abit": format_exact(&a.abit),
                    "frozen": format_exact(&a.frozen),
                    "reputation": a.reputation.micros(),
                })
            })
            .collect();
        let detail = json!({
            "stop": stop.as_str(),
            "events": self.stats.events,
            "delivered": self.stats.delivered,
            "lost": self.stats.lost,
            "withheld": self.stats.withheld,
            "violations": self.violations.len(),
            "nodes": nodes,
            "ledger": accounts,
        });
        self.emit(TraceLine { t: self.now, kind: "end", from: None, to: None, round: None, stage: None, detail });
        RunResult {
            scenario: self.scenario,
            nodes: self.nodes,
            corrupted: self.corrupted,
            violations: self.violations,
            closes: self.closes,
            ledger: self.ledger,
            stats: self.stats,
            stop,
        }
    }
}

fn blocks_json(blocks: &[Arc<Block>]) -> Value {
    Value::Array(blocks.iter().map(|b| json!([b.round, b.block_hash.short(), b.consensus_kind.as_str()])).collect())
}

fn note_line(note: &Note) -> (&'static str, Option<u64>, Value) {
    match note {
        Note::Begin { round, role } => ("begin", Some(*round), json!({"role": role.as_str()})),
        Note::Proposed { round, hash } => ("proposed", Some(*round), json!({"hash": hash.short()})),
        Note::Candidate { round, hash } => ("candidate", Some(*round), json!({"hash": hash.short()})),
        Note::Decided { instance, hash } => (
            "decided",
            Some(instance.round),
            json!({"leader": instance.leader.0, "instance": instance.kind.as_str(), "hash": hash.short()}),
        ),
        Note::Closed { round, kind, block, via, .. } => (
            "closed",
            Some(*round),
            json!({"kind": kind.as_str(), "via": via, "hash": block.block_hash.short(), "txs": block.transactions.len()}),
        ),
        Note::Confirmed { blocks } => ("confirmed", blocks.last().map(|b| b.round), json!({"blocks": blocks_json(blocks)})),
        Note::Discarded { blocks } => ("discarded", blocks.first().map(|b| b.round), json!({"blocks": blocks_json(blocks)})),
        Note::Dropped { reason } => ("rejected", None, json!({"reason": reason})),
        Note::Stale => ("stale", None, Value::Null),
        Note::Evidence { round, culprit, what } => ("evidence", Some(*round), json!({"culprit": culprit.0, "what": what})),
        Note::Violation { round, what } => ("node_violation", Some(*round), json!({"what": what})),
        Note::SyncRequested { peer, from_round } => ("sync", None, json!({"peer": peer.0, "from_round": from_round})),
        Note::Recovered { anchor_round, adopted, discarded } => (
            "recovered",
            Some(*anchor_round),
            json!({"adopted": adopted, "discarded": discarded}),
        ),
        Note::Restart { round } => ("restart", Some(*round), Value::Null),
    }
}
