// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use acp_cli::replay_lines;
use acp_core::crypto::{hash, Digest, Signature, VrfOutput};
use acp_core::estimators::{agreement_time, message_volume, throughput_table, EstimatorInput, VolumeVariant, MIB};
use acp_core::ledger::{make_empty_block, Block, Transaction};
use acp_core::message::{VoteMsg, VoteStep};
use acp_core::netsim::run;
use acp_core::netsim::trace::{parse_line, TraceRecord, VecSink};
use acp_core::reduction::{reduce, second_step_choice, ReductionView};
use acp_core::report::Report;
use acp_core::scenario::{Scenario, SyncMode};
use acp_core::NodeId;

const THROUGHPUT_TOLERANCE: f64 = 0.005;
const LIVENESS_MIN_SHARE: f64 = 0.99;
const LIVENESS_FINAL_WITHIN_ROUNDS: u64 = 5;
const SAFETY_RUNS: usize = 500;
const LIVENESS_RUNS: usize = 200;
const RECOVERY_RUNS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Results shared by the suites whose traces feed the replay and ledger criteria.
#[derive(Default)]
struct Carry {
    replays: usize,
    replay_failures: Vec<String>,
    ledger_rounds: usize,
    ledger_failures: Vec<String>,
}

impl Carry {
    fn absorb(&mut self, label: &str, lines: &[String]) {
        self.replays += 1;
        match replay_lines(lines) {
            Ok(v) if v.exit_code() == 0 => {}
            Ok(v) => self.replay_failures.push(format!("{label}: {v}")),
            Err(e) => self.replay_failures.push(format!("{label}: {e}")),
        }
        match check_ledger(lines) {
            Ok(n) => self.ledger_rounds += n,
            Err(e) => self.ledger_failures.push(format!("{label}: {e}")),
        }
    }
}

fn records(lines: &[String]) -> Vec<TraceRecord> {
    lines.iter().map(|l| parse_line(l).expect("trace line parses")).collect()
}

fn scenario(text: &str) -> Scenario {
    Scenario::from_json(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn run_lines(s: &Scenario) -> (acp_core::netsim::RunResult, Vec<String>) {
    let mut sink = VecSink::default();
    let r = run(s, &mut sink);
    (r, sink.lines)
}

// ---- 1-3: estimators ------------------------------------------------------

fn agreement_time_criterion() -> Outcome {
    let value = agreement_time(&EstimatorInput::default());
    let out = Command::new(env!("CARGO_BIN_EXE_acp")).arg("estimate").output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout);
    let printed = text.lines().next().unwrap_or("").to_string();
    outcome(value == 5700.0 && out.status.success() && printed == "agreement time: 5700 ms", format!("`{printed}`"))
}

fn throughput_criterion() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut consistent = true;
    let cells = throughput_table();
    for c in &cells {
        // recomputed here from the cell's own numbers
        let tx = if c.chain == "bitcoin" { 1360.0 } else { 536.0 };
        let oracle = (c.block_mib * MIB) as f64 / (tx * c.agreement_s);
        worst = worst.max((oracle - c.reference).abs() / c.reference);
        consistent &= (oracle - c.tps).abs() < 1e-9;
    }
    // each preset must be recoverable from both the 3 s and the 5.7 s cell
    for chain in ["bitcoin", "ethereum"] {
        let sizes: Vec<f64> = cells
            .iter()
            .filter(|c| c.chain == chain)
            .map(|c| (c.block_mib * MIB) as f64 / (c.reference * c.agreement_s))
            .collect();
        let preset = if chain == "bitcoin" { 1360.0 } else { 536.0 };
        consistent &= sizes.iter().all(|s| (s - preset).abs() / preset < THROUGHPUT_TOLERANCE);
    }
    outcome(
        cells.len() == 8 && consistent && worst < THROUGHPUT_TOLERANCE,
        format!("8 cells, worst relative error {:.4}% (tolerance {}%)", worst * 100.0, THROUGHPUT_TOLERANCE * 100.0),
    )
}

fn volume_criterion() -> Outcome {
    let d = EstimatorInput::default();
    let got = message_volume(&d, VolumeVariant::Printed);
    let b = |v: u64| BigUint::from(v);
    let (pc, fc, valid, empty, all) = (b(512), b(16), b(3), b(3), b(100_000));
    let oracle = &pc * &pc + b(2) * &fc * &fc + b(3) * &fc * &fc * &valid + b(3) * &pc * &pc * &empty + &fc * &all;
    let pass = BigUint::from(got) == oracle && oracle == b(4_224_256);
    outcome(pass, format!("{got} vs big-integer {oracle}"))
}

// ---- 4: safety ------------------------------------------------------------

fn safety_criterion(carry: &mut Carry) -> Outcome {
    let strategies = ["crash", "equivocate", "withhold_votes", "delay_max"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let mut violations = Vec::new();
    let mut by_strategy: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bound_breaches = 0;
    for i in 0..SAFETY_RUNS {
        let n: u32 = rng.gen_range(4..=64);
        let strategy = strategies[rng.gen_range(0..strategies.len())];
        let seed: u64 = rng.gen();
        let f = (n - 1) / 3;
        // every fourth run has empty pools, so honest proposals are unanimous
        let tx = if i % 4 == 3 { 0 } else { 8 };
        let s = scenario(&format!(
            r#"{{"version": 1, "name": "safety-{i}", "n_all": {n}, "rounds": 3, "seed": {seed},
                "workload": {{"tx_per_round": {tx}}},
                "adversary": {{"strategy": "{strategy}", "random_corrupt": {f}}}}}"#
        ));
        let (r, lines) = run_lines(&s);
        *by_strategy.entry(strategy).or_default() += 1;
        for v in &r.violations {
            violations.push(format!("run {i} ({strategy}, n={n}, seed {seed}): {v:?}"));
        }
        bound_breaches += delivery_bound_breaches(&s, &r.corrupted, &lines);
        carry.absorb(&format!("safety run {i}"), &lines);
    }
    for v in violations.iter().take(5) {
        eprintln!("  {v}");
    }
    outcome(
        violations.is_empty() && bound_breaches == 0,
        format!(
            "{SAFETY_RUNS} runs {by_strategy:?}, {} violations, {bound_breaches} post-GST delay breaches",
            violations.len()
        ),
    )
}

/// Honest-sent deliveries that exceeded the delay bound after GST.
fn delivery_bound_breaches(s: &Scenario, corrupted: &BTreeSet<NodeId>, lines: &[String]) -> usize {
    let gst = if s.network.mode == SyncMode::Partial { s.network.gst_ms } else { 0 };
    records(lines)
        .iter()
        .filter(|r| r.kind == "deliver")
        .filter(|r| !corrupted.contains(&NodeId(r.from.unwrap())))
        .filter(|r| {
            let sent = r.detail["sent"].as_u64().unwrap();
            sent >= gst && r.t - sent > s.network.delta_ms
        })
        .count()
}

// ---- 5: liveness ----------------------------------------------------------

fn liveness_criterion(carry: &mut Carry) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11fe);
    let mut slow = 0;
    let mut finals_in_time = 0;
    let mut incomplete = 0;
    let mut breaches = 0;
    for i in 0..LIVENESS_RUNS {
        let n: u32 = rng.gen_range(4..=24);
        let seed: u64 = rng.gen();
        // rounds take roughly 2.1 s when synchronous: GST lands around round 3
        let gst: u64 = rng.gen_range(6_000..=8_000);
        let s = scenario(&format!(
            r#"{{"version": 1, "name": "liveness-{i}", "n_all": {n}, "rounds": 12, "seed": {seed},
                "network": {{"mode": "partial", "gst_ms": {gst}}}}}"#
        ));
        let (r, lines) = run_lines(&s);
        let report = Report::from_trace(&lines).expect("report");
        slow += report.slow_closures;
        if report.stop != "rounds_reached" {
            incomplete += 1;
        }
        if report.rounds_to_final_after_gst.map_or(false, |k| k < LIVENESS_FINAL_WITHIN_ROUNDS) {
            finals_in_time += 1;
        }
        breaches += delivery_bound_breaches(&s, &r.corrupted, &lines);
        carry.absorb(&format!("liveness run {i}"), &lines);
    }
    let share = finals_in_time as f64 / LIVENESS_RUNS as f64;
    outcome(
        slow == 0 && incomplete == 0 && breaches == 0 && share >= LIVENESS_MIN_SHARE,
        format!(
            "{slow} post-GST closures over SBR+lambda_all, final within {LIVENESS_FINAL_WITHIN_ROUNDS} rounds in {:.1}% (need {}%), {incomplete} incomplete runs",
            share * 100.0,
            LIVENESS_MIN_SHARE * 100.0
        ),
    )
}

// ---- 6: reduction oracle --------------------------------------------------

#[derive(Clone, Copy)]
enum Choice {
    Silent,
    A,
    B,
    Empty,
    Both,
}

const CHOICES: [Choice; 5] = [Choice::Silent, Choice::A, Choice::B, Choice::Empty, Choice::Both];

fn hashes_of(c: Choice, a: Digest, b: Digest, e: Digest) -> Vec<Digest> {
    match c {
        Choice::Silent => vec![],
        Choice::A => vec![a],
        Choice::B => vec![b],
        Choice::Empty => vec![e],
        Choice::Both => vec![a, b],
    }
}

/// Direct reading of the voting rule: a hash wins a step when more than two
/// thirds of the committee (`floor(2n/3) + 1` members) voted for it and for
/// nothing else.
fn literal_winner(assign: &[Choice], n: usize, a: Digest, b: Digest, e: Digest) -> Option<Digest> {
    let needed = 2 * n / 3 + 1;
    let mut winner = None;
    for h in [a, b, e] {
        let count = assign.iter().filter(|c| hashes_of(**c, a, b, e) == [h]).count();
        if count >= needed {
            assert!(winner.is_none(), "two hashes cannot both reach the threshold");
            winner = Some(h);
        }
    }
    winner
}

fn vote(voter: usize, step: VoteStep, h: Digest) -> VoteMsg {
    VoteMsg {
        voter: NodeId(voter as u32),
        round: 1,
        step,
        block_hash: h,
        signature: Signature([0; 32]),
        credential: VrfOutput { value: Digest::ZERO, proof: [0; 32] },
    }
}

fn decode(mut code: usize, n: usize) -> Vec<Choice> {
    (0..n)
        .map(|_| {
            let c = CHOICES[code % CHOICES.len()];
            code /= CHOICES.len();
            c
        })
        .collect()
}

fn reduction_criterion() -> Outcome {
    let tx = |i: u8| Transaction { id: hash(&[i]), payload_size: 100, submitter: NodeId(0) };
    let a = Arc::new(Block::new(1, Digest::ZERO, Some(NodeId(0)), vec![tx(1)], Vec::new()));
    let b = Arc::new(Block::new(1, Digest::ZERO, Some(NodeId(1)), vec![tx(2)], Vec::new()));
    let e = make_empty_block(1, Digest::ZERO).block_hash;
    let (ah, bh) = (a.block_hash, b.block_hash);
    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for n in 1..=5usize {
        let per_step = CHOICES.len().pow(n as u32);
        let mut base = ReductionView::new(1, Digest::ZERO);
        base.blocks.insert(ah, a.clone());
        base.blocks.insert(bh, b.clone());
        // step-2 outcome for every assignment, checked against the oracle once
        let mut step2_out = Vec::with_capacity(per_step);
        for code in 0..per_step {
            let assign = decode(code, n);
            let mut view = base.clone();
            for (voter, c) in assign.iter().enumerate() {
                for h in hashes_of(*c, ah, bh, e) {
                    let _ = view.step2.insert(vote(voter, VoteStep::Two, h));
                }
            }
            let out = reduce(&view, n as u32);
            let expected = match literal_winner(&assign, n, ah, bh, e) {
                Some(h) if h != e => (h, false),
                _ => (e, true),
            };
            if (out.block.block_hash, out.alert) != expected {
                mismatches += 1;
            }
            step2_out.push(out);
        }
        // step 1 followed by every step-2 assignment
        for code1 in 0..per_step {
            let assign1 = decode(code1, n);
            let mut view = base.clone();
            for (voter, c) in assign1.iter().enumerate() {
                for h in hashes_of(*c, ah, bh, e) {
                    let _ = view.step1.insert(vote(voter, VoteStep::One, h));
                }
            }
            let step2_vote = second_step_choice(view.step1.tally(n as u32), e);
            let expected_vote = literal_winner(&assign1, n, ah, bh, e).unwrap_or(e);
            if step2_vote != expected_vote {
                mismatches += 1;
            }
            for (code2, out) in step2_out.iter().enumerate() {
                let assign2 = decode(code2, n);
                cases += 1;
                let expected = match literal_winner(&assign2, n, ah, bh, e) {
                    Some(h) if h != e => (h, false),
                    _ => (e, true),
                };
                if (out.block.block_hash, out.alert) != expected {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{cases} step-1 x step-2 assignments for n_fc <= 5, {mismatches} mismatches"))
}

// ---- 7: recovery ----------------------------------------------------------

fn recovery_criterion(carry: &mut Carry) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4ea1);
    let mut converged = 0;
    let mut failures = Vec::new();
    for i in 0..RECOVERY_RUNS {
        let mut ids: Vec<u32> = (0..7).collect();
        ids.shuffle(&mut rng);
        let (major, minor) = ids.split_at(5);
        let seed: u64 = rng.gen();
        // cut during round 2, heal two rounds later
        let s = scenario(&format!(
            r#"{{"version": 1, "name": "recovery-{i}", "n_all": 7, "rounds": 8, "seed": {seed},
                "adversary": {{"strategy": {{"partition": {{"groups": [{major:?}, {minor:?}], "start_ms": 2500, "heal_ms": 7000}}}}}}}}"#
        ));
        let (r, lines) = run_lines(&s);
        let chains: Vec<Vec<Digest>> = r.nodes.iter().map(|n| n.chain().all_blocks().map(|b| b.block_hash).collect()).collect();
        let compatible = chains.iter().all(|x| chains.iter().all(|y| x.iter().zip(y).all(|(p, q)| p == q)));
        let recovered = r.nodes.iter().filter(|n| minor.contains(&n.id.0)).all(|n| n.stats.recoveries > 0);
        let ok = compatible && recovered && r.violations.is_empty() && r.stop == acp_core::netsim::StopReason::RoundsReached;
        if ok {
            converged += 1;
        } else {
            failures.push(format!("run {i} seed {seed}: compatible {compatible} recovered {recovered} stop {:?}", r.stop));
        }
        carry.absorb(&format!("recovery run {i}"), &lines);
    }
    for f in failures.iter().take(5) {
        eprintln!("  {f}");
    }
    outcome(converged == RECOVERY_RUNS, format!("{converged}/{RECOVERY_RUNS} seeds converged after recovery"))
}

// ---- 8: message-delay pattern --------------------------------------------

const PATTERN: [&str; 8] = ["proposal", "vote1", "vote2", "pre_prepare", "prepare", "commit", "reply", "block"];

fn pattern_criterion(carry: &mut Carry) -> Outcome {
    let mut rounds_checked = 0;
    let mut bad = Vec::new();
    for (i, n) in [4u32, 7, 10, 16, 25].into_iter().enumerate() {
        for seed in 0..4u64 {
            let s = scenario(&format!(r#"{{"version": 1, "n_all": {n}, "rounds": 6, "seed": {seed}}}"#));
            let (_, lines) = run_lines(&s);
            let mut first: BTreeMap<u64, BTreeMap<String, u64>> = BTreeMap::new();
            for r in records(&lines).into_iter().filter(|r| r.kind == "deliver") {
                let (Some(round), Some(stage)) = (r.round, r.stage) else { continue };
                first.entry(round).or_default().entry(stage).or_insert(r.t);
            }
            // the run stops once the last round closes, with its block broadcast still in flight
            for round in 1..s.rounds {
                rounds_checked += 1;
                let stages = first.get(&round).cloned().unwrap_or_default();
                let names: BTreeSet<&str> = stages.keys().map(String::as_str).collect();
                let expected: BTreeSet<&str> = PATTERN.into_iter().collect();
                let times: Vec<u64> = PATTERN.iter().filter_map(|p| stages.get(*p).copied()).collect();
                let ordered = times.len() == 8 && times.windows(2).all(|w| w[0] < w[1]);
                if names != expected || !ordered {
                    bad.push(format!("n={n} seed={seed} round={round}: {stages:?}"));
                }
            }
            carry.absorb(&format!("pattern run {i}/{seed}"), &lines);
        }
    }
    for b in bad.iter().take(3) {
        eprintln!("  {b}");
    }
    outcome(bad.is_empty(), format!("{rounds_checked} fault-free rounds, {} off-pattern", bad.len()))
}

// ---- 9: incentives --------------------------------------------------------

fn parse_rational(s: &str) -> BigRational {
    if let Some((n, d)) = s.split_once('/') {
        return BigRational::new(n.parse::<BigInt>().unwrap(), d.parse::<BigInt>().unwrap());
    }
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    let scale = BigInt::from(10u32).pow(frac.len() as u32);
    BigRational::new(format!("{whole}{frac}").parse::<BigInt>().unwrap(), scale)
}

fn exact(v: &Value) -> BigRational {
    parse_rational(v.as_str().expect("exact values are strings"))
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Re-derives every settled round from the trace: committee credits equal
/// the per-round issuance times the packed-size factor, potential-committee
/// credits follow the previous round, and balances conserve what was issued.
fn check_ledger(lines: &[String]) -> Result<usize, String> {
    let recs = records(lines);
    let s: Scenario = serde_json::from_value(recs[0].detail["scenario"].clone()).map_err(|e| e.to_string())?;
    let econ = serde_json::to_value(&s.economy).unwrap();
    let e = exact(&econ["annual_issuance"]);
    let rpy = int(econ["rounds_per_year"].as_u64().unwrap());
    let ratio: Vec<u64> = econ["ratio"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let k = exact(&econ["k"]);
    let c_limit = exact(&econ["c_limit_mb"]);
    let t_ratio = exact(&econ["t_ratio"]);
    let per_round = e / rpy.clone();
    let mut prev: Option<(bool, BigRational)> = None;
    let (mut abc_total, mut abit_total) = (BigRational::zero(), BigRational::zero());
    let mut rounds = 0;
    for r in recs.iter().filter(|r| r.kind == "settle") {
        let d = &r.detail;
        let round = r.round.unwrap();
        let is_final = d["final"].as_bool().unwrap();
        let abc = exact(&d["abc"]);
        let abit = exact(&d["abit"]);
        let mut role_sums: BTreeMap<String, BigRational> = BTreeMap::new();
        for c in d["credits"].as_array().unwrap() {
            *role_sums.entry(c[1].as_str().unwrap().to_string()).or_insert_with(BigRational::zero) += exact(&c[2]);
        }
        let committee_sum = ["miner", "leader", "verifier"]
            .iter()
            .filter_map(|role| role_sums.get(*role))
            .fold(BigRational::zero(), |a, b| a + b);
        let pc_sum = role_sums.get("potential_committee").cloned().unwrap_or_else(BigRational::zero);
        if is_final {
            let mb = (int(d["packed_bytes"].as_u64().unwrap()) / int(MIB)).min(c_limit.clone());
            let factor = (c_limit.clone() - BigRational::one() / (mb + k.clone())) / c_limit.clone();
            let expected = per_round.clone() * factor.clone();
            if abc != expected || committee_sum != abc {
                return Err(format!("round {round}: abc {abc} credits {committee_sum} expected {expected}"));
            }
            // each role's pool is its ratio share, split evenly across its members
            let counts = [1, d["n_leaders"].as_u64().unwrap(), d["n_fc"].as_u64().unwrap()];
            for (i, role) in ["miner", "leader", "verifier"].into_iter().enumerate() {
                let pool = per_round.clone() * int(ratio[i as usize] as u64) / int(10) * factor.clone();
                let got = role_sums.get(role).cloned().unwrap_or_else(BigRational::zero);
                if got != pool {
                    return Err(format!("round {round}: {role} credits {got}, expected {pool}"));
                }
                let each: Vec<BigRational> = d["credits"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .filter(|c| c[1] == role)
                    .map(|c| exact(&c[2]))
                    .collect();
                if each.len() as u64 != counts[i] || each.iter().any(|x| *x != pool.clone() / int(counts[i])) {
                    return Err(format!("round {round}: uneven {role} split"));
                }
            }
        } else if !abc.is_zero() || !committee_sum.is_zero() {
            return Err(format!("round {round}: tentative round issued ABC"));
        }
        let expected_abit = match &prev {
            Some((true, prev_abc)) if d["n_pc"].as_u64().unwrap() > 0 => prev_abc.clone() * t_ratio.clone() / rpy.clone(),
            _ => BigRational::zero(),
        };
        if abit != expected_abit || pc_sum != abit {
            return Err(format!("round {round}: abit {abit} credits {pc_sum} expected {expected_abit}"));
        }
        abc_total += abc.clone();
        abit_total += abit;
        prev = Some((is_final, abc));
        rounds += 1;
    }
    let end = recs.iter().find(|r| r.kind == "end").ok_or("no end line")?;
    let (mut held_abc, mut held_abit) = (BigRational::zero(), BigRational::zero());
    for a in end.detail["ledger"].as_array().unwrap() {
        held_abc += exact(&a["abc"]) + exact(&a["frozen"]);
        held_abit += exact(&a["abit"]);
    }
    if held_abc != abc_total || held_abit != abit_total {
        return Err(format!("balances {held_abc}/{held_abit} differ from issuance {abc_total}/{abit_total}"));
    }
    Ok(rounds)
}

fn incentives_criterion(carry: &mut Carry) -> Outcome {
    // extra runs with sortition-sized committees, selfish packing and varied sizes
    let extra = [
        r#"{"version": 1, "n_all": 40, "rounds": 8, "seed": 1, "committee": {"n_pc": 30, "n_fc": 12, "n_valid_leaders": 3, "n_empty_leaders": 3}, "workload": {"tx_per_round": 40, "tx_size": 900, "size_jitter": 400}}"#,
        r#"{"version": 1, "n_all": 13, "rounds": 8, "seed": 2, "adversary": {"strategy": "selfish_pack", "random_corrupt": 4}, "workload": {"tx_per_round": 20, "size_jitter": 300}}"#,
        r#"{"version": 1, "n_all": 10, "rounds": 6, "seed": 3, "max_block_bytes": 4000, "workload": {"tx_per_round": 30}}"#,
        r#"{"version": 1, "n_all": 10, "rounds": 6, "seed": 4, "economy": {"ratio": [10, 0, 0], "k": "1/2", "c_limit_mb": "3"}}"#,
    ];
    for (i, text) in extra.iter().enumerate() {
        let (_, lines) = run_lines(&scenario(text));
        carry.absorb(&format!("incentive run {i}"), &lines);
    }
    for f in carry.ledger_failures.iter().take(5) {
        eprintln!("  {f}");
    }
    outcome(
        carry.ledger_failures.is_empty() && carry.ledger_rounds > 0,
        format!(
            "{} settled rounds over {} traces re-derived exactly, {} mismatches",
            carry.ledger_rounds,
            carry.replays,
            carry.ledger_failures.len()
        ),
    )
}

fn determinism_criterion(carry: &Carry) -> Outcome {
    for f in carry.replay_failures.iter().take(5) {
        eprintln!("  {f}");
    }
    outcome(
        carry.replay_failures.is_empty(),
        format!("{} of {} traces replayed OK", carry.replays - carry.replay_failures.len(), carry.replays),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |idx: u32, name: &str, started: Instant, budget_s: Option<f64>, o: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        let in_budget = budget_s.map_or(true, |b| secs < b);
        let pass = o.pass && in_budget;
        if !pass {
            failed += 1;
        }
        let budget = budget_s.map_or(String::new(), |b| format!(", budget {b} s"));
        println!("[{}] {idx:>2}. {name}: {} ({secs:.1} s{budget})", if pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let mut carry = Carry::default();

    let t = Instant::now();
    report(1, "analytic agreement time", t, Some(1.0), agreement_time_criterion());
    let t = Instant::now();
    report(2, "throughput table", t, Some(1.0), throughput_criterion());
    let t = Instant::now();
    report(3, "message volume", t, Some(1.0), volume_criterion());
    let t = Instant::now();
    let o = safety_criterion(&mut carry);
    report(4, "safety suite", t, Some(600.0), o);
    let t = Instant::now();
    let o = liveness_criterion(&mut carry);
    report(5, "liveness suite", t, None, o);
    let t = Instant::now();
    report(6, "reduction oracle equivalence", t, Some(120.0), reduction_criterion());
    let t = Instant::now();
    let o = recovery_criterion(&mut carry);
    report(7, "partition recovery", t, None, o);
    let t = Instant::now();
    let o = pattern_criterion(&mut carry);
    report(8, "eight-delay round pattern", t, None, o);
    let t = Instant::now();
    let o = incentives_criterion(&mut carry);
    report(9, "incentive conservation", t, None, o);
    let t = Instant::now();
    report(10, "replay determinism", t, None, determinism_criterion(&carry));

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
