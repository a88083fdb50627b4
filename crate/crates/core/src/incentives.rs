// SPDX-License-Identifier: Apache-2.0

//! Reward accounting: committee-role ABC rewards with the packed-size
//! adjustment, ABIT rewards for the potential committee, frozen vesting and
//! the reputation update rule. All amounts are exact rationals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sortition::Reputation;
use crate::NodeId;

/// Exact rational configured as `"1.01"`, `"3/4"` or an integer.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub BigRational);

impl Exact {
    pub fn int(v: i64) -> Self {
        Exact(BigRational::from_integer(v.into()))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Exact(BigRational::new(n.into(), d.into()))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_exact(&self.0))
    }
}

impl FromStr for Exact {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_exact(s).map(Exact)
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Exact::int(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn parse_exact(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: BigInt = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(BigRational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(format!("not a number: {s:?}"));
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(format!("not a number: {s:?}"));
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| format!("not a number: {s:?}"))? };
    let d = BigInt::from(10u32).pow(frac.len() as u32);
    let v = BigRational::new(n, d);
    Ok(if neg { -v } else { v })
}

/// Terminating decimals print as decimals, anything else as `p/q`.
pub fn format_exact(v: &BigRational) -> String {
    if v.is_integer() {
        return v.to_integer().to_string();
    }
    let mut d = v.denom().clone();
    let mut places = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() || (&d % &five).is_zero() {
        if (&d % &two).is_zero() {
            d /= &two;
        } else {
            d /= &five;
        }
        places += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", v.numer(), v.denom());
    }
    let scaled = (v * BigRational::from_integer(BigInt::from(10).pow(places))).to_integer();
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{:0>width$}", digits, width = places as usize + 1);
    let (i, f) = digits.split_at(digits.len() - places as usize);
    let f = f.trim_end_matches('0');
    format!("{}{}.{}", if neg { "-" } else { "" }, i, f)
}

pub fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomyParams {
    /// ABC issued per year for the current period.
    pub annual_issuance: Exact,
    /// Miner : leader : verifier income ratio, summing to 10.
    pub ratio: [u32; 3],
    /// Convergence constant of the packed-size adjustment.
    pub k: Exact,
    /// Block capacity in MiB.
    pub c_limit_mb: Exact,
    /// ABIT issued per ABC issued in the previous round.
    pub t_ratio: Exact,
    pub rounds_per_year: u64,
    /// Share of each ABC credit that is frozen and vests over `vesting_rounds`.
    pub frozen_fraction: Exact,
    pub vesting_rounds: u64,
    pub reputation: ReputationRule,
}

impl Default for EconomyParams {
    fn default() -> Self {
        EconomyParams {
            annual_issuance: Exact::int(365 * 24 * 60 * 6),
            ratio: [5, 3, 2],
            k: Exact::int(1),
            c_limit_mb: Exact::int(4),
            t_ratio: Exact::int(1000),
            rounds_per_year: 365 * 24 * 60 * 6,
            frozen_fraction: Exact::ratio(1, 5),
            vesting_rounds: 10,
            reputation: ReputationRule::default(),
        }
    }
}

impl EconomyParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.ratio.iter().sum::<u32>() != 10 {
            return Err(format!("ratio must sum to 10, got {:?}", self.ratio));
        }
        if !self.k.0.is_positive() {
            return Err("k must be positive".into());
        }
        if !self.c_limit_mb.0.is_positive() {
            return Err("c_limit_mb must be positive".into());
        }
        // keeps the adjustment factor positive even for an empty block
        if self.c_limit_mb.0.clone() * self.k.0.clone() <= BigRational::one() {
            return Err("c_limit_mb * k must exceed 1".into());
        }
        if self.rounds_per_year == 0 {
            return Err("rounds_per_year must be positive".into());
        }
        if self.annual_issuance.0.is_negative() || self.t_ratio.0.is_negative() {
            return Err("issuance and t_ratio must be non-negative".into());
        }
        if self.frozen_fraction.0.is_negative() || self.frozen_fraction.0 > BigRational::one() {
            return Err("frozen_fraction must be in [0, 1]".into());
        }
        if self.vesting_rounds == 0 {
            return Err("vesting_rounds must be positive".into());
        }
        self.reputation.validate()
    }

    fn per_round(&self) -> BigRational {
        self.annual_issuance.0.clone() / BigRational::from_integer(self.rounds_per_year.into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReputationRule {
    pub honest_factor: Exact,
    pub malicious_factor: Exact,
    pub cap: Exact,
    pub floor: Exact,
}

impl Default for ReputationRule {
    fn default() -> Self {
        ReputationRule {
            honest_factor: Exact::ratio(101, 100),
            malicious_factor: Exact::ratio(1, 2),
            cap: Exact::int(100),
            floor: Exact::ratio(1, 100),
        }
    }
}

impl ReputationRule {
    pub fn validate(&self) -> Result<(), String> {
        let min = BigRational::new(1.into(), Reputation::SCALE.into());
        if self.floor.0 < min {
            return Err("reputation floor must be at least 0.000001".into());
        }
        if self.cap.0 < self.floor.0 {
            return Err("reputation cap below floor".into());
        }
        if !self.honest_factor.0.is_positive() || !self.malicious_factor.0.is_positive() {
            return Err("reputation factors must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcRewards {
    pub miner: BigRational,
    pub leader_each: BigRational,
    pub verifier_each: BigRational,
}

pub fn fc_base_rewards(params: &EconomyParams, n_leaders: u32, n_fc: u32) -> FcRewards {
    assert!(n_leaders > 0 && n_fc > 0, "committee and leader counts must be positive");
    let per_round = params.per_round();
    let share = |i: usize| per_round.clone() * BigRational::new(params.ratio[i].into(), 10.into());
    FcRewards {
        miner: share(0),
        leader_each: share(1) / BigRational::from_integer(n_leaders.into()),
        verifier_each: share(2) / BigRational::from_integer(n_fc.into()),
    }
}

/// `(c_limit - 1/(c_final + k)) / c_limit`.
pub fn non_selfish_factor(c_final_mb: &BigRational, params: &EconomyParams) -> BigRational {
    let c_limit = &params.c_limit_mb.0;
    (c_limit - BigRational::one() / (c_final_mb + &params.k.0)) / c_limit
}

pub fn non_selfish_adjust(base: &BigRational, c_final_mb: &BigRational, params: &EconomyParams) -> BigRational {
    base * non_selfish_factor(c_final_mb, params)
}

/// Packed bytes as MiB.
pub fn bytes_to_mb(bytes: u64) -> BigRational {
    BigRational::new(bytes.into(), (1u64 << 20).into())
}

/// ABIT per potential-committee member; zero unless the previous round was final.
pub fn pc_reward(prev_abc_issued: &BigRational, prev_final: bool, params: &EconomyParams, n_pc: u32) -> BigRational {
    if !prev_final || n_pc == 0 {
        return BigRational::zero();
    }
    prev_abc_issued * &params.t_ratio.0 / BigRational::from_integer((params.rounds_per_year * n_pc as u64).into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HonestSuccess,
    DetectedMalicious,
    Inactive,
}

fn scale_reputation(rep: Reputation, factor: &BigRational) -> BigRational {
    BigRational::from_integer(rep.0.into()) * factor
}

fn rational_to_micros(v: &BigRational) -> u64 {
    v.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

pub fn update_reputation(rep: Reputation, verdict: Verdict, rule: &ReputationRule) -> Reputation {
    let scale = BigRational::from_integer(Reputation::SCALE.into());
    let cap = rational_to_micros(&(rule.cap.0.clone() * &scale));
    let floor = rational_to_micros(&(rule.floor.0.clone() * &scale)).max(1);
    match verdict {
        Verdict::HonestSuccess => Reputation(rational_to_micros(&scale_reputation(rep, &rule.honest_factor.0)).min(cap)),
        Verdict::DetectedMalicious => Reputation(rational_to_micros(&scale_reputation(rep, &rule.malicious_factor.0)).max(floor)),
        Verdict::Inactive => rep,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Miner,
    Leader,
    Verifier,
    PotentialCommittee,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credit {
    pub node: NodeId,
    pub role: Role,
    /// ABC for committee roles, ABIT for the potential committee.
    pub amount: BigRational,
}

/// Facts about one closed round needed for settlement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundSummary {
    pub round: u64,
    pub final_block: Option<FinalRound>,
    pub pc_members: Vec<NodeId>,
    pub verdicts: BTreeMap<NodeId, Verdict>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalRound {
    pub miner: NodeId,
    pub leaders: Vec<NodeId>,
    pub verifiers: Vec<NodeId>,
    pub packed_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u64,
    pub is_final: bool,
    pub abc_issued: BigRational,
    pub abit_issued: BigRational,
    pub factor: BigRational,
    pub n_leaders: u32,
    pub n_fc: u32,
    pub n_pc: u32,
    pub credits: Vec<Credit>,
}

#[derive(Clone, Debug)]
struct Tranche {
    per_round: BigRational,
    rounds_left: u64,
}

#[derive(Clone, Debug)]
pub struct Account {
    pub abc: BigRational,
    pub abit: BigRational,
    pub frozen: BigRational,
    pub reputation: Reputation,
    tranches: Vec<Tranche>,
}

impl Account {
    fn new(reputation: Reputation) -> Self {
        Account {
            abc: BigRational::zero(),
            abit: BigRational::zero(),
            frozen: BigRational::zero(),
            reputation,
            tranches: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RewardLedger {
    params: EconomyParams,
    accounts: Vec<Account>,
    records: BTreeMap<u64, RoundRecord>,
}

impl RewardLedger {
    pub fn new(params: EconomyParams, reputations: &[Reputation]) -> Self {
        RewardLedger {
            params,
            accounts: reputations.iter().map(|r| Account::new(*r)).collect(),
            records: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &EconomyParams {
        &self.params
    }

    pub fn accounts(&self) -> &[Account] {
        &self.accounts
    }

    pub fn reputations(&self) -> Vec<Reputation> {
        self.accounts.iter().map(|a| a.reputation).collect()
    }

    pub fn record(&self, round: u64) -> Option<&RoundRecord> {
        self.records.get(&round)
    }

    pub fn records(&self) -> impl Iterator<Item = &RoundRecord> {
        self.records.values()
    }

    fn credit_abc(&mut self, node: NodeId, amount: &BigRational) {
        let frozen = amount * &self.params.frozen_fraction.0;
        let acct = &mut self.accounts[node.index()];
        acct.abc += amount - &frozen;
        if !frozen.is_zero() {
            acct.frozen += &frozen;
            acct.tranches.push(Tranche {
                per_round: frozen / BigRational::from_integer(self.params.vesting_rounds.into()),
                rounds_left: self.params.vesting_rounds,
            });
        }
    }

    fn vest(&mut self) {
        for acct in &mut self.accounts {
            for t in &mut acct.tranches {
                acct.frozen -= &t.per_round;
                acct.abc += &t.per_round;
                t.rounds_left -= 1;
            }
            acct.tranches.retain(|t| t.rounds_left > 0);
        }
    }

    /// Settles one closed round: vesting, potential-committee ABIT, committee
    /// ABC for a final round, then reputation verdicts.
    pub fn settle(&mut self, summary: &RoundSummary) -> &RoundRecord {
        self.vest();
        let mut credits = Vec::new();
        let n_pc = summary.pc_members.len() as u32;
        let prev = summary.round.checked_sub(1).and_then(|r| self.records.get(&r));
        let (prev_abc, prev_final) = prev.map_or((BigRational::zero(), false), |p| (p.abc_issued.clone(), p.is_final));
        let pc_each = pc_reward(&prev_abc, prev_final, &self.params, n_pc);
        let mut abit_issued = BigRational::zero();
        if !pc_each.is_zero() {
            for &n in &summary.pc_members {
                self.accounts[n.index()].abit += &pc_each;
                abit_issued += &pc_each;
                credits.push(Credit { node: n, role: Role::PotentialCommittee, amount: pc_each.clone() });
            }
        }
        let mut abc_issued = BigRational::zero();
        let mut factor = BigRational::zero();
        let (mut n_leaders, mut n_fc) = (0, 0);
        if let Some(f) = &summary.final_block {
            n_leaders = f.leaders.len() as u32;
            n_fc = f.verifiers.len() as u32;
            let c_final = bytes_to_mb(f.packed_bytes).min(self.params.c_limit_mb.0.clone());
            factor = non_selfish_factor(&c_final, &self.params);
            let base = fc_base_rewards(&self.params, n_leaders.max(1), n_fc.max(1));
            let mut pay = |ledger: &mut Self, node: NodeId, role: Role, base: &BigRational| {
                let amount = base * &factor;
                ledger.credit_abc(node, &amount);
                abc_issued += &amount;
                credits.push(Credit { node, role, amount });
            };
            pay(self, f.miner, Role::Miner, &base.miner);
            for &l in &f.leaders {
                pay(self, l, Role::Leader, &base.leader_each);
            }
            for &v in &f.verifiers {
                pay(self, v, Role::Verifier, &base.verifier_each);
            }
        }
        for (node, verdict) in &summary.verdicts {
            let acct = &mut self.accounts[node.index()];
            acct.reputation = update_reputation(acct.reputation, *verdict, &self.params.reputation);
        }
        let record = RoundRecord {
            round: summary.round,
            is_final: summary.final_block.is_some(),
            abc_issued,
            abit_issued,
            factor,
            n_leaders,
            n_fc,
            n_pc,
            credits,
        };
        self.records.insert(summary.round, record);
        &self.records[&summary.round]
    }

    /// CSV snapshot: `node_id,abc,abit,frozen,reputation`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,abc,abit,frozen,reputation\n");
        for (i, a) in self.accounts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                format_exact(&a.abc),
                format_exact(&a.abit),
                format_exact(&a.frozen),
                format_exact(&a.reputation.to_rational())
            ));
        }
        out
    }
}

/// Sum of committee credits a round should issue.
pub fn expected_round_issuance(params: &EconomyParams, n_leaders: u32, n_fc: u32, packed_bytes: u64) -> BigRational {
    let b = fc_base_rewards(params, n_leaders, n_fc);
    let c_final = bytes_to_mb(packed_bytes).min(params.c_limit_mb.0.clone());
    let f = non_selfish_factor(&c_final, params);
    non_selfish_adjust(&b.miner, &c_final, params)
        + b.leader_each * BigRational::from_integer(n_leaders.into()) * &f
        + b.verifier_each * BigRational::from_integer(n_fc.into()) * &f
}
