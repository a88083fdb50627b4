// SPDX-License-Identifier: Apache-2.0

//! Per-node protocol state machine.
//!
//! A node is driven by three kinds of input: start, message delivery and
//! timer expiry. Each call returns the messages to send, timers to arm and
//! notes for the trace. Rounds follow the local chain tip: committee
//! selection, proposals, two reduction votes, parallel agreement instances,
//! then a final or tentative block that opens the next round.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::{sign, Digest, KeyPair, KeyRegistry, PublicKey, Signature, VrfOutput};
use crate::ledger::{
    make_empty_block, AppendOutcome, Block, Chain, CommitSig, ConsensusKind, InstanceKind, QuorumCert, Transaction,
    TxPool,
};
use crate::message::{
    pbft_bytes, proposal_bytes, vote_bytes, Envelope, InstanceId, Payload, PbftMsg, Phase, ProposalMsg, VoteMsg, VoteStep,
};
use crate::pbft::{coordinator_resolve, coordinator_start, CommitVote, Coordinator, PbftAction, PbftError, PhaseWindows, Resolution};
use crate::reduction::{choose_candidate, quorum_threshold, reduce, second_step_choice, ReductionError, ReductionView};
use crate::sortition::{
    credential_message, make_credential, passes_fc_threshold, rank_leaders, seed_after, select_pc, CommitteeParams,
    Credential, NodeRecord, RandomSeed, Reputation,
};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timeouts {
    /// Proposal collection window.
    pub lambda_pc: u64,
    /// Per-step wait inside the final committee.
    pub lambda_fc: u64,
    /// Network-wide broadcast allowance.
    pub lambda_all: u64,
    /// Synchronization barrier, measured from round start.
    pub sbr: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            lambda_pc: 500,
            lambda_fc: 200,
            lambda_all: 3000,
            sbr: 3400,
        }
    }
}

impl Timeouts {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_pc == 0 || self.lambda_fc == 0 || self.lambda_all == 0 || self.sbr == 0 {
            return Err("all timeouts must be positive".into());
        }
        if self.sbr <= self.lambda_pc + 2 * self.lambda_fc {
            return Err(format!(
                "sbr ({}) must exceed lambda_pc + 2 * lambda_fc ({})",
                self.sbr,
                self.lambda_pc + 2 * self.lambda_fc
            ));
        }
        Ok(())
    }

    /// Offset of the agreement start from round start.
    pub fn agreement_start(&self) -> u64 {
        self.lambda_pc + 2 * self.lambda_fc
    }

    /// Longest a round can stay open at any node.
    pub fn round_bound(&self) -> u64 {
        self.sbr + self.lambda_all
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    pub committee: CommitteeParams,
    pub timeouts: Timeouts,
    pub max_block_bytes: u64,
    /// Time to compute every node's weight before a round can start.
    pub processing_ms: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            committee: CommitteeParams::default(),
            timeouts: Timeouts::default(),
            max_block_bytes: 4 << 20,
            processing_ms: 1000,
        }
    }
}

/// Read-only facts shared by every node of a run.
#[derive(Clone, Debug)]
pub struct Environment {
    pub params: ProtocolParams,
    pub registry: KeyRegistry,
    pub public_keys: Vec<PublicKey>,
}

impl Environment {
    pub fn n_all(&self) -> u32 {
        self.public_keys.len() as u32
    }

    pub fn all_nodes(&self) -> Vec<NodeId> {
        (0..self.n_all()).map(NodeId).collect()
    }
}

/// Reputation snapshots keyed by the first round they apply to.
pub type ReputationHistory = BTreeMap<u64, Vec<Reputation>>;

pub struct Ctx<'a> {
    pub now: u64,
    pub env: &'a Environment,
    pub reputation: &'a ReputationHistory,
}

impl<'a> Ctx<'a> {
    pub fn reputations(&self, round: u64) -> &'a [Reputation] {
        self.reputation
            .range(..=round)
            .next_back()
            .or_else(|| self.reputation.iter().next())
            .map(|(_, v)| v.as_slice())
            .expect("reputation history is never empty")
    }

    fn params(&self) -> &'a ProtocolParams {
        &self.env.params
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    Crash,
    Equivocate,
    WithholdVotes,
    DelayMax,
    SelfishPack,
}

impl Behavior {
    /// Supports every agreement instance regardless of commit locks.
    pub fn double_support(self) -> bool {
        self == Behavior::Equivocate
    }

    pub fn selfish(self) -> bool {
        self == Behavior::SelfishPack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimerKind {
    Begin,
    Vote1,
    Vote2,
    Output,
    Sbr,
    Fallback,
}

impl TimerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimerKind::Begin => "begin",
            TimerKind::Vote1 => "vote1",
            TimerKind::Vote2 => "vote2",
            TimerKind::Output => "output",
            TimerKind::Sbr => "sbr",
            TimerKind::Fallback => "fallback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timer {
    pub kind: TimerKind,
    pub round: u64,
    pub epoch: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Observer,
    PcMember,
    FcMember,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Observer => "observer",
            Role::PcMember => "pc_member",
            Role::FcMember => "fc_member",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Input<'a> {
    Start,
    Message(&'a Envelope),
    Timer(Timer),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Note {
    Begin { round: u64, role: Role },
    Proposed { round: u64, hash: Digest },
    Candidate { round: u64, hash: Digest },
    Decided { instance: InstanceId, hash: Digest },
    Closed { round: u64, kind: ConsensusKind, block: Arc<Block>, seed: RandomSeed, via: &'static str },
    Confirmed { blocks: Vec<Arc<Block>> },
    Discarded { blocks: Vec<Arc<Block>> },
    Dropped { reason: &'static str },
    Stale,
    Evidence { round: u64, culprit: NodeId, what: &'static str },
    Violation { round: u64, what: String },
    SyncRequested { peer: NodeId, from_round: u64 },
    Recovered { anchor_round: u64, adopted: usize, discarded: usize },
    Restart { round: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Send { to: Vec<NodeId>, payload: Payload },
    SetTimer { at: u64, timer: Timer },
    Note(Note),
}

/// Everything a node keeps about the round it is currently running.
#[derive(Clone, Debug)]
pub struct RoundState {
    pub round: u64,
    pub begin_at: u64,
    pub role: Role,
    pub seed: RandomSeed,
    pub predecessor: Digest,
    pub pc: Arc<BTreeSet<NodeId>>,
    pub empty: Arc<Block>,
    pub credential: Option<Credential>,
    /// Verified final-committee credentials, own included.
    pub fc_seen: BTreeMap<NodeId, Credential>,
    pub proposals: BTreeMap<NodeId, ProposalMsg>,
    pub view: ReductionView,
    pub n_quorum: u32,
    pub step1_open: bool,
    pub step2_open: bool,
    pub coordinator: Option<Coordinator>,
    pub windows: Option<PhaseWindows>,
    early: Vec<Envelope>,
    pub my_final: Option<Arc<Block>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub stale: u64,
    pub dropped: u64,
    pub recoveries: u64,
    pub restarts: u64,
}

const FUTURE_ROUNDS: u64 = 2;
const MAX_ORPHANS: usize = 64;

pub struct Node {
    pub id: NodeId,
    keys: KeyPair,
    pub behavior: Behavior,
    /// Multiplier on local processing time.
    pub speed: u64,
    chain: Chain,
    pool: TxPool,
    chain_txs: BTreeSet<Digest>,
    round: Option<RoundState>,
    epoch: u64,
    future: BTreeMap<u64, Vec<Envelope>>,
    orphans: BTreeMap<Digest, Arc<Block>>,
    last_sync_at: Option<u64>,
    committees: Vec<(u64, Digest, Arc<BTreeSet<NodeId>>)>,
    pub stats: NodeStats,
}

impl Node {
    pub fn new(id: NodeId, keys: KeyPair, genesis: Block, behavior: Behavior, speed: u64) -> Self {
        Node {
            id,
            keys,
            behavior,
            speed: speed.max(1),
            chain: Chain::new(genesis),
            pool: TxPool::new(),
            chain_txs: BTreeSet::new(),
            round: None,
            epoch: 0,
            future: BTreeMap::new(),
            orphans: BTreeMap::new(),
            last_sync_at: None,
            committees: Vec::new(),
            stats: NodeStats::default(),
        }
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &TxPool {
        &self.pool
    }

    pub fn round_state(&self) -> Option<&RoundState> {
        self.round.as_ref()
    }

    /// Round the node is working on: one past its tip.
    pub fn current_round(&self) -> u64 {
        self.chain.tip_round() + 1
    }

    pub fn add_transactions(&mut self, txs: &[Transaction]) {
        for tx in txs {
            if !self.chain_txs.contains(&tx.id) {
                self.pool.insert(tx.clone());
            }
        }
    }

    pub fn handle(&mut self, ctx: &Ctx, input: Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::Start => self.schedule_begin(ctx, &mut out),
            Input::Message(env) => self.on_message(ctx, env, &mut out),
            Input::Timer(t) => self.on_timer(ctx, t, &mut out),
        }
        out
    }

    fn note(out: &mut Vec<Output>, n: Note) {
        out.push(Output::Note(n));
    }

    fn drop_msg(&mut self, out: &mut Vec<Output>, reason: &'static str) {
        self.stats.dropped += 1;
        Self::note(out, Note::Dropped { reason });
    }

    fn schedule_begin(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        self.epoch += 1;
        out.push(Output::SetTimer {
            at: ctx.now + ctx.params().processing_ms * self.speed,
            timer: Timer { kind: TimerKind::Begin, round: self.current_round(), epoch: self.epoch },
        });
    }

    fn restart(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        self.round = None;
        self.stats.restarts += 1;
        Self::note(out, Note::Restart { round: self.current_round() });
        self.schedule_begin(ctx, out);
    }

    fn records(&self, ctx: &Ctx, round: u64) -> Vec<NodeRecord> {
        let reps = ctx.reputations(round);
        ctx.env
            .public_keys
            .iter()
            .enumerate()
            .map(|(i, pk)| NodeRecord {
                node_id: NodeId(i as u32),
                public_key: *pk,
                reputation: reps.get(i).copied().unwrap_or(Reputation::ONE),
            })
            .collect()
    }

    fn committee(&mut self, ctx: &Ctx, round: u64, seed: &RandomSeed) -> Arc<BTreeSet<NodeId>> {
        if let Some((_, _, pc)) = self.committees.iter().find(|(r, s, _)| *r == round && *s == seed.value) {
            return pc.clone();
        }
        let records = self.records(ctx, round);
        let m = (ctx.params().committee.n_pc as usize).min(records.len());
        let pc: BTreeSet<NodeId> = select_pc(&records, seed, round, m)
            .expect("reputations are positive")
            .into_iter()
            .collect();
        let pc = Arc::new(pc);
        if self.committees.len() >= 8 {
            self.committees.remove(0);
        }
        self.committees.push((round, seed.value, pc.clone()));
        pc
    }

    /// Seed for the round after the block with hash `anchor`.
    fn seed_through(&self, anchor: &Digest) -> Option<RandomSeed> {
        let pos = self.chain.all_blocks().position(|b| b.block_hash == *anchor)?;
        Some(seed_after(self.chain.all_blocks().take(pos + 1).map(|b| b.as_ref())))
    }

    fn fc_member(ctx: &Ctx, pc: &BTreeSet<NodeId>, node: NodeId, round: u64, vrf: &VrfOutput) -> bool {
        let Some(pk) = ctx.env.public_keys.get(node.index()) else {
            return false;
        };
        pc.contains(&node)
            && ctx.env.registry.vrf_verify(pk, &credential_message(round), &vrf.value, &vrf.proof)
            && passes_fc_threshold(&vrf.value, &ctx.params().committee)
    }

    fn verify_sig(ctx: &Ctx, node: NodeId, msg: &[u8], sig: &Signature) -> bool {
        match ctx.env.public_keys.get(node.index()) {
            Some(pk) => ctx.env.registry.verify_sig(pk, msg, sig),
            None => false,
        }
    }

    // ---- round start -------------------------------------------------------

    fn begin_round(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        let round = self.current_round();
        let tip = self.chain.tip().clone();
        let seed = seed_after(self.chain.all_blocks().map(|b| b.as_ref()));
        let pc = self.committee(ctx, round, &seed);
        let params = ctx.params();
        let t = params.timeouts;
        let empty = Arc::new(make_empty_block(round, tip.block_hash));
        let mut rs = RoundState {
            round,
            begin_at: ctx.now,
            role: Role::Observer,
            seed,
            predecessor: tip.block_hash,
            pc: pc.clone(),
            empty: empty.clone(),
            credential: None,
            fc_seen: BTreeMap::new(),
            proposals: BTreeMap::new(),
            view: ReductionView::new(round, tip.block_hash),
            n_quorum: params.committee.n_fc,
            step1_open: true,
            step2_open: true,
            coordinator: None,
            windows: None,
            early: Vec::new(),
            my_final: None,
        };
        rs.view.blocks.insert(empty.block_hash, empty.clone());
        let timer = |kind, at| Output::SetTimer { at, timer: Timer { kind, round, epoch: self.epoch } };
        if pc.contains(&self.id) {
            rs.role = Role::PcMember;
            let cred = make_credential(self.id, &self.keys, round);
            rs.credential = Some(cred);
            if passes_fc_threshold(&cred.vrf.value, &params.committee) {
                rs.role = Role::FcMember;
                rs.fc_seen.insert(self.id, cred);
                let me = self.id;
                let selfish = self.behavior.selfish();
                let candidates = self.pool.iter().filter(|tx| !selfish || tx.submitter == me);
                let txs = crate::ledger::pool_select(candidates, params.max_block_bytes);
                let block = if txs.is_empty() {
                    empty.clone()
                } else {
                    Arc::new(Block::new(round, tip.block_hash, Some(me), txs, Vec::new()))
                };
                let proposal = ProposalMsg {
                    signature: sign(&self.keys, &proposal_bytes(&block.block_hash)),
                    block: block.clone(),
                    credential: cred,
                };
                Self::note(out, Note::Proposed { round, hash: block.block_hash });
                out.push(Output::Send { to: pc.iter().copied().collect(), payload: Payload::Proposal(proposal) });
                let b = ctx.now;
                out.push(timer(TimerKind::Vote1, b + t.lambda_pc));
                out.push(timer(TimerKind::Vote2, b + t.lambda_pc + t.lambda_fc));
                out.push(timer(TimerKind::Output, b + t.agreement_start()));
                out.push(timer(TimerKind::Sbr, b + t.sbr));
            }
        }
        out.push(timer(TimerKind::Fallback, ctx.now + t.round_bound()));
        Self::note(out, Note::Begin { round, role: rs.role });
        self.round = Some(rs);
        if let Some(msgs) = self.future.remove(&round) {
            for m in msgs {
                self.on_message(ctx, &m, out);
            }
        }
        self.future.retain(|r, _| *r > round);
    }

    // ---- timers ------------------------------------------------------------

    fn on_timer(&mut self, ctx: &Ctx, t: Timer, out: &mut Vec<Output>) {
        if t.epoch != self.epoch {
            return;
        }
        if t.kind == TimerKind::Begin {
            if self.round.is_none() {
                self.begin_round(ctx, out);
            }
            return;
        }
        if self.round.as_ref().map(|r| r.round) != Some(t.round) {
            return;
        }
        match t.kind {
            TimerKind::Begin => {}
            TimerKind::Vote1 => self.first_vote(ctx, out),
            TimerKind::Vote2 => self.second_vote(ctx, out),
            TimerKind::Output => self.start_agreement(ctx, out),
            TimerKind::Sbr => self.barrier(ctx, out),
            TimerKind::Fallback => {
                let empty = self.round.as_ref().expect("checked").empty.clone();
                self.close(ctx, ConsensusKind::Tentative, empty, "fallback", out);
            }
        }
    }

    fn fc_recipients(rs: &RoundState) -> Vec<NodeId> {
        rs.fc_seen.keys().copied().collect()
    }

    fn send_vote(&mut self, step: VoteStep, hash: Digest, out: &mut Vec<Output>) {
        let rs = self.round.as_ref().expect("round open");
        let cred = rs.credential.expect("committee member");
        let vote = VoteMsg {
            voter: self.id,
            round: rs.round,
            step,
            block_hash: hash,
            signature: sign(&self.keys, &vote_bytes(rs.round, step, &hash)),
            credential: cred.vrf,
        };
        out.push(Output::Send { to: Self::fc_recipients(rs), payload: Payload::Vote(vote) });
    }

    fn first_vote(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        let rs = self.round.as_mut().expect("round open");
        rs.n_quorum = ctx.params().committee.n_fc.max(rs.fc_seen.len() as u32);
        let proposals: Vec<_> = rs.proposals.values().cloned().collect();
        let candidate = match choose_candidate(&proposals) {
            Ok(b) => b,
            Err(ReductionError::NoProposals) | Err(_) => rs.empty.clone(),
        };
        rs.view.blocks.insert(candidate.block_hash, candidate.clone());
        let round = rs.round;
        Self::note(out, Note::Candidate { round, hash: candidate.block_hash });
        self.send_vote(VoteStep::One, candidate.block_hash, out);
    }

    fn second_vote(&mut self, _ctx: &Ctx, out: &mut Vec<Output>) {
        let rs = self.round.as_mut().expect("round open");
        rs.step1_open = false;
        let first = rs.view.step1.tally(rs.n_quorum);
        let choice = second_step_choice(first, rs.empty.block_hash);
        self.send_vote(VoteStep::Two, choice, out);
    }

    fn start_agreement(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        let double = self.behavior.double_support();
        let me = self.id;
        let rs = self.round.as_mut().expect("round open");
        rs.step2_open = false;
        let outcome = reduce(&rs.view, rs.n_quorum);
        let creds: Vec<Credential> = rs.fc_seen.values().copied().collect();
        let (valid, empty) = rank_leaders(&creds, &ctx.params().committee);
        let (coord, actions) = coordinator_start(me, rs.round, outcome, rs.empty.clone(), &valid, &empty, rs.n_quorum, double);
        rs.coordinator = Some(coord);
        rs.windows = Some(PhaseWindows { start: ctx.now, lambda: ctx.params().timeouts.lambda_fc });
        let early = std::mem::take(&mut rs.early);
        self.run_actions(ctx, actions, out);
        for env in early {
            self.on_message(ctx, &env, out);
        }
    }

    fn barrier(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        let rs = self.round.as_ref().expect("round open");
        let resolution = match &rs.coordinator {
            Some(c) => {
                let mine = rs.my_final.clone();
                coordinator_resolve(c, ctx.now, ctx.now, move |h| mine.clone().filter(|b| b.block_hash == *h))
            }
            None => Resolution::Tentative(rs.empty.clone()),
        };
        match resolution {
            Resolution::Final(b) => self.close(ctx, ConsensusKind::Final, b, "sbr", out),
            Resolution::Tentative(b) => self.close(ctx, ConsensusKind::Tentative, b, "sbr", out),
            Resolution::Pending => {}
        }
    }

    // ---- messages ----------------------------------------------------------

    fn on_message(&mut self, ctx: &Ctx, env: &Envelope, out: &mut Vec<Output>) {
        match &env.payload {
            Payload::Block(b) => return self.on_consensus_block(ctx, env.from, b.clone(), false, out),
            Payload::Reply(b) => return self.on_consensus_block(ctx, env.from, b.clone(), true, out),
            Payload::SyncRequest { from_round } => return self.on_sync_request(env.from, *from_round, out),
            Payload::SyncResponse { blocks } => return self.recover(ctx, blocks, out),
            _ => {}
        }
        let round = env.payload.round().expect("round-scoped message");
        let current = self.current_round();
        if round < current {
            self.stats.stale += 1;
            Self::note(out, Note::Stale);
            return;
        }
        if round > current || self.round.is_none() {
            if let Payload::Proposal(p) = &env.payload {
                if round > current && !self.chain.contains(&p.block.predecessor) {
                    self.request_sync(ctx, env.from, out);
                }
            }
            if round <= current + FUTURE_ROUNDS {
                self.future.entry(round).or_default().push(env.clone());
            } else {
                self.drop_msg(out, "too_far_ahead");
            }
            return;
        }
        match &env.payload {
            Payload::Proposal(p) => self.on_proposal(ctx, env.from, p, out),
            Payload::Vote(v) => self.on_vote(ctx, env.from, v, out),
            Payload::Pbft(m) => self.on_pbft(ctx, env, m, out),
            _ => unreachable!("handled above"),
        }
    }

    fn block_txs_valid(&self, ctx: &Ctx, block: &Block) -> bool {
        if block.tx_bytes() > ctx.params().max_block_bytes {
            return false;
        }
        let mut seen = BTreeSet::new();
        block
            .transactions
            .iter()
            .all(|t| t.payload_size > 0 && seen.insert(t.id) && !self.chain_txs.contains(&t.id))
    }

    fn on_proposal(&mut self, ctx: &Ctx, from: NodeId, p: &ProposalMsg, out: &mut Vec<Output>) {
        let Some(rs) = self.round.as_ref() else { return };
        if rs.role != Role::FcMember {
            return;
        }
        let b = &p.block;
        if b.predecessor != rs.predecessor {
            if !self.chain.contains(&b.predecessor) {
                self.request_sync(ctx, from, out);
            }
            return self.drop_msg(out, "fork");
        }
        let well_formed = p.credential.node_id == from
            && p.credential.round == rs.round
            && b.recompute_hash() == b.block_hash
            && if b.is_empty() { b.block_hash == rs.empty.block_hash } else { b.proposer == Some(from) }
            && Self::verify_sig(ctx, from, &proposal_bytes(&b.block_hash), &p.signature)
            && Self::fc_member(ctx, &rs.pc, from, rs.round, &p.credential.vrf);
        if !well_formed || !self.block_txs_valid(ctx, b) {
            return self.drop_msg(out, "invalid_proposal");
        }
        let rs = self.round.as_mut().expect("round open");
        rs.fc_seen.insert(from, p.credential);
        rs.view.blocks.insert(b.block_hash, b.clone());
        match rs.proposals.get(&from) {
            Some(prev) if prev.block.block_hash != b.block_hash => {
                let round = rs.round;
                Self::note(out, Note::Evidence { round, culprit: from, what: "proposal" });
            }
            Some(_) => {}
            None if rs.step1_open && rs.coordinator.is_none() => {
                rs.proposals.insert(from, p.clone());
            }
            None => {}
        }
    }

    fn check_member(&mut self, ctx: &Ctx, node: NodeId, vrf: &VrfOutput) -> bool {
        let rs = self.round.as_mut().expect("round open");
        if let Some(c) = rs.fc_seen.get(&node) {
            return c.vrf == *vrf;
        }
        if Self::fc_member(ctx, &rs.pc, node, rs.round, vrf) {
            rs.fc_seen.insert(node, Credential { node_id: node, round: rs.round, vrf: *vrf });
            true
        } else {
            false
        }
    }

    fn on_vote(&mut self, ctx: &Ctx, from: NodeId, v: &VoteMsg, out: &mut Vec<Output>) {
        let Some(rs) = self.round.as_ref() else { return };
        if rs.role != Role::FcMember {
            return;
        }
        let open = match v.step {
            VoteStep::One => rs.step1_open,
            VoteStep::Two => rs.step2_open,
        };
        if !open {
            return self.drop_msg(out, "vote_window");
        }
        if v.voter != from || !Self::verify_sig(ctx, from, &vote_bytes(v.round, v.step, &v.block_hash), &v.signature) {
            return self.drop_msg(out, "invalid_vote");
        }
        if !self.check_member(ctx, from, &v.credential) {
            return self.drop_msg(out, "not_committee");
        }
        let rs = self.round.as_mut().expect("round open");
        let book = match v.step {
            VoteStep::One => &mut rs.view.step1,
            VoteStep::Two => &mut rs.view.step2,
        };
        if let Err(ReductionError::EquivocationDetected { voter }) = book.insert(v.clone()) {
            let round = rs.round;
            Self::note(out, Note::Evidence { round, culprit: voter, what: "vote" });
        }
    }

    fn valid_certificate(&mut self, ctx: &Ctx, block: &Block, cert: &[VoteMsg]) -> bool {
        let (round, n) = {
            let rs = self.round.as_ref().expect("round open");
            (rs.round, rs.n_quorum)
        };
        let mut voters = BTreeSet::new();
        for v in cert {
            if v.round != round || v.step != VoteStep::Two || v.block_hash != block.block_hash || !voters.insert(v.voter) {
                return false;
            }
            if !Self::verify_sig(ctx, v.voter, &vote_bytes(round, VoteStep::Two, &v.block_hash), &v.signature)
                || !self.check_member(ctx, v.voter, &v.credential)
            {
                return false;
            }
        }
        voters.len() as u32 >= quorum_threshold(n)
    }

    fn on_pbft(&mut self, ctx: &Ctx, env: &Envelope, m: &PbftMsg, out: &mut Vec<Output>) {
        let Some(rs) = self.round.as_mut() else { return };
        if rs.role != Role::FcMember {
            return;
        }
        let Some(windows) = rs.windows else {
            rs.early.push(env.clone());
            return;
        };
        if !windows.accepts(m.phase, ctx.now) {
            return self.drop_msg(out, "phase_window");
        }
        let from = env.from;
        if m.sender != from || !Self::verify_sig(ctx, from, &pbft_bytes(&m.instance, m.phase, &m.block_hash), &m.signature) {
            return self.drop_msg(out, "invalid_pbft");
        }
        if !self.check_member(ctx, from, &m.credential) {
            return self.drop_msg(out, "not_committee");
        }
        let rs = self.round.as_ref().expect("round open");
        let coord = rs.coordinator.as_ref().expect("windows imply coordinator");
        if coord.instance(&m.instance).is_none() {
            return self.drop_msg(out, "unknown_instance");
        }
        let round = rs.round;
        let result = match m.phase {
            Phase::PrePrepare => {
                let Some(block) = m.block.clone() else {
                    return self.drop_msg(out, "invalid_pbft");
                };
                let ok = block.block_hash == m.block_hash
                    && block.recompute_hash() == block.block_hash
                    && match m.instance.kind {
                        InstanceKind::Empty => block.block_hash == rs.empty.block_hash,
                        InstanceKind::Valid => {
                            !block.is_empty()
                                && block.round == round
                                && block.predecessor == rs.predecessor
                                && self.block_txs_valid(ctx, &block)
                                && self.valid_certificate(ctx, &block, &m.certificate)
                        }
                    };
                if !ok {
                    return self.drop_msg(out, "invalid_pre_prepare");
                }
                let rs = self.round.as_mut().expect("round open");
                rs.view.blocks.insert(block.block_hash, block.clone());
                rs.coordinator.as_mut().expect("started").on_pre_prepare(m.instance, from, m.block_hash)
            }
            Phase::Prepare => {
                let rs = self.round.as_mut().expect("round open");
                rs.coordinator.as_mut().expect("started").on_prepare(m.instance, from, m.block_hash)
            }
            Phase::Commit => {
                let rs = self.round.as_mut().expect("round open");
                let coord = rs.coordinator.as_mut().expect("started");
                let before = coord.cross_kind.len();
                let r = coord.on_commit(
                    m.instance,
                    from,
                    CommitVote { block_hash: m.block_hash, signature: m.signature, credential: m.credential },
                );
                if coord.cross_kind.len() > before {
                    Self::note(out, Note::Evidence { round, culprit: from, what: "commit_both_kinds" });
                }
                r
            }
            Phase::Reply => return self.drop_msg(out, "invalid_pbft"),
        };
        match result {
            Ok(actions) => self.run_actions(ctx, actions, out),
            Err(PbftError::LeaderEquivocation(n)) => Self::note(out, Note::Evidence { round, culprit: n, what: "pre_prepare" }),
            Err(PbftError::ConflictingVote(n, _)) => Self::note(out, Note::Evidence { round, culprit: n, what: "pbft_vote" }),
            Err(_) => self.drop_msg(out, "rejected_instance"),
        }
    }

    fn run_actions(&mut self, _ctx: &Ctx, actions: Vec<PbftAction>, out: &mut Vec<Output>) {
        for action in actions {
            let rs = self.round.as_mut().expect("round open");
            let cred = rs.credential.expect("committee member").vrf;
            let to = Self::fc_recipients(rs);
            match action {
                PbftAction::PrePrepare { instance, block } => {
                    let certificate = match instance.kind {
                        InstanceKind::Valid => rs.view.step2.votes_for(&block.block_hash),
                        InstanceKind::Empty => Vec::new(),
                    };
                    let m = PbftMsg {
                        instance,
                        phase: Phase::PrePrepare,
                        block_hash: block.block_hash,
                        sender: self.id,
                        signature: sign(&self.keys, &pbft_bytes(&instance, Phase::PrePrepare, &block.block_hash)),
                        credential: cred,
                        block: Some(block),
                        certificate,
                    };
                    out.push(Output::Send { to, payload: Payload::Pbft(m) });
                }
                PbftAction::Prepare { instance, block_hash } | PbftAction::Commit { instance, block_hash } => {
                    let phase = if matches!(action, PbftAction::Prepare { .. }) { Phase::Prepare } else { Phase::Commit };
                    let m = PbftMsg {
                        instance,
                        phase,
                        block_hash,
                        sender: self.id,
                        signature: sign(&self.keys, &pbft_bytes(&instance, phase, &block_hash)),
                        credential: cred,
                        block: None,
                        certificate: Vec::new(),
                    };
                    out.push(Output::Send { to, payload: Payload::Pbft(m) });
                }
                PbftAction::Decided { instance, block_hash } => {
                    Self::note(out, Note::Decided { instance, hash: block_hash });
                    if let Some(prev) = &rs.my_final {
                        if prev.block_hash != block_hash {
                            let what = format!("instances decided different blocks at round {}", rs.round);
                            Self::note(out, Note::Violation { round: rs.round, what });
                        }
                        continue;
                    }
                    let Some(block) = rs.view.blocks.get(&block_hash).cloned() else { continue };
                    let coord = rs.coordinator.as_ref().expect("started");
                    let st = coord.instance(&instance).expect("decided instance exists");
                    let signatures = st
                        .commit_signatures(&block_hash)
                        .into_iter()
                        .map(|(node, c)| CommitSig { node, signature: c.signature, credential: c.credential })
                        .collect();
                    let mut fin = block.with_kind(ConsensusKind::Final);
                    fin.certificate = Some(QuorumCert {
                        leader: instance.leader,
                        kind: instance.kind,
                        committee_size: rs.n_quorum,
                        signatures,
                    });
                    let fin = Arc::new(fin);
                    rs.my_final = Some(fin.clone());
                    out.push(Output::Send { to, payload: Payload::Reply(fin) });
                }
            }
        }
    }

    // ---- consensus blocks --------------------------------------------------

    /// Checks a final block's commit certificate against the committee of its round.
    fn verify_final(&mut self, ctx: &Ctx, b: &Block, seed: &RandomSeed) -> bool {
        let Some(cert) = &b.certificate else { return false };
        let params = ctx.params();
        if cert.committee_size < params.committee.n_fc {
            return false;
        }
        match cert.kind {
            InstanceKind::Empty => {
                if b.block_hash != make_empty_block(b.round, b.predecessor).block_hash {
                    return false;
                }
            }
            InstanceKind::Valid => {
                if b.is_empty() || b.tx_bytes() > params.max_block_bytes {
                    return false;
                }
            }
        }
        let pc = self.committee(ctx, b.round, seed);
        let instance = InstanceId { round: b.round, leader: cert.leader, kind: cert.kind };
        let msg = pbft_bytes(&instance, Phase::Commit, &b.block_hash);
        let mut signers = BTreeSet::new();
        for s in &cert.signatures {
            if !signers.insert(s.node)
                || !Self::fc_member(ctx, &pc, s.node, b.round, &s.credential)
                || !Self::verify_sig(ctx, s.node, &msg, &s.signature)
            {
                return false;
            }
        }
        signers.len() as u32 >= quorum_threshold(cert.committee_size)
    }

    fn on_consensus_block(&mut self, ctx: &Ctx, from: NodeId, b: Arc<Block>, reply: bool, out: &mut Vec<Output>) {
        if let Some(existing) = self.chain.all_blocks().find(|x| x.block_hash == b.block_hash) {
            if existing.consensus_kind == ConsensusKind::Final || b.consensus_kind != ConsensusKind::Final {
                return;
            }
        }
        if b.recompute_hash() != b.block_hash {
            return self.drop_msg(out, "bad_hash");
        }
        match b.consensus_kind {
            ConsensusKind::Pending => self.drop_msg(out, "not_agreed"),
            ConsensusKind::Tentative => {
                if b.block_hash != make_empty_block(b.round, b.predecessor).block_hash {
                    return self.drop_msg(out, "bad_tentative");
                }
                if b.predecessor == self.chain.tip_hash() && b.round == self.chain.tip_round() + 1 {
                    self.close(ctx, ConsensusKind::Tentative, b, "block", out);
                }
            }
            ConsensusKind::Final => self.on_final_block(ctx, from, b, reply, out),
        }
    }

    fn on_final_block(&mut self, ctx: &Ctx, from: NodeId, b: Arc<Block>, reply: bool, out: &mut Vec<Output>) {
        let Some(seed) = self.seed_through(&b.predecessor) else {
            if self.orphans.len() < MAX_ORPHANS {
                self.orphans.insert(b.block_hash, b);
            }
            self.request_sync(ctx, from, out);
            return;
        };
        if !self.verify_final(ctx, &b, &seed) {
            return self.drop_msg(out, "bad_certificate");
        }
        if b.predecessor == self.chain.tip_hash() {
            if b.round != self.chain.tip_round() + 1 {
                return self.drop_msg(out, "bad_round");
            }
            let via = if reply { "reply" } else { "block" };
            return self.close(ctx, ConsensusKind::Final, b, via, out);
        }
        // The predecessor is behind the tip: everything after it must still be
        // tentative for this block to replace it.
        let confirmed = self.chain.blocks();
        if let Some(i) = confirmed.iter().position(|x| x.block_hash == b.predecessor) {
            if let Some(next) = confirmed.get(i + 1) {
                if next.consensus_kind == ConsensusKind::Final && next.block_hash != b.block_hash {
                    Self::note(out, Note::Violation { round: b.round, what: format!("conflicting final blocks at round {}", b.round) });
                }
                return;
            }
        }
        let dropped = self.chain.drop_pending_from(b.round);
        let upgraded = dropped.first().map_or(false, |d| d.block_hash == b.block_hash);
        match self.chain.append(b.as_ref().clone()) {
            Ok(AppendOutcome::Confirmed(v)) => {
                self.on_confirmed(&v, out);
                let mut discarded = Vec::new();
                for d in dropped.into_iter().skip(upgraded as usize) {
                    if !upgraded || self.chain.append(d.as_ref().clone()).is_err() {
                        discarded.push(d);
                    }
                }
                if !discarded.is_empty() {
                    Self::note(out, Note::Discarded { blocks: discarded });
                }
                let seed = self.seed_through(&b.predecessor).expect("predecessor in chain");
                Self::note(out, Note::Closed { round: b.round, kind: ConsensusKind::Final, block: b.clone(), seed, via: "supersede" });
                self.adopt_orphans(ctx, out);
                self.restart(ctx, out);
            }
            Ok(AppendOutcome::Buffered) => unreachable!("final blocks confirm"),
            Err(_) => {
                for d in dropped {
                    let _ = self.chain.append(d.as_ref().clone());
                }
                self.drop_msg(out, "unlinked_final");
            }
        }
    }

    fn on_confirmed(&mut self, blocks: &[Arc<Block>], out: &mut Vec<Output>) {
        for blk in blocks {
            for tx in &blk.transactions {
                self.pool.remove(&tx.id);
                self.chain_txs.insert(tx.id);
            }
        }
        Self::note(out, Note::Confirmed { blocks: blocks.to_vec() });
    }

    /// Closes the current round with `block` and schedules the next one.
    fn close(&mut self, ctx: &Ctx, kind: ConsensusKind, block: Arc<Block>, via: &'static str, out: &mut Vec<Output>) {
        let round = block.round;
        let seed = match &self.round {
            Some(rs) if rs.round == round => rs.seed,
            _ => seed_after(self.chain.all_blocks().map(|b| b.as_ref())),
        };
        let fc = self.round.as_ref().map_or(false, |rs| rs.role == Role::FcMember && rs.round == round);
        let blk = if block.consensus_kind == kind { block.clone() } else { Arc::new(block.with_kind(kind)) };
        match self.chain.append(blk.as_ref().clone()) {
            Ok(AppendOutcome::Confirmed(v)) => self.on_confirmed(&v, out),
            Ok(AppendOutcome::Buffered) => {}
            Err(_) => return self.drop_msg(out, "unlinked_block"),
        }
        Self::note(out, Note::Closed { round, kind, block: blk.clone(), seed, via });
        if fc && (via == "reply" || via == "sbr") {
            let to = ctx.env.all_nodes().into_iter().filter(|n| *n != self.id).collect();
            out.push(Output::Send { to, payload: Payload::Block(blk) });
        }
        self.round = None;
        self.schedule_begin(ctx, out);
        self.adopt_orphans(ctx, out);
    }

    fn adopt_orphans(&mut self, ctx: &Ctx, out: &mut Vec<Output>) {
        loop {
            let tip = self.chain.tip_hash();
            let next = self.orphans.values().find(|o| o.predecessor == tip).cloned();
            let Some(o) = next else { break };
            self.orphans.remove(&o.block_hash);
            let before = self.chain.tip_hash();
            self.on_final_block(ctx, self.id, o, false, out);
            if self.chain.tip_hash() == before {
                break;
            }
        }
        let floor = self.chain.tip_round();
        self.orphans.retain(|_, o| o.round > floor);
    }

    // ---- synchronization and recovery -------------------------------------

    fn request_sync(&mut self, ctx: &Ctx, peer: NodeId, out: &mut Vec<Output>) {
        if peer == self.id {
            return;
        }
        let gap = ctx.params().timeouts.lambda_fc;
        if self.last_sync_at.map_or(false, |t| ctx.now < t + gap) {
            return;
        }
        self.last_sync_at = Some(ctx.now);
        let from_round = self.chain.last_final().round;
        Self::note(out, Note::SyncRequested { peer, from_round });
        out.push(Output::Send { to: vec![peer], payload: Payload::SyncRequest { from_round } });
    }

    fn on_sync_request(&mut self, peer: NodeId, from_round: u64, out: &mut Vec<Output>) {
        let blocks: Vec<_> = self.chain.all_blocks().filter(|b| b.round >= from_round).cloned().collect();
        out.push(Output::Send { to: vec![peer], payload: Payload::SyncResponse { blocks } });
    }

    /// Adopts a peer's branch when it ranks higher: later last-final block,
    /// then longer, then lower tip hash.
    pub fn recover(&mut self, ctx: &Ctx, blocks: &[Arc<Block>], out: &mut Vec<Output>) {
        let Some(start) = blocks.iter().position(|b| !self.chain.contains(&b.block_hash)) else { return };
        let branch = &blocks[start..];
        let anchor = branch[0].predecessor;
        let Some(mut seed) = self.seed_through(&anchor) else { return };
        let mut prev = anchor;
        let anchor_round = self.chain.all_blocks().find(|b| b.block_hash == anchor).map(|b| b.round).expect("anchor known");
        let mut prev_round = anchor_round;
        let mut branch_last_final = self
            .chain
            .all_blocks()
            .take_while(|b| b.block_hash != anchor)
            .chain(self.chain.all_blocks().filter(|b| b.block_hash == anchor))
            .filter(|b| b.consensus_kind == ConsensusKind::Final)
            .map(|b| b.round)
            .max()
            .unwrap_or(0);
        for b in branch {
            if b.predecessor != prev || b.round <= prev_round || b.recompute_hash() != b.block_hash {
                return self.drop_msg(out, "bad_branch");
            }
            let ok = match b.consensus_kind {
                ConsensusKind::Final => self.verify_final(ctx, b, &seed),
                ConsensusKind::Tentative => b.block_hash == make_empty_block(b.round, b.predecessor).block_hash,
                ConsensusKind::Pending => false,
            };
            if !ok {
                return self.drop_msg(out, "bad_branch");
            }
            if b.consensus_kind == ConsensusKind::Final {
                branch_last_final = b.round;
            }
            seed = crate::sortition::next_seed(&seed, b);
            prev = b.block_hash;
            prev_round = b.round;
        }
        let tip = branch.last().expect("non-empty branch");
        let theirs = (branch_last_final, tip.round, std::cmp::Reverse(tip.block_hash));
        let mine = (self.chain.last_final().round, self.chain.tip_round(), std::cmp::Reverse(self.chain.tip_hash()));
        if theirs <= mine {
            return;
        }
        let removed = self.chain.rollback_to(&anchor).expect("anchor known");
        if removed.iter().any(|b| b.consensus_kind == ConsensusKind::Final) {
            Self::note(out, Note::Violation { round: anchor_round + 1, what: "final block rolled back during recovery".into() });
        }
        let discarded = removed.len();
        if !removed.is_empty() {
            self.chain_txs = self.chain.all_blocks().flat_map(|b| b.transactions.iter().map(|t| t.id)).collect();
            Self::note(out, Note::Discarded { blocks: removed });
        }
        let mut adopted = 0;
        for b in branch {
            match self.chain.append(b.as_ref().clone()) {
                Ok(AppendOutcome::Confirmed(v)) => {
                    self.on_confirmed(&v, out);
                    adopted += 1;
                }
                Ok(AppendOutcome::Buffered) => adopted += 1,
                Err(_) => break,
            }
        }
        self.stats.recoveries += 1;
        Self::note(out, Note::Recovered { anchor_round, adopted, discarded });
        self.adopt_orphans(ctx, out);
        self.restart(ctx, out);
    }
}
