// SPDX-License-Identifier: Apache-2.0

//! Parallel agreement instances with the reply broadcast to the committee.
//!
//! Every committee member runs one instance per ranked leader: valid-kind
//! instances carry the reduction's candidate block, empty-kind instances the
//! canonical empty block. There is no view change; an instance with a faulty
//! leader simply never decides.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::crypto::{Digest, Signature, VrfOutput};
use crate::ledger::{Block, InstanceKind};
use crate::message::{InstanceId, Phase};
use crate::reduction::{quorum_threshold, ReductionOutcome};
use crate::NodeId;

/// Byzantine members tolerated by a committee of `n`.
pub fn max_faulty(n: u32) -> u32 {
    n.saturating_sub(1) / 3
}

/// Matching prepares needed on top of the pre-prepare: `2f`.
pub fn prepare_quorum(n: u32) -> u32 {
    2 * max_faulty(n)
}

pub fn commit_quorum(n: u32) -> u32 {
    quorum_threshold(n)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PbftError {
    #[error("{phase:?} message outside its window")]
    PhaseViolation { phase: Phase },
    #[error("leader {0} sent two different pre-prepares")]
    LeaderEquivocation(NodeId),
    #[error("instance was rejected")]
    Rejected,
    #[error("no such instance")]
    UnknownInstance,
    #[error("node {0} sent conflicting {1:?} messages")]
    ConflictingVote(NodeId, Phase),
    #[error("pre-prepare from a node that does not lead this instance")]
    NotLeader,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitVote {
    pub block_hash: Digest,
    pub signature: Signature,
    pub credential: VrfOutput,
}

#[derive(Clone, Debug)]
pub struct InstanceState {
    pub id: InstanceId,
    pub n: u32,
    pub pre_prepare: Option<Digest>,
    pub prepares: BTreeMap<NodeId, Digest>,
    pub commits: BTreeMap<NodeId, CommitVote>,
    pub sent_prepare: bool,
    pub sent_commit: bool,
    pub decided: Option<Digest>,
    pub rejected: bool,
}

impl InstanceState {
    pub fn new(id: InstanceId, n: u32) -> Self {
        InstanceState {
            id,
            n,
            pre_prepare: None,
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            sent_prepare: false,
            sent_commit: false,
            decided: None,
            rejected: false,
        }
    }

    pub fn on_pre_prepare(&mut self, sender: NodeId, hash: Digest) -> Result<(), PbftError> {
        if sender != self.id.leader {
            return Err(PbftError::NotLeader);
        }
        match self.pre_prepare {
            Some(h) if h != hash => {
                self.rejected = true;
                Err(PbftError::LeaderEquivocation(sender))
            }
            _ if self.rejected => Err(PbftError::Rejected),
            _ => {
                self.pre_prepare = Some(hash);
                Ok(())
            }
        }
    }

    pub fn on_prepare(&mut self, sender: NodeId, hash: Digest) -> Result<(), PbftError> {
        if self.rejected {
            return Err(PbftError::Rejected);
        }
        match self.prepares.get(&sender) {
            Some(h) if *h != hash => Err(PbftError::ConflictingVote(sender, Phase::Prepare)),
            _ => {
                self.prepares.insert(sender, hash);
                Ok(())
            }
        }
    }

    pub fn on_commit(&mut self, sender: NodeId, vote: CommitVote) -> Result<(), PbftError> {
        if self.rejected {
            return Err(PbftError::Rejected);
        }
        match self.commits.get(&sender) {
            Some(c) if c.block_hash != vote.block_hash => Err(PbftError::ConflictingVote(sender, Phase::Commit)),
            _ => {
                self.commits.insert(sender, vote);
                Ok(())
            }
        }
    }

    /// Pre-prepare plus `2f` matching prepares from members other than the leader.
    pub fn prepared(&self) -> Option<Digest> {
        let h = self.pre_prepare?;
        let matching = self
            .prepares
            .iter()
            .filter(|(s, ph)| **s != self.id.leader && **ph == h)
            .count() as u32;
        (matching >= prepare_quorum(self.n)).then_some(h)
    }

    pub fn commit_count(&self, hash: &Digest) -> u32 {
        self.commits.values().filter(|c| c.block_hash == *hash).count() as u32
    }

    pub fn commit_signatures(&self, hash: &Digest) -> Vec<(NodeId, CommitVote)> {
        self.commits
            .iter()
            .filter(|(_, c)| c.block_hash == *hash)
            .map(|(n, c)| (*n, c.clone()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PbftAction {
    PrePrepare { instance: InstanceId, block: Arc<Block> },
    Prepare { instance: InstanceId, block_hash: Digest },
    Commit { instance: InstanceId, block_hash: Digest },
    Decided { instance: InstanceId, block_hash: Digest },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    Final(Arc<Block>),
    Tentative(Arc<Block>),
    Pending,
}

/// All instances a member runs in one round.
#[derive(Clone, Debug)]
pub struct Coordinator {
    pub round: u64,
    pub me: NodeId,
    pub n: u32,
    pub outcome: ReductionOutcome,
    pub empty_block: Arc<Block>,
    pub instances: BTreeMap<InstanceId, InstanceState>,
    /// Kind this member has sent commits for; honest members commit in one kind only.
    pub lock: Option<InstanceKind>,
    /// Byzantine mode: support every instance and ignore the lock.
    pub double_support: bool,
    pub decided: Option<(InstanceId, Digest)>,
    pub reply: Option<Arc<Block>>,
    /// Members seen committing in both kinds this round.
    pub cross_kind: BTreeSet<NodeId>,
    commit_kinds: BTreeMap<NodeId, InstanceKind>,
}

/// Creates instance states for every ranked leader and the leader's own
/// pre-prepares. With `alert == false` the empty-kind instances start rejected.
pub fn coordinator_start(
    me: NodeId,
    round: u64,
    outcome: ReductionOutcome,
    empty_block: Arc<Block>,
    valid_leaders: &[NodeId],
    empty_leaders: &[NodeId],
    n: u32,
    double_support: bool,
) -> (Coordinator, Vec<PbftAction>) {
    let mut instances = BTreeMap::new();
    let mut actions = Vec::new();
    for (leaders, kind) in [(valid_leaders, InstanceKind::Valid), (empty_leaders, InstanceKind::Empty)] {
        for &leader in leaders {
            let id = InstanceId { round, leader, kind };
            let mut st = InstanceState::new(id, n);
            if kind == InstanceKind::Empty && !outcome.alert && !double_support {
                st.rejected = true;
            }
            let matches = match kind {
                InstanceKind::Valid => !outcome.alert,
                InstanceKind::Empty => outcome.alert,
            };
            if leader == me && matches && !st.rejected {
                let block = match kind {
                    InstanceKind::Valid => outcome.block.clone(),
                    InstanceKind::Empty => empty_block.clone(),
                };
                actions.push(PbftAction::PrePrepare { instance: id, block });
            }
            instances.insert(id, st);
        }
    }
    let coordinator = Coordinator {
        round,
        me,
        n,
        outcome,
        empty_block,
        instances,
        lock: None,
        double_support,
        decided: None,
        reply: None,
        cross_kind: BTreeSet::new(),
        commit_kinds: BTreeMap::new(),
    };
    (coordinator, actions)
}

impl Coordinator {
    pub fn instance(&self, id: &InstanceId) -> Option<&InstanceState> {
        self.instances.get(id)
    }

    fn may_commit(&self, kind: InstanceKind) -> bool {
        self.double_support || self.lock.map_or(true, |k| k == kind)
    }

    /// Drops out of every empty-kind instance once a valid-kind instance is
    /// seen running, unless already committed to the empty block.
    fn abandon_empty(&mut self) {
        if self.double_support || self.lock == Some(InstanceKind::Empty) {
            return;
        }
        for st in self.instances.values_mut() {
            if st.id.kind == InstanceKind::Empty && st.decided.is_none() {
                st.rejected = true;
            }
        }
    }

    pub fn on_pre_prepare(&mut self, id: InstanceId, sender: NodeId, hash: Digest) -> Result<Vec<PbftAction>, PbftError> {
        let st = self.instances.get_mut(&id).ok_or(PbftError::UnknownInstance)?;
        st.on_pre_prepare(sender, hash)?;
        if id.kind == InstanceKind::Valid {
            self.abandon_empty();
        }
        Ok(self.advance_all())
    }

    pub fn on_prepare(&mut self, id: InstanceId, sender: NodeId, hash: Digest) -> Result<Vec<PbftAction>, PbftError> {
        let st = self.instances.get_mut(&id).ok_or(PbftError::UnknownInstance)?;
        st.on_prepare(sender, hash)?;
        Ok(self.advance(id))
    }

    pub fn on_commit(&mut self, id: InstanceId, sender: NodeId, vote: CommitVote) -> Result<Vec<PbftAction>, PbftError> {
        match self.commit_kinds.get(&sender) {
            Some(k) if *k != id.kind => {
                self.cross_kind.insert(sender);
            }
            None => {
                self.commit_kinds.insert(sender, id.kind);
            }
            _ => {}
        }
        let st = self.instances.get_mut(&id).ok_or(PbftError::UnknownInstance)?;
        st.on_commit(sender, vote)?;
        Ok(self.advance(id))
    }

    fn advance_all(&mut self) -> Vec<PbftAction> {
        let ids: Vec<_> = self.instances.keys().copied().collect();
        ids.into_iter().flat_map(|id| self.advance(id)).collect()
    }

    fn advance(&mut self, id: InstanceId) -> Vec<PbftAction> {
        let mut out = Vec::new();
        let may_commit = self.may_commit(id.kind);
        let me = self.me;
        let double = self.double_support;
        let st = self.instances.get_mut(&id).expect("instance exists");
        if st.rejected {
            return out;
        }
        if let Some(h) = st.pre_prepare {
            if !st.sent_prepare && me != id.leader {
                st.sent_prepare = true;
                out.push(PbftAction::Prepare { instance: id, block_hash: h });
            }
            let ready = if double { Some(h) } else { st.prepared() };
            if let Some(h) = ready {
                if !st.sent_commit && may_commit {
                    st.sent_commit = true;
                    out.push(PbftAction::Commit { instance: id, block_hash: h });
                }
            }
            if st.decided.is_none() && st.commit_count(&h) >= commit_quorum(st.n) {
                st.decided = Some(h);
                out.push(PbftAction::Decided { instance: id, block_hash: h });
            }
        }
        if out.iter().any(|a| matches!(a, PbftAction::Commit { .. })) && self.lock.is_none() {
            self.lock = Some(id.kind);
        }
        for a in &out {
            if let PbftAction::Decided { instance, block_hash } = a {
                if self.decided.is_none() {
                    self.decided = Some((*instance, *block_hash));
                }
            }
        }
        out
    }

    /// Records a verified reply carrying an agreed block.
    pub fn on_reply(&mut self, block: Arc<Block>) {
        if self.reply.is_none() {
            self.reply = Some(block);
        }
    }

    /// Block agreed by the first decided instance, if the caller can supply it.
    pub fn decided_block(&self, lookup: impl Fn(&Digest) -> Option<Arc<Block>>) -> Option<Arc<Block>> {
        let (_, h) = self.decided?;
        lookup(&h)
    }
}

/// Final once an agreed result is known (a verified reply, or a local decision
/// at the barrier); tentative empty block once the barrier passes without one.
pub fn coordinator_resolve(
    coordinator: &Coordinator,
    now: u64,
    sbr_deadline: u64,
    lookup: impl Fn(&Digest) -> Option<Arc<Block>>,
) -> Resolution {
    if let Some(b) = &coordinator.reply {
        return Resolution::Final(b.clone());
    }
    if now >= sbr_deadline {
        if let Some(b) = coordinator.decided_block(lookup) {
            return Resolution::Final(b);
        }
        return Resolution::Tentative(coordinator.empty_block.clone());
    }
    Resolution::Pending
}

/// Per-phase acceptance windows measured from instance start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseWindows {
    pub start: u64,
    pub lambda: u64,
}

impl PhaseWindows {
    /// Latest local time at which a message of `phase` is still accepted.
    pub fn deadline(&self, phase: Phase) -> u64 {
        match phase {
            Phase::PrePrepare => self.start + 2 * self.lambda,
            Phase::Prepare => self.start + 3 * self.lambda,
            Phase::Commit => self.start + 4 * self.lambda,
            Phase::Reply => u64::MAX,
        }
    }

    pub fn accepts(&self, phase: Phase, now: u64) -> bool {
        now >= self.start && now <= self.deadline(phase)
    }
}
