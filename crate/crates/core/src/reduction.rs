// SPDX-License-Identifier: Apache-2.0

//! Candidate choice and the two-step reduction from many proposals to a
//! binary choice between one candidate block and the empty block.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::crypto::Digest;
use crate::ledger::{make_empty_block, Block};
use crate::message::{ProposalMsg, VoteMsg, VoteStep};
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("no proposals received")]
    NoProposals,
    #[error("node {voter} voted for two different hashes in one step")]
    EquivocationDetected { voter: NodeId },
    #[error("vote is for step {got:?}, book collects {want:?}")]
    WrongStep { want: VoteStep, got: VoteStep },
}

/// Largest transaction payload wins; ties go to the least credential hash.
pub fn choose_candidate(proposals: &[ProposalMsg]) -> Result<Arc<Block>, ReductionError> {
    proposals
        .iter()
        .min_by(|a, b| {
            b.block
                .tx_bytes()
                .cmp(&a.block.tx_bytes())
                .then_with(|| a.credential.rank_hash().cmp(&b.credential.rank_hash()))
                .then_with(|| a.block.block_hash.cmp(&b.block.block_hash))
        })
        .map(|p| p.block.clone())
        .ok_or(ReductionError::NoProposals)
}

/// `floor(2n/3) + 1`.
pub fn quorum_threshold(n: u32) -> u32 {
    2 * n / 3 + 1
}

/// Votes of one step, at most one per voter.
#[derive(Clone, Debug)]
pub struct VoteBook {
    step: VoteStep,
    votes: BTreeMap<NodeId, VoteMsg>,
    equivocators: BTreeSet<NodeId>,
}

impl VoteBook {
    pub fn new(step: VoteStep) -> Self {
        VoteBook {
            step,
            votes: BTreeMap::new(),
            equivocators: BTreeSet::new(),
        }
    }

    pub fn step(&self) -> VoteStep {
        self.step
    }

    /// Returns `Ok(false)` for an exact duplicate. A second, different hash from
    /// the same voter discards both votes and reports the voter.
    pub fn insert(&mut self, vote: VoteMsg) -> Result<bool, ReductionError> {
        if vote.step != self.step {
            return Err(ReductionError::WrongStep { want: self.step, got: vote.step });
        }
        let voter = vote.voter;
        if self.equivocators.contains(&voter) {
            return Err(ReductionError::EquivocationDetected { voter });
        }
        match self.votes.get(&voter) {
            Some(prev) if prev.block_hash == vote.block_hash => Ok(false),
            Some(_) => {
                self.votes.remove(&voter);
                self.equivocators.insert(voter);
                Err(ReductionError::EquivocationDetected { voter })
            }
            None => {
                self.votes.insert(voter, vote);
                Ok(true)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn equivocators(&self) -> &BTreeSet<NodeId> {
        &self.equivocators
    }

    pub fn counts(&self) -> BTreeMap<Digest, u32> {
        let mut counts = BTreeMap::new();
        for v in self.votes.values() {
            *counts.entry(v.block_hash).or_insert(0) += 1;
        }
        counts
    }

    /// The hash holding a quorum of `n`, if exactly one does.
    pub fn tally(&self, n: u32) -> Option<Digest> {
        let q = quorum_threshold(n);
        let mut winners = self.counts().into_iter().filter(|(_, c)| *c >= q).map(|(h, _)| h);
        let first = winners.next()?;
        if winners.next().is_some() {
            return None;
        }
        Some(first)
    }

    /// Votes backing `hash`, usable as a certificate.
    pub fn votes_for(&self, hash: &Digest) -> Vec<VoteMsg> {
        self.votes.values().filter(|v| v.block_hash == *hash).cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tally {
    pub winner: Option<Digest>,
    pub equivocators: Vec<NodeId>,
}

/// Tallies a batch of votes for one step. Votes of other steps are ignored;
/// equivocating voters are excluded and listed.
pub fn tally(votes: &[VoteMsg], step: VoteStep, n: u32) -> Tally {
    let mut book = VoteBook::new(step);
    for v in votes.iter().filter(|v| v.step == step) {
        let _ = book.insert(v.clone());
    }
    Tally {
        winner: book.tally(n),
        equivocators: book.equivocators().iter().copied().collect(),
    }
}

/// Second-step vote: the first-step quorum hash, otherwise the empty block.
pub fn second_step_choice(first_step: Option<Digest>, empty_hash: Digest) -> Digest {
    first_step.unwrap_or(empty_hash)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionOutcome {
    pub block: Arc<Block>,
    /// Set exactly when `block` is the canonical empty block.
    pub alert: bool,
}

/// What a committee member has seen by the end of the second voting step.
#[derive(Clone, Debug)]
pub struct ReductionView {
    pub round: u64,
    pub predecessor: Digest,
    pub blocks: BTreeMap<Digest, Arc<Block>>,
    pub step1: VoteBook,
    pub step2: VoteBook,
}

impl ReductionView {
    pub fn new(round: u64, predecessor: Digest) -> Self {
        ReductionView {
            round,
            predecessor,
            blocks: BTreeMap::new(),
            step1: VoteBook::new(VoteStep::One),
            step2: VoteBook::new(VoteStep::Two),
        }
    }

    pub fn empty_block(&self) -> Block {
        make_empty_block(self.round, self.predecessor)
    }
}

/// Maps the second-step tally onto `{candidate, empty}`.
pub fn reduce(view: &ReductionView, n: u32) -> ReductionOutcome {
    let empty = view.empty_block();
    let chosen = view.step2.tally(n).and_then(|h| view.blocks.get(&h)).filter(|b| {
        !b.is_empty() && b.round == view.round && b.predecessor == view.predecessor
    });
    match chosen {
        Some(b) => ReductionOutcome {
            block: b.clone(),
            alert: false,
        },
        None => ReductionOutcome {
            block: Arc::new(empty),
            alert: true,
        },
    }
}
