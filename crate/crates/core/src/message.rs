// SPDX-License-Identifier: Apache-2.0

//! Wire messages exchanged between nodes and the byte strings they sign.

use std::sync::Arc;

use crate::crypto::{Digest, Signature, VrfOutput};
use crate::ledger::{Block, InstanceKind};
use crate::sortition::Credential;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposalMsg {
    pub block: Arc<Block>,
    pub signature: Signature,
    pub credential: Credential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VoteStep {
    One,
    Two,
}

impl VoteStep {
    pub fn tag(self) -> u8 {
        match self {
            VoteStep::One => 1,
            VoteStep::Two => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteMsg {
    pub voter: NodeId,
    pub round: u64,
    pub step: VoteStep,
    pub block_hash: Digest,
    pub signature: Signature,
    /// Voter's credential output, so membership can be checked without the proposal.
    pub credential: VrfOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub round: u64,
    pub leader: NodeId,
    pub kind: InstanceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    PrePrepare,
    Prepare,
    Commit,
    Reply,
}

impl Phase {
    pub fn ordinal(self) -> u8 {
        match self {
            Phase::PrePrepare => 0,
            Phase::Prepare => 1,
            Phase::Commit => 2,
            Phase::Reply => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PrePrepare => "pre_prepare",
            Phase::Prepare => "prepare",
            Phase::Commit => "commit",
            Phase::Reply => "reply",
        }
    }
}

/// Position of a message in the round's logic: `(round, stage, phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LogicIndex {
    pub round: u64,
    pub stage: u8,
    pub phase: u8,
}

/// Stage number of the parallel agreement step.
pub const AGREEMENT_STAGE: u8 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbftMsg {
    pub instance: InstanceId,
    pub phase: Phase,
    pub block_hash: Digest,
    pub sender: NodeId,
    pub signature: Signature,
    pub credential: VrfOutput,
    /// Pre-prepare only: the proposed block.
    pub block: Option<Arc<Block>>,
    /// Pre-prepare of a valid-kind instance only: second-step votes for the block.
    pub certificate: Vec<VoteMsg>,
}

impl PbftMsg {
    pub fn logic_index(&self) -> LogicIndex {
        LogicIndex {
            round: self.instance.round,
            stage: AGREEMENT_STAGE,
            phase: self.phase.ordinal(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Proposal(ProposalMsg),
    Vote(VoteMsg),
    Pbft(PbftMsg),
    /// Agreed block with its commit certificate, sent to the final committee.
    Reply(Arc<Block>),
    /// Final or tentative block announced to the whole network.
    Block(Arc<Block>),
    SyncRequest { from_round: u64 },
    SyncResponse { blocks: Vec<Arc<Block>> },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Proposal(_) => "proposal",
            Payload::Vote(v) => match v.step {
                VoteStep::One => "vote1",
                VoteStep::Two => "vote2",
            },
            Payload::Pbft(p) => p.phase.as_str(),
            Payload::Reply(_) => "reply",
            Payload::Block(_) => "block",
            Payload::SyncRequest { .. } => "sync_request",
            Payload::SyncResponse { .. } => "sync_response",
        }
    }

    /// Protocol round the message belongs to, if any.
    pub fn round(&self) -> Option<u64> {
        match self {
            Payload::Proposal(p) => Some(p.block.round),
            Payload::Vote(v) => Some(v.round),
            Payload::Pbft(p) => Some(p.instance.round),
            Payload::Reply(b) | Payload::Block(b) => Some(b.round),
            Payload::SyncRequest { .. } | Payload::SyncResponse { .. } => None,
        }
    }

    pub fn digest(&self) -> Option<Digest> {
        match self {
            Payload::Proposal(p) => Some(p.block.block_hash),
            Payload::Vote(v) => Some(v.block_hash),
            Payload::Pbft(p) => Some(p.block_hash),
            Payload::Reply(b) | Payload::Block(b) => Some(b.block_hash),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: NodeId,
    pub payload: Payload,
}

pub fn proposal_bytes(block_hash: &Digest) -> Vec<u8> {
    let mut v = b"acp/proposal".to_vec();
    v.extend_from_slice(&block_hash.0);
    v
}

pub fn vote_bytes(round: u64, step: VoteStep, block_hash: &Digest) -> Vec<u8> {
    let mut v = b"acp/vote".to_vec();
    v.extend_from_slice(&round.to_be_bytes());
    v.push(step.tag());
    v.extend_from_slice(&block_hash.0);
    v
}

pub fn pbft_bytes(instance: &InstanceId, phase: Phase, block_hash: &Digest) -> Vec<u8> {
    let mut v = b"acp/pbft".to_vec();
    v.extend_from_slice(&instance.round.to_be_bytes());
    v.extend_from_slice(&instance.leader.0.to_be_bytes());
    v.push(instance.kind.tag());
    v.push(phase.ordinal());
    v.extend_from_slice(&block_hash.0);
    v
}
