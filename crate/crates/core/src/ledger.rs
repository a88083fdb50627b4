// SPDX-License-Identifier: Apache-2.0

//! Blocks, the local chain replica and the pending transaction pool.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, Digest, Signature, VrfOutput};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: Digest,
    pub payload_size: u32,
    pub submitter: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    Final,
    Tentative,
    Pending,
}

impl ConsensusKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConsensusKind::Final => "final",
            ConsensusKind::Tentative => "tentative",
            ConsensusKind::Pending => "pending",
        }
    }
}

/// Which family of agreement instance produced a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Valid,
    Empty,
}

impl InstanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstanceKind::Valid => "valid",
            InstanceKind::Empty => "empty",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            InstanceKind::Valid => 0,
            InstanceKind::Empty => 1,
        }
    }
}

/// Commit-quorum attestation attached to a final block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumCert {
    pub leader: NodeId,
    pub kind: InstanceKind,
    /// Committee size the quorum was counted against.
    pub committee_size: u32,
    pub signatures: Vec<CommitSig>,
}

/// One commit vote inside a certificate, with the signer's credential output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitSig {
    pub node: NodeId,
    pub signature: Signature,
    pub credential: VrfOutput,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub round: u64,
    pub predecessor: Digest,
    pub proposer: Option<NodeId>,
    pub transactions: Vec<Transaction>,
    /// Opaque payload; the genesis block stores the initial random seed here.
    pub payload: Vec<u8>,
    pub consensus_kind: ConsensusKind,
    pub block_hash: Digest,
    /// Signatures over the agreed block, if it was finalized by a quorum.
    pub certificate: Option<QuorumCert>,
}

impl Block {
    pub fn new(
        round: u64,
        predecessor: Digest,
        proposer: Option<NodeId>,
        transactions: Vec<Transaction>,
        payload: Vec<u8>,
    ) -> Self {
        let mut block = Block {
            round,
            predecessor,
            proposer,
            transactions,
            payload,
            consensus_kind: ConsensusKind::Pending,
            block_hash: Digest::ZERO,
            certificate: None,
        };
        block.block_hash = hash(&block.canonical_bytes());
        block
    }

    pub fn genesis(seed: Digest) -> Self {
        let mut b = Block::new(0, Digest::ZERO, None, Vec::new(), seed.0.to_vec());
        b.consensus_kind = ConsensusKind::Final;
        b
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn tx_bytes(&self) -> u64 {
        self.transactions.iter().map(|t| t.payload_size as u64).sum()
    }

    /// Fixed field order, big-endian integers, length-prefixed lists.
    /// Signatures and consensus kind are not part of the encoding.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.transactions.len() * 40 + self.payload.len());
        out.extend_from_slice(b"ACPB");
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.predecessor.0);
        match self.proposer {
            Some(p) => {
                out.push(1);
                out.extend_from_slice(&p.0.to_be_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            out.extend_from_slice(&tx.id.0);
            out.extend_from_slice(&tx.payload_size.to_be_bytes());
            out.extend_from_slice(&tx.submitter.0.to_be_bytes());
        }
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn recompute_hash(&self) -> Digest {
        hash(&self.canonical_bytes())
    }

    pub fn with_kind(&self, kind: ConsensusKind) -> Block {
        let mut b = self.clone();
        b.consensus_kind = kind;
        b
    }

    pub fn record(&self) -> BlockRecord {
        BlockRecord {
            round: self.round,
            hash: self.block_hash.to_hex(),
            kind: self.consensus_kind,
            tx_count: self.transactions.len(),
            proposer: self.proposer.map(|p| p.0),
        }
    }
}

/// The canonical empty block for a round. Every honest node derives the same
/// bytes from the same `(round, predecessor)`.
pub fn make_empty_block(round: u64, predecessor: Digest) -> Block {
    Block::new(round, predecessor, None, Vec::new(), Vec::new())
}

/// Trace export line for an appended block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub round: u64,
    pub hash: String,
    pub kind: ConsensusKind,
    pub tx_count: usize,
    pub proposer: Option<u32>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("predecessor mismatch at round {round}: expected {expected:?}, got {got:?}")]
    PredecessorMismatch {
        round: u64,
        expected: Digest,
        got: Digest,
    },
    #[error("non-monotonic round: tip is {tip}, block is {block}")]
    NonMonotonicRound { tip: u64, block: u64 },
    #[error("block of kind {0:?} cannot be appended")]
    NotAgreed(ConsensusKind),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppendOutcome {
    /// Tentative block held until a final successor arrives.
    Buffered,
    /// Blocks confirmed by this append, oldest first.
    Confirmed(Vec<Arc<Block>>),
}

/// Local chain replica.
///
/// `blocks` holds confirmed blocks from genesis. Tentative blocks wait in
/// `pending`, each chained on the previous one, until a final block extends
/// them; only then do they join `blocks`.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Arc<Block>>,
    pending: Vec<Arc<Block>>,
    last_final: usize,
}

impl Chain {
    pub fn new(genesis: Block) -> Self {
        Chain {
            blocks: vec![Arc::new(genesis)],
            pending: Vec::new(),
            last_final: 0,
        }
    }

    pub fn genesis(&self) -> &Arc<Block> {
        &self.blocks[0]
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Arc<Block>] {
        &self.pending
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Newest block including buffered tentative ones.
    pub fn tip(&self) -> &Arc<Block> {
        self.pending.last().unwrap_or_else(|| self.blocks.last().expect("genesis"))
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().block_hash
    }

    pub fn tip_round(&self) -> u64 {
        self.tip().round
    }

    pub fn last_final(&self) -> &Arc<Block> {
        &self.blocks[self.last_final]
    }

    /// Confirmed blocks followed by pending ones.
    pub fn all_blocks(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.blocks.iter().chain(self.pending.iter())
    }

    pub fn contains(&self, h: &Digest) -> bool {
        self.all_blocks().any(|b| b.block_hash == *h)
    }

    pub fn block_at_round(&self, round: u64) -> Option<&Arc<Block>> {
        self.all_blocks().find(|b| b.round == round)
    }

    pub fn append(&mut self, block: Block) -> Result<AppendOutcome, LedgerError> {
        let tip = self.tip();
        if block.predecessor != tip.block_hash {
            return Err(LedgerError::PredecessorMismatch {
                round: block.round,
                expected: tip.block_hash,
                got: block.predecessor,
            });
        }
        if block.round <= tip.round {
            return Err(LedgerError::NonMonotonicRound {
                tip: tip.round,
                block: block.round,
            });
        }
        match block.consensus_kind {
            ConsensusKind::Tentative => {
                self.pending.push(Arc::new(block));
                Ok(AppendOutcome::Buffered)
            }
            ConsensusKind::Final => {
                let mut confirmed: Vec<Arc<Block>> = self.pending.drain(..).collect();
                confirmed.push(Arc::new(block));
                self.blocks.extend(confirmed.iter().cloned());
                self.last_final = self.blocks.len() - 1;
                Ok(AppendOutcome::Confirmed(confirmed))
            }
            ConsensusKind::Pending => Err(LedgerError::NotAgreed(ConsensusKind::Pending)),
        }
    }

    /// Drops buffered tentative blocks from `round` onwards and returns them.
    pub fn drop_pending_from(&mut self, round: u64) -> Vec<Arc<Block>> {
        let keep = self.pending.iter().take_while(|b| b.round < round).count();
        self.pending.split_off(keep)
    }

    /// Rolls back to the block with hash `anchor`, returning everything removed
    /// (confirmed blocks first, then pending). Returns `None` if the anchor is unknown.
    pub fn rollback_to(&mut self, anchor: &Digest) -> Option<Vec<Arc<Block>>> {
        if let Some(i) = self.blocks.iter().position(|b| b.block_hash == *anchor) {
            let mut removed = self.blocks.split_off(i + 1);
            removed.append(&mut self.pending);
            self.last_final = self
                .blocks
                .iter()
                .rposition(|b| b.consensus_kind == ConsensusKind::Final)
                .unwrap_or(0);
            return Some(removed);
        }
        let i = self.pending.iter().position(|b| b.block_hash == *anchor)?;
        Some(self.pending.split_off(i + 1))
    }

    /// Transactions in confirmed blocks, in chain order.
    pub fn confirmed_transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks.iter().flat_map(|b| b.transactions.iter())
    }

    /// Full linkage rescan.
    pub fn check_linkage(&self) -> bool {
        let all: Vec<_> = self.all_blocks().collect();
        all.windows(2).all(|w| {
            w[1].predecessor == w[0].block_hash && w[1].round > w[0].round
        }) && all.iter().all(|b| b.recompute_hash() == b.block_hash)
    }
}

/// Tells whether a proposal was built on something other than the local tip.
pub fn detect_fork(chain: &Chain, proposal: &Block) -> bool {
    proposal.predecessor != chain.tip_hash()
}

/// Pending transactions in arrival order.
#[derive(Clone, Debug, Default)]
pub struct TxPool {
    next_seq: u64,
    entries: BTreeMap<(u64, Digest), Transaction>,
    index: BTreeMap<Digest, u64>,
}

impl TxPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns false if a transaction with the same id is already pooled.
    pub fn insert(&mut self, tx: Transaction) -> bool {
        if self.index.contains_key(&tx.id) {
            return false;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.index.insert(tx.id, seq);
        self.entries.insert((seq, tx.id), tx);
        true
    }

    pub fn remove(&mut self, id: &Digest) -> Option<Transaction> {
        let seq = self.index.remove(id)?;
        self.entries.remove(&(seq, *id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.entries.values()
    }
}

/// First-fit selection in FIFO order: each transaction is taken if it still
/// fits in the remaining budget.
pub fn pool_select<'a, I>(pool: I, max_bytes: u64) -> Vec<Transaction>
where
    I: IntoIterator<Item = &'a Transaction>,
{
    let mut used = 0u64;
    let mut out = Vec::new();
    for tx in pool {
        let size = tx.payload_size as u64;
        if used + size <= max_bytes {
            used += size;
            out.push(tx.clone());
        }
    }
    out
}

/// Distinct confirmed transaction ids; used when building proposals.
pub fn confirmed_ids(chain: &Chain) -> BTreeSet<Digest> {
    chain.all_blocks().flat_map(|b| b.transactions.iter().map(|t| t.id)).collect()
}
