// SPDX-License-Identifier: Apache-2.0

//! Online safety checks over the blocks honest nodes confirm.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use crate::crypto::Digest;
use crate::ledger::{Block, ConsensusKind};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Agreement,
    Validity,
    TotalOrder,
    /// Raised by a node itself, e.g. a conflicting final block.
    NodeReported,
}

impl Property {
    pub fn as_str(self) -> &'static str {
        match self {
            Property::Agreement => "agreement",
            Property::Validity => "validity",
            Property::TotalOrder => "total_order",
            Property::NodeReported => "node_reported",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: Property,
    pub round: u64,
    pub node: NodeId,
    pub detail: String,
}

/// Agreement: one block per round across honest confirmations, which with
/// hash-linked blocks is prefix compatibility. Validity: every confirmed
/// non-empty final block was proposed in its round, and a round where every
/// honest proposal was the same block cannot finalize anything else. Total
/// order: each honest node's confirmed transaction sequence is a prefix of
/// one global sequence.
#[derive(Default)]
pub struct Monitor {
    by_round: BTreeMap<u64, Digest>,
    finals: BTreeMap<u64, (NodeId, Digest)>,
    proposed: BTreeMap<u64, BTreeSet<Digest>>,
    honest_proposed: BTreeMap<u64, BTreeSet<Digest>>,
    sequence: Vec<Digest>,
    placed: BTreeSet<Digest>,
    positions: BTreeMap<NodeId, usize>,
}

impl Monitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn proposed(&mut self, round: u64, hash: Digest, honest: bool) {
        self.proposed.entry(round).or_default().insert(hash);
        if honest {
            self.honest_proposed.entry(round).or_default().insert(hash);
        }
    }

    pub fn confirmed(&mut self, node: NodeId, blocks: &[Arc<Block>]) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut flag = |property, round, detail: String| out.push(Violation { property, round, node, detail });
        for b in blocks {
            if b.round == 0 {
                continue;
            }
            match self.by_round.get(&b.round) {
                Some(h) if *h != b.block_hash => flag(
                    Property::Agreement,
                    b.round,
                    format!("confirmed {} where another honest node confirmed {}", b.block_hash.short(), h.short()),
                ),
                Some(_) => {}
                None => {
                    self.by_round.insert(b.round, b.block_hash);
                }
            }
            if b.consensus_kind == ConsensusKind::Final {
                self.finals.entry(b.round).or_insert((node, b.block_hash));
            }
            let proposed = self.proposed.get(&b.round).map_or(false, |s| s.contains(&b.block_hash));
            if b.consensus_kind == ConsensusKind::Final && !b.is_empty() && !proposed {
                flag(Property::Validity, b.round, format!("final block {} was never proposed", b.block_hash.short()));
            }
            let pos = self.positions.entry(node).or_insert(0);
            for tx in &b.transactions {
                if *pos < self.sequence.len() {
                    if self.sequence[*pos] != tx.id {
                        flag(Property::TotalOrder, b.round, format!("transaction {} out of order", tx.id.short()));
                    }
                } else if !self.placed.insert(tx.id) {
                    flag(Property::TotalOrder, b.round, format!("transaction {} confirmed twice", tx.id.short()));
                } else {
                    self.sequence.push(tx.id);
                }
                *pos += 1;
            }
        }
        out
    }

    /// Unanimity checks, run once every proposal of the run is known.
    pub fn finish(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (round, (node, hash)) in &self.finals {
            let Some(honest) = self.honest_proposed.get(round) else { continue };
            if honest.len() == 1 && !honest.contains(hash) {
                let only = honest.iter().next().expect("one proposal");
                out.push(Violation {
                    property: Property::Validity,
                    round: *round,
                    node: *node,
                    detail: format!("honest members all proposed {} but {} was finalized", only.short(), hash.short()),
                });
            }
        }
        out
    }

    pub fn confirmed_rounds(&self) -> usize {
        self.by_round.len()
    }
}
