// SPDX-License-Identifier: Apache-2.0

//! Byzantine behaviors applied to corrupted nodes' traffic.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::crypto::{hash_parts, sign, Digest, KeyPair};
use crate::engine::Behavior;
use crate::ledger::{make_empty_block, Block, InstanceKind};
use crate::message::{pbft_bytes, proposal_bytes, vote_bytes, Payload, Phase};
use crate::scenario::{AdversarySpec, Strategy};
use crate::NodeId;

pub fn behavior_for(strategy: &Strategy) -> Behavior {
    match strategy {
        Strategy::Crash => Behavior::Crash,
        Strategy::Equivocate => Behavior::Equivocate,
        Strategy::WithholdVotes => Behavior::WithholdVotes,
        Strategy::DelayMax => Behavior::DelayMax,
        Strategy::SelfishPack => Behavior::SelfishPack,
        Strategy::None | Strategy::Partition(_) => Behavior::Honest,
    }
}

/// Explicit ids plus `random_corrupt` more drawn from `rng`.
pub fn corrupted_set(spec: &AdversarySpec, n_all: u32, rng: &mut ChaCha8Rng) -> BTreeSet<NodeId> {
    let mut set: BTreeSet<NodeId> = spec.corrupted.iter().map(|&i| NodeId(i)).collect();
    let free: Vec<u32> = (0..n_all).filter(|i| !set.contains(&NodeId(*i))).collect();
    let k = (spec.random_corrupt as usize).min(free.len());
    for i in sample(rng, free.len(), k) {
        set.insert(NodeId(free[i]));
    }
    set
}

fn other_hash(original: &Digest, empty: &Digest) -> Digest {
    if original == empty {
        hash_parts(&[b"acp/equivocation", &original.0])
    } else {
        *empty
    }
}

fn twin_block(block: &Block) -> Arc<Block> {
    let mut payload = block.payload.clone();
    payload.extend_from_slice(b"/twin");
    Arc::new(Block::new(block.round, block.predecessor, block.proposer, block.transactions.clone(), payload))
}

/// A conflicting, correctly signed variant of an outgoing message, sent to
/// the second half of its recipients. `predecessor` is the sender's tip.
pub fn equivocate(payload: &Payload, keys: &KeyPair, predecessor: Digest) -> Option<Payload> {
    match payload {
        Payload::Proposal(p) => {
            let block = twin_block(&p.block);
            let mut q = p.clone();
            q.signature = sign(keys, &proposal_bytes(&block.block_hash));
            q.block = block;
            Some(Payload::Proposal(q))
        }
        Payload::Vote(v) => {
            let empty = make_empty_block(v.round, predecessor).block_hash;
            let mut w = v.clone();
            w.block_hash = other_hash(&v.block_hash, &empty);
            w.signature = sign(keys, &vote_bytes(w.round, w.step, &w.block_hash));
            Some(Payload::Vote(w))
        }
        Payload::Pbft(m) => {
            let mut n = m.clone();
            match (&m.block, m.phase) {
                (Some(b), Phase::PrePrepare) => {
                    let twin = match m.instance.kind {
                        InstanceKind::Valid => twin_block(b),
                        InstanceKind::Empty => twin_block(&make_empty_block(b.round, b.predecessor)),
                    };
                    n.block_hash = twin.block_hash;
                    n.block = Some(twin);
                }
                _ => {
                    let empty = make_empty_block(m.instance.round, predecessor).block_hash;
                    n.block_hash = other_hash(&m.block_hash, &empty);
                }
            }
            n.signature = sign(keys, &pbft_bytes(&n.instance, n.phase, &n.block_hash));
            Some(Payload::Pbft(n))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{vrf_keygen, KeyRegistry};
    use crate::ledger::Transaction;
    use crate::message::{ProposalMsg, VoteMsg, VoteStep};
    use crate::sortition::make_credential;
    use rand::SeedableRng;

    #[test]
    fn corrupted_set_respects_explicit_ids() {
        let spec = AdversarySpec { corrupted: vec![2], random_corrupt: 2, strategy: Strategy::Crash, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = corrupted_set(&spec, 10, &mut rng);
        assert_eq!(s.len(), 3);
        assert!(s.contains(&NodeId(2)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrupted_set(&spec, 10, &mut rng), s);
    }

    #[test]
    fn twins_are_signed_and_distinct() {
        let keys = vrf_keygen(&[3; 32]);
        let mut reg = KeyRegistry::new();
        reg.register(&keys);
        let tx = Transaction { id: hash_parts(&[b"t"]), payload_size: 5, submitter: NodeId(0) };
        let block = Arc::new(Block::new(1, Digest::ZERO, Some(NodeId(0)), vec![tx], Vec::new()));
        let p = Payload::Proposal(ProposalMsg {
            signature: sign(&keys, &proposal_bytes(&block.block_hash)),
            block: block.clone(),
            credential: make_credential(NodeId(0), &keys, 1),
        });
        let Some(Payload::Proposal(q)) = equivocate(&p, &keys, Digest::ZERO) else { panic!() };
        assert_ne!(q.block.block_hash, block.block_hash);
        assert_eq!(q.block.tx_bytes(), block.tx_bytes());
        assert!(reg.verify_sig(&keys.public_key, &proposal_bytes(&q.block.block_hash), &q.signature));

        let empty = make_empty_block(1, Digest::ZERO).block_hash;
        let v = Payload::Vote(VoteMsg {
            voter: NodeId(0),
            round: 1,
            step: VoteStep::One,
            block_hash: block.block_hash,
            signature: sign(&keys, &vote_bytes(1, VoteStep::One, &block.block_hash)),
            credential: make_credential(NodeId(0), &keys, 1).vrf,
        });
        let Some(Payload::Vote(w)) = equivocate(&v, &keys, Digest::ZERO) else { panic!() };
        assert_eq!(w.block_hash, empty);
        assert!(reg.verify_sig(&keys.public_key, &vote_bytes(1, VoteStep::One, &empty), &w.signature));
    }
}
