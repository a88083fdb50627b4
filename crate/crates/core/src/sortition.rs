// SPDX-License-Identifier: Apache-2.0

//! Committee selection: the reputation-weighted potential committee, private
//! VRF sortition into the final committee, and leader ranking.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{digest_to_biguint, hash, hash_parts, vrf_evaluate, Digest, KeyPair, KeyRegistry, PublicKey, VrfOutput};
use crate::ledger::Block;
use crate::NodeId;

/// Reputation in millionths. Always positive for registered nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reputation(pub u64);

impl Reputation {
    pub const SCALE: u64 = 1_000_000;
    pub const ONE: Reputation = Reputation(Self::SCALE);

    pub fn from_units(units: u64) -> Self {
        Reputation(units * Self::SCALE)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(self.0.into(), Self::SCALE.into())
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub node_id: NodeId,
    pub public_key: PublicKey,
    pub reputation: Reputation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSeed {
    pub value: Digest,
    pub round: u64,
}

impl RandomSeed {
    pub fn genesis(value: Digest) -> Self {
        RandomSeed { value, round: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub node_id: NodeId,
    pub round: u64,
    pub vrf: VrfOutput,
}

impl Credential {
    /// Ranking key for leader selection.
    pub fn rank_hash(&self) -> Digest {
        hash(&self.vrf.value.0)
    }
}

/// Bytes the credential VRF is evaluated on.
pub fn credential_message(round: u64) -> [u8; 8] {
    round.to_be_bytes()
}

pub fn make_credential(node_id: NodeId, keys: &KeyPair, round: u64) -> Credential {
    Credential {
        node_id,
        round,
        vrf: vrf_evaluate(keys, &credential_message(round)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeParams {
    /// Potential committee size.
    pub n_pc: u32,
    /// Expected final committee size.
    pub n_fc: u32,
    pub n_valid_leaders: u32,
    pub n_empty_leaders: u32,
}

impl Default for CommitteeParams {
    fn default() -> Self {
        CommitteeParams {
            n_pc: 512,
            n_fc: 16,
            n_valid_leaders: 3,
            n_empty_leaders: 3,
        }
    }
}

impl CommitteeParams {
    pub fn validate(&self, n_all: u32) -> Result<(), String> {
        if self.n_fc == 0 {
            return Err("n_fc must be positive".into());
        }
        if self.n_fc > self.n_pc {
            return Err(format!("n_fc ({}) exceeds n_pc ({})", self.n_fc, self.n_pc));
        }
        if self.n_pc > n_all {
            return Err(format!("n_pc ({}) exceeds node count ({n_all})", self.n_pc));
        }
        for (name, v) in [("n_valid_leaders", self.n_valid_leaders), ("n_empty_leaders", self.n_empty_leaders)] {
            if v == 0 || v > self.n_fc {
                return Err(format!("{name} must be in 1..={}", self.n_fc));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SortitionError {
    #[error("reputation must be positive")]
    ZeroReputation,
    #[error("credential of node {0} does not verify")]
    InvalidCredential(NodeId),
}

fn weight_hash(rs: &RandomSeed, round: u64, pk: &PublicKey) -> BigUint {
    digest_to_biguint(&hash_parts(&[&rs.value.0, &round.to_be_bytes(), &pk.0]))
}

/// Hash of `(seed, round, public key)` divided by the reputation.
pub fn potential_weight(rs: &RandomSeed, round: u64, pk: &PublicKey, rep: Reputation) -> Result<BigRational, SortitionError> {
    if rep.0 == 0 {
        return Err(SortitionError::ZeroReputation);
    }
    let h = weight_hash(rs, round, pk);
    Ok(BigRational::new(
        (h * BigUint::from(Reputation::SCALE)).into(),
        BigUint::from(rep.0).into(),
    ))
}

/// The `m` nodes with the lowest potential weight, lightest first.
pub fn select_pc(nodes: &[NodeRecord], rs: &RandomSeed, round: u64, m: usize) -> Result<Vec<NodeId>, SortitionError> {
    // Compare h_a / rep_a against h_b / rep_b by cross-multiplying.
    let mut keyed = Vec::with_capacity(nodes.len());
    for n in nodes {
        if n.reputation.0 == 0 {
            return Err(SortitionError::ZeroReputation);
        }
        keyed.push((weight_hash(rs, round, &n.public_key), n.reputation.0, n.node_id));
    }
    keyed.sort_by(|a, b| {
        let lhs = &a.0 * BigUint::from(b.1);
        let rhs = &b.0 * BigUint::from(a.1);
        lhs.cmp(&rhs).then(a.2.cmp(&b.2))
    });
    Ok(keyed.into_iter().take(m).map(|k| k.2).collect())
}

/// True iff `value / 2^256 < n_fc / n_pc`.
pub fn passes_fc_threshold(value: &Digest, params: &CommitteeParams) -> bool {
    if params.n_fc == 0 || params.n_pc == 0 {
        return false;
    }
    if params.n_fc >= params.n_pc {
        return true;
    }
    let lhs = digest_to_biguint(value) * BigUint::from(params.n_pc);
    let rhs = BigUint::from(params.n_fc) << 256;
    lhs < rhs
}

/// Verifies a credential and applies the final-committee threshold.
pub fn select_fc(registry: &KeyRegistry, pk: &PublicKey, credential: &Credential, params: &CommitteeParams) -> Result<bool, SortitionError> {
    let msg = credential_message(credential.round);
    if !registry.vrf_verify(pk, &msg, &credential.vrf.value, &credential.vrf.proof) {
        return Err(SortitionError::InvalidCredential(credential.node_id));
    }
    Ok(passes_fc_threshold(&credential.vrf.value, params))
}

fn rank_cmp(a: &(Digest, NodeId), b: &(Digest, NodeId)) -> Ordering {
    a.0.cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Valid-block leaders (smallest credential hashes, ascending) and
/// empty-block leaders (largest, descending).
pub fn rank_leaders(credentials: &[Credential], params: &CommitteeParams) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut keyed: Vec<(Digest, NodeId)> = credentials.iter().map(|c| (c.rank_hash(), c.node_id)).collect();
    keyed.sort_by(rank_cmp);
    keyed.dedup_by(|a, b| a.1 == b.1);
    let valid = keyed.iter().take(params.n_valid_leaders as usize).map(|k| k.1).collect();
    let empty = keyed.iter().rev().take(params.n_empty_leaders as usize).map(|k| k.1).collect();
    (valid, empty)
}

pub fn next_seed(rs: &RandomSeed, agreed: &Block) -> RandomSeed {
    RandomSeed {
        value: hash_parts(&[&rs.value.0, &agreed.round.to_be_bytes(), &agreed.block_hash.0]),
        round: agreed.round,
    }
}

/// Seed chained from the genesis payload over every block in order.
pub fn seed_after<'a, I>(blocks: I) -> RandomSeed
where
    I: IntoIterator<Item = &'a Block>,
{
    let mut it = blocks.into_iter();
    let genesis = it.next().expect("chain starts at genesis");
    let mut value = [0u8; 32];
    let n = genesis.payload.len().min(32);
    value[..n].copy_from_slice(&genesis.payload[..n]);
    let mut rs = RandomSeed::genesis(Digest(value));
    for b in it {
        rs = next_seed(&rs, b);
    }
    rs
}

/// Fraction helper used by tests and reports.
pub fn fc_threshold_fraction(params: &CommitteeParams) -> BigRational {
    if params.n_pc == 0 {
        return BigRational::zero();
    }
    let f = BigRational::new(params.n_fc.into(), params.n_pc.into());
    if f > BigRational::one() {
        BigRational::one()
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::vrf_keygen;
    use crate::ledger::make_empty_block;

    fn keys(i: u32) -> KeyPair {
        let mut s = [0u8; 32];
        s[..4].copy_from_slice(&i.to_be_bytes());
        s[31] = 0xa5;
        vrf_keygen(&s)
    }

    fn records(n: u32, rep: impl Fn(u32) -> Reputation) -> Vec<NodeRecord> {
        (0..n)
            .map(|i| NodeRecord {
                node_id: NodeId(i),
                public_key: keys(i).public_key,
                reputation: rep(i),
            })
            .collect()
    }

    fn seed() -> RandomSeed {
        RandomSeed::genesis(hash(b"genesis"))
    }

    #[test]
    fn weight_halves_when_reputation_doubles() {
        let pk = keys(1).public_key;
        let a = potential_weight(&seed(), 3, &pk, Reputation(1_500_000)).unwrap();
        let b = potential_weight(&seed(), 3, &pk, Reputation(3_000_000)).unwrap();
        assert_eq!(b.clone() * BigRational::from_integer(2.into()), a);
        assert_eq!(a, potential_weight(&seed(), 3, &pk, Reputation(1_500_000)).unwrap());
        assert_eq!(potential_weight(&seed(), 3, &pk, Reputation(0)), Err(SortitionError::ZeroReputation));
    }

    #[test]
    fn weights_match_recomputation() {
        use sha2::{Digest as _, Sha256};
        let rs = seed();
        for (i, r) in records(5, |i| Reputation((i as u64 + 1) * 250_000)).iter().enumerate() {
            let mut h = Sha256::new();
            h.update(rs.value.0);
            h.update(7u64.to_be_bytes());
            h.update(r.public_key.0);
            let raw = BigUint::from_bytes_be(&h.finalize());
            let rep = BigRational::new(((i as u64 + 1) * 250_000).into(), 1_000_000u64.into());
            let expected = BigRational::from_integer(raw.into()) / rep;
            assert_eq!(potential_weight(&rs, 7, &r.public_key, r.reputation).unwrap(), expected);
        }
    }

    #[test]
    fn pc_selection_matches_sort_oracle() {
        let nodes = records(8, |i| Reputation(500_000 + i as u64 * 137_000));
        let got = select_pc(&nodes, &seed(), 4, 3).unwrap();
        let mut oracle: Vec<_> = nodes
            .iter()
            .map(|n| (potential_weight(&seed(), 4, &n.public_key, n.reputation).unwrap(), n.node_id))
            .collect();
        oracle.sort();
        let want: Vec<_> = oracle.iter().take(3).map(|o| o.1).collect();
        assert_eq!(got, want);
        assert_eq!(select_pc(&nodes, &seed(), 4, 8).unwrap().len(), 8);
    }

    #[test]
    fn pc_selection_invariant_under_common_scaling() {
        let a = records(20, |_| Reputation::ONE);
        let b = records(20, |_| Reputation::from_units(7));
        for round in 1..20 {
            assert_eq!(select_pc(&a, &seed(), round, 6).unwrap(), select_pc(&b, &seed(), round, 6).unwrap());
        }
    }

    #[test]
    fn fc_threshold_edges() {
        let kp = keys(3);
        let mut reg = KeyRegistry::new();
        reg.register(&kp);
        let c = make_credential(NodeId(3), &kp, 9);
        let all = CommitteeParams { n_pc: 10, n_fc: 10, n_valid_leaders: 1, n_empty_leaders: 1 };
        assert_eq!(select_fc(&reg, &kp.public_key, &c, &all), Ok(true));
        let none = CommitteeParams { n_fc: 0, ..all };
        assert_eq!(select_fc(&reg, &kp.public_key, &c, &none), Ok(false));
        let mut bad = c;
        bad.vrf.value.0[0] ^= 1;
        assert!(select_fc(&reg, &kp.public_key, &bad, &all).is_err());
    }

    #[test]
    fn fc_count_matches_enumeration_oracle() {
        let params = CommitteeParams { n_pc: 512, n_fc: 16, n_valid_leaders: 3, n_empty_leaders: 3 };
        let mut reg = KeyRegistry::new();
        let pairs: Vec<_> = (0..512).map(keys).collect();
        for p in &pairs {
            reg.register(p);
        }
        let mut selected = 0;
        let mut oracle = 0;
        let space: BigUint = BigUint::one() << 256usize;
        for (i, p) in pairs.iter().enumerate() {
            let c = make_credential(NodeId(i as u32), p, 1);
            if select_fc(&reg, &p.public_key, &c, &params).unwrap() {
                selected += 1;
            }
            // value / 2^256 < 16 / 512, as exact rationals
            let frac = BigRational::new(digest_to_biguint(&c.vrf.value).into(), space.clone().into());
            if frac < BigRational::new(16.into(), 512.into()) {
                oracle += 1;
            }
        }
        assert_eq!(selected, oracle);
        assert!((4..=32).contains(&selected), "selected {selected}");
    }

    #[test]
    fn fc_size_mean_close_to_expected() {
        let params = CommitteeParams { n_pc: 64, n_fc: 8, n_valid_leaders: 1, n_empty_leaders: 1 };
        let pairs: Vec<_> = (0..64).map(keys).collect();
        let rounds = 10_000u64;
        let mut total = 0u64;
        for r in 0..rounds {
            total += pairs
                .iter()
                .filter(|p| passes_fc_threshold(&vrf_evaluate(p, &credential_message(r)).value, &params))
                .count() as u64;
        }
        let mean = total as f64 / rounds as f64;
        assert!((mean - 8.0).abs() < 0.8, "mean {mean}");
    }

    #[test]
    fn higher_reputation_selected_at_least_as_often() {
        let mut nodes = records(16, |_| Reputation::ONE);
        nodes[0].reputation = Reputation::from_units(4);
        let mut hi = 0;
        let mut lo = 0;
        for trial in 0..10_000u64 {
            let rs = RandomSeed::genesis(hash(&trial.to_be_bytes()));
            let pc = select_pc(&nodes, &rs, 1, 4).unwrap();
            hi += pc.contains(&NodeId(0)) as u32;
            lo += pc.contains(&NodeId(1)) as u32;
        }
        assert!(hi >= lo, "hi {hi} lo {lo}");
    }

    #[test]
    fn leader_ranking_matches_sort_oracle() {
        let params = CommitteeParams { n_pc: 16, n_fc: 16, n_valid_leaders: 3, n_empty_leaders: 3 };
        let creds: Vec<_> = (0..16).map(|i| make_credential(NodeId(i), &keys(i), 2)).collect();
        let (valid, empty) = rank_leaders(&creds, &params);
        let mut sorted: Vec<_> = creds.iter().map(|c| (hash(&c.vrf.value.0), c.node_id)).collect();
        sorted.sort();
        assert_eq!(valid, sorted.iter().take(3).map(|s| s.1).collect::<Vec<_>>());
        assert_eq!(empty, sorted.iter().rev().take(3).map(|s| s.1).collect::<Vec<_>>());
        let mut rev = creds.clone();
        rev.reverse();
        assert_eq!(rank_leaders(&rev, &params), (valid, empty));
        let one = rank_leaders(&creds[..1], &CommitteeParams { n_valid_leaders: 1, n_empty_leaders: 1, ..params });
        assert_eq!(one, (vec![NodeId(0)], vec![NodeId(0)]));
    }

    #[test]
    fn seed_chain_is_deterministic() {
        let rs = seed();
        let a = make_empty_block(1, hash(b"a"));
        let b = make_empty_block(1, hash(b"b"));
        assert_eq!(next_seed(&rs, &a), next_seed(&rs, &a));
        assert_ne!(next_seed(&rs, &a).value, next_seed(&rs, &b).value);
        let run = || {
            let mut s = rs;
            let mut pred = Digest::ZERO;
            for r in 1..=10 {
                let blk = make_empty_block(r, pred);
                pred = blk.block_hash;
                s = next_seed(&s, &blk);
            }
            s
        };
        assert_eq!(run(), run());
    }
}
