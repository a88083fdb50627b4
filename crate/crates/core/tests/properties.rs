// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

use acp_core::crypto::{hash, vrf_keygen, Digest, Signature, VrfOutput};
use acp_core::incentives::{
    expected_round_issuance, update_reputation, EconomyParams, FinalRound, ReputationRule, RewardLedger, RoundSummary, Verdict,
};
use acp_core::ledger::{pool_select, Transaction};
use acp_core::message::{VoteMsg, VoteStep};
use acp_core::netsim::{replay, run, trace::VecSink};
use acp_core::reduction::{quorum_threshold, VoteBook};
use acp_core::scenario::Scenario;
use acp_core::sortition::{make_credential, passes_fc_threshold, rank_leaders, select_pc, CommitteeParams, NodeRecord, RandomSeed, Reputation};
use acp_core::NodeId;

fn vote(voter: u32, h: u8) -> VoteMsg {
    VoteMsg {
        voter: NodeId(voter),
        round: 1,
        step: VoteStep::One,
        block_hash: hash(&[h]),
        signature: Signature([0; 32]),
        credential: VrfOutput { value: Digest::ZERO, proof: [0; 32] },
    }
}

fn records(reps: &[u64]) -> Vec<NodeRecord> {
    reps.iter()
        .enumerate()
        .map(|(i, r)| NodeRecord {
            node_id: NodeId(i as u32),
            public_key: vrf_keygen(&hash(&(i as u64).to_be_bytes()).0).public_key,
            reputation: Reputation(*r),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tally_ignores_arrival_order(n in 1u32..12, raw in prop::collection::vec((0u32..12, 0u8..3), 0..30), rot in 0usize..30) {
        let votes: Vec<VoteMsg> = raw.iter().filter(|(v, _)| *v < n).map(|(v, h)| vote(*v, *h)).collect();
        let mut rotated = votes.clone();
        if !rotated.is_empty() {
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
        }
        let mut a = VoteBook::new(VoteStep::One);
        let mut b = VoteBook::new(VoteStep::One);
        for v in votes { let _ = a.insert(v); }
        for v in rotated { let _ = b.insert(v); }
        prop_assert_eq!(a.counts(), b.counts());
        prop_assert_eq!(a.equivocators(), b.equivocators());
        prop_assert_eq!(a.tally(n), b.tally(n));
    }

    #[test]
    fn quorum_is_unique_and_counted(n in 1u32..40, raw in prop::collection::vec((0u32..40, 0u8..3), 0..80)) {
        let mut book = VoteBook::new(VoteStep::One);
        for (v, h) in raw.iter().filter(|(v, _)| *v < n) { let _ = book.insert(vote(*v, *h)); }
        let q = quorum_threshold(n);
        prop_assert!(3 * q > 2 * n);
        let over: Vec<Digest> = book.counts().into_iter().filter(|(_, c)| *c >= q).map(|(h, _)| h).collect();
        prop_assert!(over.len() <= 1);
        prop_assert_eq!(book.tally(n), over.first().copied());
        let voted: u32 = book.counts().values().sum();
        prop_assert!(voted as usize + book.equivocators().len() <= n as usize);
    }

    #[test]
    fn pc_selection_is_a_stable_prefix(reps in prop::collection::vec(1u64..5_000_000, 1..40), m in 0usize..45, seed in any::<[u8; 32]>(), round in 1u64..100) {
        let nodes = records(&reps);
        let rs = RandomSeed::genesis(Digest(seed));
        let all = select_pc(&nodes, &rs, round, nodes.len()).unwrap();
        let some = select_pc(&nodes, &rs, round, m).unwrap();
        prop_assert_eq!(some.len(), m.min(nodes.len()));
        prop_assert_eq!(&all[..some.len()], &some[..]);
        prop_assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), nodes.len());
    }

    #[test]
    fn raising_reputation_keeps_a_member_selected(reps in prop::collection::vec(1u64..5_000_000, 2..30), m in 1usize..30, pick in any::<prop::sample::Index>(), seed in any::<[u8; 32]>()) {
        let nodes = records(&reps);
        let rs = RandomSeed::genesis(Digest(seed));
        let chosen = select_pc(&nodes, &rs, 1, m).unwrap();
        let who = chosen[pick.index(chosen.len())];
        let mut boosted = nodes.clone();
        boosted[who.index()].reputation = Reputation(boosted[who.index()].reputation.0 * 2);
        prop_assert!(select_pc(&boosted, &rs, 1, m).unwrap().contains(&who));
    }

    #[test]
    fn fc_threshold_is_monotone(value in any::<[u8; 32]>(), n_pc in 1u32..600, n_fc in 0u32..600) {
        let p = CommitteeParams { n_pc, n_fc, n_valid_leaders: 1, n_empty_leaders: 1 };
        let bigger = CommitteeParams { n_fc: n_fc + 1, ..p };
        if passes_fc_threshold(&Digest(value), &p) {
            prop_assert!(passes_fc_threshold(&Digest(value), &bigger));
        }
    }

    #[test]
    fn leader_ranks_are_disjoint(count in 0u32..30, leaders in 0u32..8, round in 1u64..50) {
        let creds: Vec<_> = (0..count)
            .map(|i| make_credential(NodeId(i), &vrf_keygen(&hash(&i.to_be_bytes()).0), round))
            .collect();
        let params = CommitteeParams { n_pc: count.max(1), n_fc: count.max(1), n_valid_leaders: leaders, n_empty_leaders: leaders };
        let (valid, empty) = rank_leaders(&creds, &params);
        prop_assert_eq!(valid.len(), (leaders.min(count)) as usize);
        let rank = |n: &NodeId| creds[n.index()].rank_hash();
        prop_assert!(valid.windows(2).all(|w| rank(&w[0]) < rank(&w[1])));
        prop_assert!(empty.windows(2).all(|w| rank(&w[0]) > rank(&w[1])));
        if 2 * leaders <= count {
            prop_assert!(valid.iter().all(|v| !empty.contains(v)));
        }
    }

    #[test]
    fn pool_selection_fits_the_budget(sizes in prop::collection::vec(1u32..5000, 0..50), budget in 0u64..40_000) {
        let pool: Vec<Transaction> = sizes
            .iter()
            .enumerate()
            .map(|(i, s)| Transaction { id: hash(&(i as u64).to_be_bytes()), payload_size: *s, submitter: NodeId(0) })
            .collect();
        let picked = pool_select(&pool, budget);
        let used: u64 = picked.iter().map(|t| t.payload_size as u64).sum();
        prop_assert!(used <= budget);
        // anything skipped did not fit at the point it was considered
        let picked_ids: BTreeSet<Digest> = picked.iter().map(|t| t.id).collect();
        let mut running = 0u64;
        for t in &pool {
            if picked_ids.contains(&t.id) {
                running += t.payload_size as u64;
            } else {
                prop_assert!(running + t.payload_size as u64 > budget);
            }
        }
    }

    #[test]
    fn ledger_conserves_issuance(
        rounds in prop::collection::vec((any::<bool>(), 0u64..(6 << 20), 1usize..6, 1usize..10, prop::collection::vec(0u8..3, 12)), 1..25)
    ) {
        let n = 12usize;
        let params = EconomyParams::default();
        let mut ledger = RewardLedger::new(params.clone(), &vec![Reputation::from_units(1); n]);
        let mut issued_abc = BigRational::zero();
        let mut issued_abit = BigRational::zero();
        for (i, (is_final, packed, leaders, fc, verdicts)) in rounds.iter().enumerate() {
            let summary = RoundSummary {
                round: i as u64 + 1,
                final_block: is_final.then(|| FinalRound {
                    miner: NodeId(0),
                    leaders: (0..*leaders as u32).map(NodeId).collect(),
                    verifiers: (0..*fc as u32).map(NodeId).collect(),
                    packed_bytes: *packed,
                }),
                pc_members: (0..n as u32).map(NodeId).collect(),
                verdicts: verdicts
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (NodeId(k as u32), [Verdict::HonestSuccess, Verdict::DetectedMalicious, Verdict::Inactive][*v as usize]))
                    .collect::<BTreeMap<_, _>>(),
            };
            let rec = ledger.settle(&summary).clone();
            if *is_final {
                prop_assert_eq!(&rec.abc_issued, &expected_round_issuance(&params, *leaders as u32, *fc as u32, *packed));
            } else {
                prop_assert!(rec.abc_issued.is_zero());
            }
            issued_abc += rec.abc_issued;
            issued_abit += rec.abit_issued;
        }
        let held_abc = ledger.accounts().iter().fold(BigRational::zero(), |s, a| s + &a.abc + &a.frozen);
        let held_abit = ledger.accounts().iter().fold(BigRational::zero(), |s, a| s + &a.abit);
        prop_assert_eq!(held_abc, issued_abc);
        prop_assert_eq!(held_abit, issued_abit);
        prop_assert!(ledger.accounts().iter().all(|a| a.frozen >= BigRational::zero()));
    }

    #[test]
    fn reputation_stays_within_bounds(start in 10_000u64..100_000_000, verdicts in prop::collection::vec(0u8..3, 0..200)) {
        let rule = ReputationRule::default();
        let mut rep = Reputation(start);
        for v in verdicts {
            rep = update_reputation(rep, [Verdict::HonestSuccess, Verdict::DetectedMalicious, Verdict::Inactive][v as usize], &rule);
            prop_assert!(rep.0 >= 10_000 && rep.0 <= 100_000_000);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn small_runs_are_safe_and_replayable(n in 4u32..12, strategy in 0usize..6, seed in any::<u64>(), partial in any::<bool>()) {
        let strategy = ["none", "crash", "equivocate", "withhold_votes", "delay_max", "selfish_pack"][strategy];
        let network = if partial { r#", "network": {"mode": "partial", "gst_ms": 5000}"# } else { "" };
        let s = Scenario::from_json(&format!(
            r#"{{"version": 1, "n_all": {n}, "rounds": 4, "seed": {seed},
                "adversary": {{"strategy": "{strategy}", "random_corrupt": {}}}{network}}}"#,
            if strategy == "none" { 0 } else { (n - 1) / 3 }
        )).unwrap();
        let mut sink = VecSink::default();
        let r = run(&s, &mut sink);
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        let honest: Vec<_> = r.honest_nodes().collect();
        for a in &honest {
            for b in &honest {
                prop_assert!(a.chain().all_blocks().zip(b.chain().all_blocks()).all(|(x, y)| x.block_hash == y.block_hash));
            }
        }
        prop_assert_eq!(replay(&sink.lines).unwrap(), None);
    }
}
