use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smt_core::dispersal::{disperse, reconstruct, DispersalConfig, DispersalError, MessageShare};

/// All k-element index subsets of 0..n.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

fn pick(shares: &[MessageShare], idx: &[usize]) -> Vec<MessageShare> {
    idx.iter().map(|&i| shares[i].clone()).collect()
}

#[test]
fn every_three_of_five_subset_rebuilds_64_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let msg: Vec<u8> = (0..64).map(|_| rng.random()).collect();
    let shares = disperse(&msg, DispersalConfig::new(5, 3).unwrap(), 99).unwrap();
    let subs = subsets(5, 3);
    assert_eq!(subs.len(), 10);
    for s in subs {
        assert_eq!(reconstruct(&pick(&shares, &s)).unwrap(), msg, "subset {s:?}");
    }
}

#[test]
fn single_byte_corruption_is_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let msg: Vec<u8> = (0..40).map(|_| rng.random()).collect();
    let cfg = DispersalConfig::new(4, 3).unwrap();
    let shares = disperse(&msg, cfg, 3).unwrap();
    for victim in 0..4 {
        for byte in 0..shares[victim].payload.len() {
            for bit in 0..8 {
                let mut bad = shares.clone();
                bad[victim].payload[byte] ^= 1 << bit;
                // m intact shares plus the corrupted one
                assert_eq!(reconstruct(&bad).unwrap(), msg);
                // only m-1 intact: the corrupted share must not be counted
                let others: Vec<MessageShare> =
                    bad.iter().enumerate().filter(|(i, _)| *i != (victim + 1) % 4).map(|(_, s)| s.clone()).collect();
                assert!(matches!(reconstruct(&others), Err(DispersalError::InsufficientShares { have: 2, need: 3 })));
            }
        }
    }
}

#[test]
fn exhaustive_small_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=8 {
        for m in 1..=n {
            for len in [1usize, 3, 17, 255, 4096] {
                let msg: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                let shares = disperse(&msg, DispersalConfig::new(n, m).unwrap(), (n * 100 + m) as u64).unwrap();
                for s in subsets(n, m) {
                    assert_eq!(reconstruct(&pick(&shares, &s)).unwrap(), msg);
                }
                if m > 1 {
                    for s in subsets(n, m - 1) {
                        assert!(matches!(
                            reconstruct(&pick(&shares, &s)),
                            Err(DispersalError::InsufficientShares { .. })
                        ));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_through_wire_bytes(
        msg in proptest::collection::vec(any::<u8>(), 1..512),
        n in 1usize..=8,
        m_off in 0usize..8,
        id in any::<u64>(),
        order_seed in any::<u64>(),
    ) {
        let m = 1 + m_off % n;
        let cfg = DispersalConfig::new(n, m).unwrap();
        let shares = disperse(&msg, cfg, id).unwrap();
        prop_assert_eq!(shares.len(), n);
        prop_assert!(shares.iter().all(|s| s.payload.len() == cfg.payload_len(msg.len())));
        let decoded: Vec<MessageShare> =
            shares.iter().map(|s| MessageShare::from_bytes(&s.to_bytes()).unwrap()).collect();
        // any m of them, in a scrambled order
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let chosen: Vec<MessageShare> = idx[..m].iter().map(|&i| decoded[i].clone()).collect();
        prop_assert_eq!(reconstruct(&chosen).unwrap(), msg);
    }

    #[test]
    fn disperse_is_deterministic(msg in proptest::collection::vec(any::<u8>(), 1..128), id in any::<u64>()) {
        let cfg = DispersalConfig::new(5, 2).unwrap();
        prop_assert_eq!(disperse(&msg, cfg, id).unwrap(), disperse(&msg, cfg, id).unwrap());
    }
}
