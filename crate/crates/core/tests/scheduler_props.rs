use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sptucker::scheduler::{assign_by_size, partition_core_batch, reduce};
use sptucker::Balance;

proptest! {
    #[test]
    fn core_partition_is_an_exact_balanced_cover(len in 0usize..5000, workers in 1usize..64) {
        let parts = partition_core_batch(len, workers);
        prop_assert_eq!(parts.len(), workers.min(len));
        let mut next = 0;
        for p in &parts {
            prop_assert_eq!(p.start, next);
            prop_assert!(!p.is_empty());
            next = p.end;
        }
        prop_assert_eq!(next, len);
        if let (Some(lo), Some(hi)) = (parts.iter().map(|p| p.len()).min(), parts.iter().map(|p| p.len()).max()) {
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn row_assignment_covers_each_row_once(
        sizes in prop::collection::vec(0usize..200, 0..300),
        workers in 1usize..17,
        dynamic in any::<bool>(),
    ) {
        let balance = if dynamic { Balance::Dynamic } else { Balance::Static };
        let a = assign_by_size(&sizes, workers, balance);
        prop_assert_eq!(a.rows.len(), workers);
        let owner = a.owner_map(sizes.len());
        let mut seen = vec![0usize; sizes.len()];
        for (l, rows) in a.rows.iter().enumerate() {
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            let load: usize = rows.iter().map(|&r| sizes[r]).sum();
            prop_assert_eq!(load, a.stats.loads[l]);
            for &r in rows {
                seen[r] += 1;
                prop_assert_eq!(owner[r], l);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(a.stats.total(), sizes.iter().sum::<usize>());
    }

    #[test]
    fn lpt_respects_its_worst_case_bound(
        sizes in prop::collection::vec(1usize..500, 1..200),
        workers in 1usize..9,
    ) {
        let a = assign_by_size(&sizes, workers, Balance::Dynamic);
        let lower = (a.stats.ideal()).max(*sizes.iter().max().unwrap() as f64);
        // the optimum is at least `lower`, so LPT's 4/3 guarantee caps it here
        prop_assert!(a.stats.max() as f64 <= (4.0 / 3.0) * lower + 1e-9, "max {} lower {}", a.stats.max(), lower);
    }

    #[test]
    fn ordered_reduce_equals_serial_sum(
        parts in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 16), 1..12),
    ) {
        let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
        let got = reduce(&refs).unwrap();
        for (k, g) in got.iter().enumerate() {
            let mut s = 0.0;
            for p in &parts {
                s += p[k];
            }
            prop_assert_eq!(*g, s);
        }
    }
}

#[test]
fn reduce_rejects_mismatched_lengths() {
    assert!(reduce(&[&[1.0, 2.0][..], &[1.0][..]]).is_err());
    assert!(reduce(&[]).is_err());
}

/// Skewed bucket sizes like those of rating data: LPT should never lose to
/// round-robin by much and should usually win.
#[test]
fn lpt_against_round_robin_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut lpt_wins, mut ties, mut counterexamples) = (0, 0, Vec::new());
    for case in 0..100 {
        let rows = rng.random_range(20..400);
        let workers = rng.random_range(2..9);
        let sizes: Vec<usize> = (0..rows)
            .map(|_| {
                let u: f64 = rng.random();
                (1.0 / (1.0 - u).powf(0.8)).min(5000.0) as usize
            })
            .collect();
        let lpt = assign_by_size(&sizes, workers, Balance::Dynamic).stats.max();
        let rr = assign_by_size(&sizes, workers, Balance::Static).stats.max();
        match lpt.cmp(&rr) {
            std::cmp::Ordering::Less => lpt_wins += 1,
            std::cmp::Ordering::Equal => ties += 1,
            std::cmp::Ordering::Greater => counterexamples.push((case, lpt, rr)),
        }
    }
    println!("LPT better {lpt_wins}, equal {ties}, worse {:?}", counterexamples);
    assert!(lpt_wins >= 90, "LPT won only {lpt_wins} of 100");
    for (_, lpt, rr) in &counterexamples {
        assert!(*lpt as f64 <= 4.0 / 3.0 * *rr as f64);
    }
}
