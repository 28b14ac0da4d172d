use ldpr_core::scoring::{
    crps_ensemble, energy_score, observation_rank, reliability_index, variogram_score_05, HistogramKind, RankHistogram,
    VerificationRecord,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn records(l: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..12, l).prop_flat_map(|(n, l)| {
        (
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, l), n),
            prop::collection::vec(-10.0f64..10.0, l),
        )
    })
}

proptest! {
    #[test]
    fn energy_score_in_one_dimension_is_crps((ens, obs) in records(1..2)) {
        let record = VerificationRecord::new(ens.clone(), obs.clone()).unwrap();
        let members: Vec<f64> = ens.iter().map(|m| m[0]).collect();
        prop_assert_eq!(energy_score(&record), crps_ensemble(&members, obs[0]).unwrap());
    }

    #[test]
    fn scores_ignore_member_order((ens, obs) in records(1..5), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = ens.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = VerificationRecord::new(ens, obs.clone()).unwrap();
        let b = VerificationRecord::new(shuffled, obs).unwrap();
        prop_assert!((energy_score(&a) - energy_score(&b)).abs() <= 1e-12 * (1.0 + energy_score(&a)));
        prop_assert!((variogram_score_05(&a) - variogram_score_05(&b)).abs() <= 1e-12 * (1.0 + variogram_score_05(&a)));
    }

    #[test]
    fn variogram_score_ignores_common_shift((ens, obs) in records(2..5), shift in -4.0f64..4.0) {
        // Only differences between margins enter, so a shift shared by every
        // margin cancels. Shifting a single margin does not.
        let move_row = |row: &Vec<f64>| row.iter().map(|v| v + shift).collect::<Vec<f64>>();
        let a = VerificationRecord::new(ens.clone(), obs.clone()).unwrap();
        let b = VerificationRecord::new(ens.iter().map(move_row).collect(), move_row(&obs)).unwrap();
        let (va, vb) = (variogram_score_05(&a), variogram_score_05(&b));
        prop_assert!((va - vb).abs() <= 1e-9 * (1.0 + va), "{} vs {}", va, vb);
    }

    #[test]
    fn distinct_ranks_ignore_rng(
        values in prop::collection::hash_set(-500i32..500, 3..20),
        s1 in any::<u64>(),
        s2 in any::<u64>(),
    ) {
        // Points on a strictly increasing chain have distinct characteristics
        // under every histogram kind except band depth, which pairs them up.
        let pts: Vec<Vec<f64>> = values.into_iter().map(|v| vec![v as f64, 2.0 * v as f64]).collect();
        let (obs, ens) = pts.split_last().unwrap();
        let record = VerificationRecord::new(ens.to_vec(), obs.clone()).unwrap();
        for kind in [HistogramKind::Multivariate, HistogramKind::Average] {
            let a = observation_rank(&record, kind, &mut ChaCha8Rng::seed_from_u64(s1));
            let b = observation_rank(&record, kind, &mut ChaCha8Rng::seed_from_u64(s2));
            prop_assert_eq!(a, b);
            prop_assert!(a >= 1 && a <= ens.len() + 1);
        }
    }

    #[test]
    fn reliability_index_bounds(counts in prop::collection::vec(0u64..100, 2..30)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let n = counts.len() - 1;
        let h = RankHistogram::from_counts(HistogramKind::Average, counts.clone()).unwrap();
        let d = reliability_index(&h).unwrap();
        prop_assert!(d >= 0.0 && d <= 2.0 * n as f64 / (n + 1) as f64 + 1e-12);
        let mut rev = counts;
        rev.reverse();
        let r = RankHistogram::from_counts(HistogramKind::Average, rev).unwrap();
        prop_assert!((reliability_index(&r).unwrap() - d).abs() <= 1e-12);
    }
}

#[test]
fn uniform_histogram_has_zero_index() {
    let h = RankHistogram::from_counts(HistogramKind::Multivariate, vec![7; 51]).unwrap();
    assert_eq!(reliability_index(&h).unwrap(), 0.0);
}
