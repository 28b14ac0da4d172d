use ldpr_core::ranking::{rank_characteristics, RankingKind};
use ldpr_core::reorder::{case_permutation, reorder_case, reorder_univariate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn kinds() -> impl Strategy<Value = RankingKind> {
    prop_oneof![
        Just(RankingKind::MultPr),
        Just(RankingKind::AvPr),
        Just(RankingKind::SEN),
        Just(RankingKind::BandDepth),
    ]
}

fn matrices(n: usize, l: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, l), n)
}

fn sorted(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rows
}

fn tie_free(c: &[f64]) -> bool {
    let mut v = c.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] != w[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rows_are_permuted_not_altered(
        (sample, template) in (2usize..15, 1usize..=2).prop_flat_map(|(n, l)| (matrices(n, l), matrices(n, l))),
        kind in kinds(),
        seed in any::<u64>(),
    ) {
        let out = reorder_case(&sample, &template, kind, &mut rng(seed)).unwrap();
        prop_assert_eq!(sorted(out), sorted(sample));
    }

    #[test]
    fn output_follows_template_ranks(
        (sample, template) in (2usize..15, 2usize..=2).prop_flat_map(|(n, l)| (matrices(n, l), matrices(n, l))),
        seed in any::<u64>(),
    ) {
        let kind = RankingKind::SEN;
        let ts = kind.characteristics(&template).unwrap();
        let ss = kind.characteristics(&sample).unwrap();
        prop_assume!(tie_free(&ts) && tie_free(&ss));
        let out = reorder_case(&sample, &template, kind, &mut rng(seed)).unwrap();
        let out_ranks = rank_characteristics(&kind.characteristics(&out).unwrap(), &mut rng(0)).unwrap();
        let template_ranks = rank_characteristics(&ts, &mut rng(0)).unwrap();
        prop_assert_eq!(out_ranks, template_ranks);
    }

    #[test]
    fn self_template_is_identity(sample in (2usize..15).prop_flat_map(|n| matrices(n, 2)), kind in kinds(), seed in any::<u64>()) {
        let chars = kind.characteristics(&sample).unwrap();
        prop_assume!(tie_free(&chars));
        prop_assert_eq!(reorder_case(&sample, &sample, kind, &mut rng(seed)).unwrap(), sample);
    }

    #[test]
    fn univariate_output_is_permutation(
        (sample, template) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))),
        seed in any::<u64>(),
    ) {
        let out = reorder_univariate(&sample, &template, &mut rng(seed)).unwrap();
        let mut a = out.clone();
        let mut b = sample.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_margin_case_equals_univariate(
        (sample, template) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))),
        kind in kinds(),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = sample.iter().map(|v| vec![*v]).collect();
        let t: Vec<Vec<f64>> = template.iter().map(|v| vec![*v]).collect();
        let case: Vec<f64> = reorder_case(&rows, &t, kind, &mut rng(seed)).unwrap().into_iter().map(|r| r[0]).collect();
        prop_assert_eq!(case, reorder_univariate(&sample, &template, &mut rng(seed)).unwrap());
    }

    #[test]
    fn source_row_has_template_rank(
        (sample, template) in (2usize..15).prop_flat_map(|n| (matrices(n, 2), matrices(n, 2))),
        kind in kinds(),
        seed in any::<u64>(),
    ) {
        let perm = case_permutation(&sample, &template, kind, &mut rng(seed)).unwrap();
        for (n, &src) in perm.source.iter().enumerate() {
            prop_assert_eq!(perm.sample_ranks[src], perm.template_ranks[n]);
        }
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let a = vec![vec![1.0, 2.0]; 3];
    let b = vec![vec![1.0, 2.0]; 4];
    assert!(reorder_case(&a, &b, RankingKind::MultPr, &mut rng(0)).is_err());
    let c = vec![vec![1.0]; 3];
    assert!(reorder_case(&a, &c, RankingKind::MultPr, &mut rng(0)).is_err());
}
