mod common;

use gcimb::rfs::{ln_joint_existence, phd_gmb, phd_mb, BernoulliTrack, GmbPosterior, MbPosterior};
use gcimb::SingleState;
use proptest::prelude::*;

fn subsets(m: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << m)).map(move |mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
}

fn existence(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64], 0..=max)
}

proptest! {
    #[test]
    fn joint_existence_sums_to_one(r in existence(12)) {
        let total: f64 = subsets(r.len())
            .map(|s| ln_joint_existence(&r, &s).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
    }

    #[test]
    fn cardinality_matches_subset_enumeration(r in existence(10)) {
        let mb = common::scalar_mb(&r, &vec![0.0; r.len()], 1.0);
        let dist = mb.cardinality_distribution();
        prop_assert_eq!(dist.len(), r.len() + 1);
        let mut brute = vec![0.0; r.len() + 1];
        for s in subsets(r.len()) {
            brute[s.len()] += mb.joint_existence_weight(&s).unwrap();
        }
        for (a, b) in dist.iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", dist, brute);
        }
    }

    #[test]
    fn identity_gmb_has_the_mb_phd(
        r in prop::collection::vec(0.0..=1.0f64, 0..=5),
        means in prop::collection::vec(-5.0..5.0f64, 5),
        x in -8.0..8.0f64,
    ) {
        let mb = common::scalar_mb(&r, &means[..r.len()], 0.5);
        let gmb = GmbPosterior::from_mb(&mb);
        let p = SingleState::new(x, 0.2, 0.0, -0.1);
        let a = phd_mb(&mb, &p);
        let b = phd_gmb(&gmb, &p);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn separation_is_monotone_in_confidence(
        gap in 0.0..3.0f64,
        var in 0.02..0.5f64,
        l1 in 0.05..0.95f64,
        l2 in 0.05..0.95f64,
        seed in any::<u64>(),
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let mb = MbPosterior::new(vec![
            BernoulliTrack::new(0.9, common::cloud(0.0, var, 80, seed)).unwrap(),
            BernoulliTrack::new(0.9, common::cloud(gap, var, 80, seed ^ 0x5a5a)).unwrap(),
        ]);
        let at_hi = mb.check_separation(hi).unwrap().separated;
        let at_lo = mb.check_separation(lo).unwrap().separated;
        prop_assert!(!at_hi || at_lo, "separated at {} but not at {}", hi, lo);
    }
}
