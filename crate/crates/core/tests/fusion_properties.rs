mod common;

use std::collections::BTreeSet;

use gcimb::filter::extract_estimates;
use gcimb::fusion::{enumerate_fusion_maps, falling_factorial, fuse_track_pair, gci_mb_fuse, moment_match};
use gcimb::kde::fit_kde;
use gcimb::rfs::{phd_gmb, phd_mb, BernoulliTrack, MbPosterior};
use gcimb::{FilterConfig, FusionConfig, FusionWeights};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every injective map from `subset` into `0..m2`, found by filtering all
/// functions.
fn brute_force_maps(subset: &[usize], m2: usize) -> BTreeSet<Vec<(usize, usize)>> {
    let k = subset.len();
    let mut out = BTreeSet::new();
    for code in 0..m2.pow(k as u32) {
        let mut c = code;
        let targets: Vec<usize> = (0..k)
            .map(|_| {
                let t = c % m2;
                c /= m2;
                t
            })
            .collect();
        let distinct: BTreeSet<usize> = targets.iter().copied().collect();
        if distinct.len() == k {
            let mut pairs: Vec<(usize, usize)> = subset.iter().copied().zip(targets).collect();
            pairs.sort_unstable();
            out.insert(pairs);
        }
    }
    out
}

#[test]
fn fusion_map_counts_match_exhaustive_search() {
    for m1 in 0..=5usize {
        for m2 in 0..=5usize {
            for mask in 0u32..(1 << m1) {
                let subset: Vec<usize> = (0..m1).filter(|i| mask & (1 << i) != 0).collect();
                let maps = enumerate_fusion_maps(&subset, m2);
                let expected = if subset.len() <= m2 { falling_factorial(m2, subset.len()) } else { 0 };
                assert_eq!(maps.len() as u64, expected, "|I|={} |L2|={m2}", subset.len());
                let got: BTreeSet<Vec<(usize, usize)>> = maps.iter().map(|m| m.pairs().to_vec()).collect();
                assert_eq!(got.len(), maps.len(), "duplicates");
                if subset.len() <= m2 && m2 > 0 {
                    assert_eq!(got, brute_force_maps(&subset, m2));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_match_preserves_the_phd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gmb = common::random_gmb(&mut rng);
        let mb = moment_match(&gmb);
        prop_assert!(mb.len() <= gmb.source_len());
        for x in common::grid(-8.0, 8.0, 40) {
            let a = phd_gmb(&gmb, &x);
            let b = phd_mb(&mb, &x);
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }
}

fn random_mb(seed: u64, len: usize) -> MbPosterior {
    let mut rng = common::rng(seed);
    MbPosterior::new(
        (0..len)
            .map(|i| {
                let r = rand::Rng::gen_range(&mut rng, 0.05..0.99);
                let x = 8.0 * i as f64 + rand::Rng::gen_range(&mut rng, -1.0..1.0);
                BernoulliTrack::new(r, common::cloud2(x, 5.0, 0.3, 60, seed * 31 + i as u64)).unwrap()
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fused_hypothesis_weights_are_normalized(
        s1 in any::<u32>(),
        s2 in any::<u32>(),
        m1 in 0usize..=3,
        m2 in 0usize..=3,
        w in 0.0..=1.0f64,
    ) {
        let a = random_mb(s1 as u64, m1);
        let b = random_mb(s2 as u64 + (1 << 33), m2);
        let out = gci_mb_fuse(&a, &b, FusionWeights::new(w, 1.0 - w).unwrap(), &FusionConfig::default());
        let total: f64 = out.gmb.hypotheses().iter().map(|h| h.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
        prop_assert!(out.mb.tracks().iter().all(|t| (0.0..=1.0).contains(&t.r)));
        prop_assert_eq!(out.mb.len(), m1.min(m2));
    }
}

#[test]
fn gaussian_oracle_within_five_percent() {
    // N(m1, P1)^{1/2} N(m2, P2)^{1/2} is Gaussian with precision
    // (1/P1 + 1/P2)/2; Z follows from completing the square.
    for (m2, p2) in [(2.0, 1.0), (1.0, 0.5)] {
        let (m1, p1) = (0.0, 1.0);
        let f = fuse_track_pair(
            &common::cloud(m1, p1, 10_000, 11),
            &common::cloud(m2, p2, 10_000, 12),
            FusionWeights::equal(),
        );
        let prec = 0.5 / p1 + 0.5 / p2;
        let var = 1.0 / prec;
        let mean = var * (0.5 * m1 / p1 + 0.5 * m2 / p2);
        let ln_z = 0.5 * (2.0 * std::f64::consts::PI * var).ln()
            - 0.25 * (2.0 * std::f64::consts::PI * p1).ln()
            - 0.25 * (2.0 * std::f64::consts::PI * p2).ln()
            - 0.5 * (0.5 * m1 * m1 / p1 + 0.5 * m2 * m2 / p2 - mean * mean / var);
        let got_mean = f.density.mean().px;
        let got_var: f64 = f
            .density
            .particles()
            .iter()
            .map(|p| p.weight * (p.state.px - got_mean).powi(2))
            .sum();
        assert!((got_mean - mean).abs() < 0.05 * var.sqrt(), "mean {got_mean} vs {mean}");
        assert!((got_var / var - 1.0).abs() < 0.05, "var {got_var} vs {var}");
        assert!((f.normalizer() / ln_z.exp() - 1.0).abs() < 0.05, "Z {} vs {}", f.normalizer(), ln_z.exp());
    }
}

fn separated_mb(r: f64, seed: u64) -> MbPosterior {
    MbPosterior::new(
        (0..3)
            .map(|i| BernoulliTrack::new(r, common::cloud2(10.0 * i as f64, 5.0, 0.2, 300, seed + i)).unwrap())
            .collect(),
    )
}

#[test]
fn self_fusion_keeps_the_estimate_count() {
    let cfg = FilterConfig::default();
    for (k, r) in [0.2, 0.5, 0.9].into_iter().enumerate() {
        let mb = separated_mb(r, 40 + 10 * k as u64);
        let out = gci_mb_fuse(&mb, &mb, FusionWeights::equal(), &FusionConfig::default());
        let rs: Vec<f64> = out.mb.tracks().iter().map(|t| t.r).collect();
        assert_eq!(extract_estimates(&out.mb, &cfg).len(), extract_estimates(&mb, &cfg).len(), "r = {r}, fused {rs:?}");
    }
}

#[test]
fn fusion_order_barely_matters() {
    let cfg = FusionConfig::default();
    let third = FusionWeights::new(2.0 / 3.0, 1.0 / 3.0).unwrap();
    for trial in 0..4u64 {
        let post: Vec<MbPosterior> = (0..3)
            .map(|i| {
                let x = 5.0 + 0.3 * i as f64;
                MbPosterior::new(vec![
                    BernoulliTrack::new(0.7 + 0.1 * i as f64, common::cloud2(x, 5.0, 0.4, 400, 100 * trial + i)).unwrap(),
                ])
            })
            .collect();
        let fuse = |a: usize, b: usize, c: usize| {
            let ab = gci_mb_fuse(&post[a], &post[b], FusionWeights::equal(), &cfg).mb;
            gci_mb_fuse(&ab, &post[c], third, &cfg).mb
        };
        let one = fuse(0, 1, 2);
        let two = fuse(0, 2, 1);
        let (t1, t2) = (&one.tracks()[0], &two.tracks()[0]);
        let h = fit_kde(&t1.density).position_bandwidth().max(fit_kde(&t2.density).position_bandwidth());
        assert!((t1.r - t2.r).abs() < 0.05, "r {} vs {}", t1.r, t2.r);
        assert!(t1.density.mean().position_distance(&t2.density.mean()) < 2.0 * h);
    }
}
