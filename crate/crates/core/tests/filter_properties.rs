mod common;

use gcimb::filter::{extract_estimates, filter_step, initialize_tracks, merge_and_prune, predict, update};
use gcimb::rfs::{BernoulliTrack, MbPosterior};
use gcimb::tbd::{generate_frame, GroundTruth};
use gcimb::{FilterConfig, MotionModel, SensorModel, SingleState};
use proptest::prelude::*;

fn sensor(snr_db: f64) -> SensorModel {
    SensorModel::from_snr((20, 20), (1.0, 1.0), snr_db, 1.0, 1.0, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn update_keeps_existence_in_unit_interval(
        r in prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64],
        snr_db in -5.0..25.0f64,
        px in 0.0..20.0f64,
        py in 0.0..20.0f64,
        target in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let s = sensor(snr_db);
        let mut rng = common::rng(seed);
        let truth: Vec<SingleState> = if target { vec![SingleState::new(10.0, 10.0, 0.0, 0.0)] } else { vec![] };
        let frame = generate_frame(&truth, &s, 1, &mut rng);
        let mb = MbPosterior::new(vec![BernoulliTrack::new(r, common::cloud2(px, py, 1.0, 30, seed ^ 1)).unwrap()]);
        let out = update(&mb, &frame, &s);
        let t = &out.tracks()[0];
        prop_assert!((0.0..=1.0).contains(&t.r), "r = {}", t.r);
        prop_assert!(!(r == 0.0) || t.r == 0.0);
        prop_assert!(!(r == 1.0) || t.r == 1.0);
        let total: f64 = t.density.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn predict_keeps_particle_count_and_normalization(n in 1usize..80, q in 0.0..2.0f64, seed in any::<u64>()) {
        let mb = MbPosterior::new(vec![BernoulliTrack::new(0.6, common::cloud2(3.0, 4.0, 0.5, n, seed)).unwrap()]);
        let motion = MotionModel { process_noise: q, ..Default::default() };
        let out = predict(&mb, &motion, &mut common::rng(seed ^ 7));
        prop_assert_eq!(out.tracks()[0].density.len(), n);
        let total: f64 = out.tracks()[0].density.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((out.tracks()[0].r - 0.6 * motion.survival).abs() < 1e-15);
    }

    #[test]
    fn merge_and_prune_is_idempotent(
        xs in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 0.0..=1.0f64), 0..6),
        merge in 0.0..4.0f64,
        seed in any::<u64>(),
    ) {
        let cfg = FilterConfig { merge_distance: merge, particles_per_track: 40, ..Default::default() };
        let mb = MbPosterior::new(
            xs.iter()
                .enumerate()
                .map(|(i, &(x, y, r))| BernoulliTrack::new(r, common::cloud2(x, y, 0.05, 40, seed.wrapping_add(i as u64))).unwrap())
                .collect(),
        );
        let mut rng = common::rng(seed);
        let once = merge_and_prune(&mb, &cfg, &mut rng);
        let twice = merge_and_prune(&once, &cfg, &mut rng);
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn single_target_is_tracked_within_a_cell() {
    let s = SensorModel::from_snr((50, 50), (1.0, 1.0), 15.0, 1.0, 1.0, 1).unwrap();
    let truth = GroundTruth::constant_velocity(&[(SingleState::new(10.0, 20.0, 1.0, 0.5), 1, 30)], 1.0);
    let motion = MotionModel::default();
    let cfg = FilterConfig::default();
    let (mut sq, mut count) = (0.0, 0usize);
    for run in 0..50u64 {
        let mut frames = common::rng(1000 + run);
        let mut noise = common::rng(5000 + run);
        let mut mb = initialize_tracks(&truth.states_at(1), &cfg, &mut noise);
        for k in 1..=30 {
            let x = truth.states_at(k);
            let frame = generate_frame(&x, &s, k, &mut frames);
            mb = filter_step(&mb, &frame, &s, &motion, &cfg, k == 1, &mut noise);
            for e in extract_estimates(&mb, &cfg) {
                sq += e.position_distance(&x[0]).powi(2);
                count += 1;
            }
        }
    }
    assert!(count > 50 * 25, "track held on {count} of 1500 scans");
    let rmse = (sq / count as f64).sqrt();
    assert!(rmse < 1.0, "RMSE {rmse}");
}
