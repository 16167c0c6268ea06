#![allow(dead_code)]

use std::sync::Arc;

use gcimb::fusion::enumerate_fusion_maps;
use gcimb::rfs::{BernoulliTrack, DiagonalGaussian, GaussianMixture, GmbHypothesis, GmbPosterior, MbPosterior};
use gcimb::{ParticleDensity, SingleState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FLAT: f64 = 1e-30;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Particles from a 1-D Gaussian along `px`; other components are pinned
/// at zero.
pub fn cloud(mean: f64, var: f64, n: usize, seed: u64) -> ParticleDensity {
    GaussianMixture::gaussian(SingleState::scalar(mean), [var, FLAT, FLAT, FLAT]).sample(n, &mut rng(seed))
}

/// Particles from a 2-D Gaussian in position with fixed velocity spread.
pub fn cloud2(px: f64, py: f64, var: f64, n: usize, seed: u64) -> ParticleDensity {
    GaussianMixture::gaussian(SingleState::new(px, py, 0.0, 0.0), [var, var, 0.01, 0.01]).sample(n, &mut rng(seed))
}

pub fn scalar_mixture(parts: &[(f64, f64, f64)]) -> GaussianMixture {
    GaussianMixture::new(
        parts
            .iter()
            .map(|&(weight, mean, var)| DiagonalGaussian {
                weight,
                mean: SingleState::scalar(mean),
                variances: [var, 1.0, 1.0, 1.0],
            })
            .collect(),
    )
    .expect("valid mixture")
}

pub fn scalar_mb(r: &[f64], means: &[f64], var: f64) -> MbPosterior<GaussianMixture> {
    MbPosterior::new(
        r.iter()
            .zip(means)
            .map(|(&r, &m)| BernoulliTrack::new(r, scalar_mixture(&[(1.0, m, var)])).unwrap())
            .collect(),
    )
}

/// A random GMB over at most 4 source tracks with at most 30 hypotheses,
/// every fused density an exact 1-D mixture. Densities are shared between
/// hypotheses at random, as they are after pair fusion.
pub fn random_gmb<R: Rng>(rng: &mut R) -> GmbPosterior<GaussianMixture> {
    let m1 = rng.gen_range(0..=4usize);
    let m2 = rng.gen_range(0..=4usize);
    let mut all = Vec::new();
    for mask in 0u32..(1 << m1) {
        let subset: Vec<usize> = (0..m1).filter(|i| mask & (1 << i) != 0).collect();
        for map in enumerate_fusion_maps(&subset, m2) {
            all.push((subset.clone(), map));
        }
    }
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=30));
    let pool: Vec<Arc<GaussianMixture>> = (0..6)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let parts: Vec<(f64, f64, f64)> = (0..k)
                .map(|_| (rng.gen_range(0.1..1.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.05..2.0)))
                .collect();
            Arc::new(scalar_mixture(&parts))
        })
        .collect();
    let raw: Vec<f64> = all.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let hypotheses = all
        .into_iter()
        .zip(raw)
        .map(|((subset, map), w)| GmbHypothesis {
            fused: subset.iter().map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect(),
            ln_normalizers: subset.iter().map(|_| rng.gen_range(-3.0..0.0)).collect(),
            subset,
            map,
            weight: w / total,
        })
        .collect();
    GmbPosterior::new(m1, hypotheses).expect("valid random gmb")
}

pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<SingleState> {
    (0..n)
        .map(|i| {
            let px = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            SingleState::new(px, 0.3, -0.2, 0.1)
        })
        .collect()
}

/// Smallest OSPA cost by trying every assignment; small sets only.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(row: usize, used: &mut Vec<bool>, cost: &[Vec<f64>]) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                best = best.min(cost[row][col] + go(row + 1, used, cost));
                used[col] = false;
            }
        }
        best
    }
    let cols = cost.first().map_or(0, |r| r.len());
    go(0, &mut vec![false; cols], cost)
}
