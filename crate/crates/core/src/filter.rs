//! Particle multi-Bernoulli track-before-detect filter run at every node.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rfs::{BernoulliTrack, MbPosterior, ParticleDensity, SingleState, WeightedParticle};
use crate::tbd::{log_likelihood_ratio, ImageFrame, SensorModel};

/// Constant-velocity motion driven by continuous white acceleration noise.
/// Per axis the discretized noise covariance is
/// `q² [[T³/3, T²/2], [T²/2, T]]`, which is full rank, so a collapsed
/// cloud regains spread in all four dimensions after one prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionModel {
    /// Scan period T in seconds.
    pub period: f64,
    /// Acceleration noise intensity `q` per axis.
    pub process_noise: f64,
    /// Survival probability p_e.
    pub survival: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            period: 1.0,
            process_noise: 0.5,
            survival: 0.95,
        }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::config("motion.period", "must be > 0"));
        }
        if !(self.process_noise >= 0.0) {
            return Err(Error::config("motion.process_noise", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.survival) {
            return Err(Error::config("motion.survival", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// Noise-free constant-velocity transition.
    pub fn transition(&self, x: &SingleState) -> SingleState {
        let t = self.period;
        SingleState::new(x.px + x.vx * t, x.py + x.vy * t, x.vx, x.vy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub particles_per_track: usize,
    /// Tracks with existence below this are dropped.
    pub prune_threshold: f64,
    /// Tracks whose mean positions are closer than this (metres) are merged.
    pub merge_distance: f64,
    /// Tracks with existence above this are reported as targets.
    pub existence_threshold: f64,
    /// Existence probability of freshly initialized tracks.
    pub initial_existence: f64,
    /// Half-width (metres) of the uniform position box used at initialization.
    pub init_position_spread: f64,
    /// Standard deviation (m/s) of the initial velocity perturbation.
    pub init_velocity_std: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles_per_track: 200,
            prune_threshold: 1e-3,
            merge_distance: 0.0,
            existence_threshold: 0.5,
            initial_existence: 0.5,
            init_position_spread: 2.0,
            init_velocity_std: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles_per_track == 0 {
            return Err(Error::config("filter.particles_per_track", "must be >= 1"));
        }
        for (name, v) in [
            ("filter.prune_threshold", self.prune_threshold),
            ("filter.existence_threshold", self.existence_threshold),
            ("filter.initial_existence", self.initial_existence),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("must be in (0, 1), got {v}")));
            }
        }
        if !(self.merge_distance >= 0.0) {
            return Err(Error::config("filter.merge_distance", "must be >= 0"));
        }
        if !(self.init_position_spread >= 0.0 && self.init_velocity_std >= 0.0) {
            return Err(Error::config("filter.init_position_spread", "spreads must be >= 0"));
        }
        Ok(())
    }
}

/// One track per true target, with particles uniform in a box around the
/// true position and velocities perturbed around the true velocity.
pub fn initialize_tracks<R: Rng + ?Sized>(
    truth: &[SingleState],
    config: &FilterConfig,
    rng: &mut R,
) -> MbPosterior {
    let vel = Normal::new(0.0, config.init_velocity_std).expect("finite std");
    let tracks = truth
        .iter()
        .map(|x| {
            let s = config.init_position_spread;
            let states = (0..config.particles_per_track)
                .map(|_| {
                    let (dx, dy) = if s > 0.0 {
                        let u = Uniform::new_inclusive(-s, s);
                        (u.sample(rng), u.sample(rng))
                    } else {
                        (0.0, 0.0)
                    };
                    SingleState::new(x.px + dx, x.py + dy, x.vx + vel.sample(rng), x.vy + vel.sample(rng))
                })
                .collect();
            BernoulliTrack {
                r: config.initial_existence,
                density: ParticleDensity::from_states(states).expect("particles_per_track >= 1"),
            }
        })
        .collect();
    MbPosterior::new(tracks)
}

/// Survival thinning plus constant-velocity propagation of every particle.
pub fn predict<R: Rng + ?Sized>(mb: &MbPosterior, motion: &MotionModel, rng: &mut R) -> MbPosterior {
    let t = motion.period;
    let q = motion.process_noise;
    // Cholesky factor of the per-axis noise covariance.
    let (l11, l21, l22) = (q * (t * t * t / 3.0).sqrt(), q * (3.0 * t).sqrt() / 2.0, q * t.sqrt() / 2.0);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let tracks = mb
        .tracks()
        .iter()
        .map(|track| {
            let mut density = track.density.clone();
            for p in density.particles_mut() {
                let mut next = motion.transition(&p.state);
                if q > 0.0 {
                    let e: [f64; 4] = std::array::from_fn(|_| std_normal.sample(rng));
                    next.px += l11 * e[0];
                    next.vx += l21 * e[0] + l22 * e[1];
                    next.py += l11 * e[2];
                    next.vy += l21 * e[2] + l22 * e[3];
                }
                p.state = next;
            }
            BernoulliTrack {
                r: track.r * motion.survival,
                density,
            }
        })
        .collect();
    MbPosterior::new(tracks)
}

/// `r / (1 - r + r ẑ)` scaling of the existence probability, evaluated in
/// log-odds form.
pub fn updated_existence(r: f64, ln_evidence: f64) -> f64 {
    if r <= 0.0 || ln_evidence == f64::NEG_INFINITY {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    let log_odds = r.ln() + ln_evidence - (1.0 - r).ln();
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// Image update: particle weights are multiplied by the likelihood ratio
/// and the existence probability is updated with the evidence
/// `ẑ = Σ w_m g_z(x_m)`.
pub fn update(mb: &MbPosterior, frame: &ImageFrame, sensor: &SensorModel) -> MbPosterior {
    debug_assert!(frame.matches(sensor));
    let tracks = mb
        .tracks()
        .iter()
        .map(|track| {
            let log_w: Vec<f64> = track
                .density
                .particles()
                .iter()
                .map(|p| p.weight.ln() + log_likelihood_ratio(frame, &p.state, sensor))
                .collect();
            let (w, ln_evidence) = math::normalize_log_weights(&log_w);
            let r = updated_existence(track.r, ln_evidence);
            if !ln_evidence.is_finite() {
                return BernoulliTrack { r, density: track.density.clone() };
            }
            let particles = track
                .density
                .particles()
                .iter()
                .zip(w)
                .map(|(p, weight)| WeightedParticle { state: p.state, weight })
                .collect();
            BernoulliTrack {
                r,
                density: ParticleDensity::from_parts_unchecked(particles),
            }
        })
        .collect();
    MbPosterior::new(tracks)
}

/// Systematic resampling to `count` equal-weight particles. A track whose
/// weights are all zero keeps its particles and gets `r = 0`, so the next
/// prune removes it.
pub fn resample<R: Rng + ?Sized>(track: &BernoulliTrack, count: usize, rng: &mut R) -> BernoulliTrack {
    let total: f64 = track.density.particles().iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return BernoulliTrack {
            r: 0.0,
            density: track.density.clone(),
        };
    }
    BernoulliTrack {
        r: track.r,
        density: track.density.resample(count, rng),
    }
}

/// Merges tracks whose mean positions lie within `merge_distance` (closest
/// pair first, repeated until no pair qualifies), then drops tracks below
/// the prune threshold.
pub fn merge_and_prune<R: Rng + ?Sized>(mb: &MbPosterior, config: &FilterConfig, rng: &mut R) -> MbPosterior {
    let mut tracks: Vec<BernoulliTrack> = mb.tracks().to_vec();
    let mut means: Vec<SingleState> = tracks.iter().map(|t| t.density.mean()).collect();
    loop {
        let mut closest: Option<(f64, usize, usize)> = None;
        for i in 0..tracks.len() {
            for j in (i + 1)..tracks.len() {
                let d = means[i].position_distance(&means[j]);
                if d <= config.merge_distance && closest.map_or(true, |c| d < c.0) {
                    closest = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = closest else { break };
        let b = tracks.remove(j);
        means.remove(j);
        let a = &tracks[i];
        let total = a.r + b.r;
        let (wa, wb) = if total > 0.0 { (a.r / total, b.r / total) } else { (0.5, 0.5) };
        let pooled = <ParticleDensity as crate::rfs::TrackDensity>::mixture(&[(wa, &a.density), (wb, &b.density)]);
        let merged = BernoulliTrack {
            r: total.min(1.0),
            density: pooled.resample(config.particles_per_track, rng),
        };
        means[i] = merged.density.mean();
        tracks[i] = merged;
    }
    tracks.retain(|t| t.r >= config.prune_threshold);
    MbPosterior::new(tracks)
}

/// Existence must beat the threshold by more than this to count, so that
/// rounding in fusion cannot flip a track sitting on the threshold.
pub const EXISTENCE_TOLERANCE: f64 = 1e-12;

/// Weighted particle mean of every track whose existence exceeds the
/// configured threshold.
pub fn extract_estimates(mb: &MbPosterior, config: &FilterConfig) -> Vec<SingleState> {
    mb.tracks()
        .iter()
        .filter(|t| t.r > config.existence_threshold + EXISTENCE_TOLERANCE)
        .map(|t| t.density.mean())
        .collect()
}

/// One full local scan: predict (skipped on the first scan), update,
/// resample, merge and prune.
pub fn filter_step<R: Rng + ?Sized>(
    mb: &MbPosterior,
    frame: &ImageFrame,
    sensor: &SensorModel,
    motion: &MotionModel,
    config: &FilterConfig,
    first_scan: bool,
    rng: &mut R,
) -> MbPosterior {
    let predicted = if first_scan { mb.clone() } else { predict(mb, motion, rng) };
    let updated = update(&predicted, frame, sensor);
    let resampled = MbPosterior::new(
        updated
            .tracks()
            .iter()
            .map(|t| resample(t, config.particles_per_track, rng))
            .collect(),
    );
    merge_and_prune(&resampled, config, rng)
}
