//! Random-finite-set building blocks: single-target states, particle
//! densities, Bernoulli tracks, multi-Bernoulli (MB) and generalized
//! multi-Bernoulli (GMB) posteriors, and the functionals defined on them.
//!
//! Track indices are positions in the track vector (`0..M`). Operations that
//! drop tracks re-compact the index space, so an index is only meaningful
//! relative to the posterior it came from.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::Vector4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionMap;
use crate::kde::{fit_kde, KdeDensity};
use crate::math;

/// Dimension of the single-target state `[px, py, vx, vy]`.
pub const STATE_DIM: usize = 4;

/// Default HPD confidence used by [`MbPosterior::check_separation`] callers.
pub const DEFAULT_HPD_CONFIDENCE: f64 = 0.9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SingleState {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl SingleState {
    pub const fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { px, py, vx, vy }
    }

    /// A state whose only nonzero component is `px`; used for 1-D examples.
    pub const fn scalar(px: f64) -> Self {
        Self::new(px, 0.0, 0.0, 0.0)
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.px, self.py, self.vx, self.vy)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.px, self.py, self.vx, self.vy]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|c| c.is_finite())
    }

    /// Euclidean distance between the position components.
    pub fn position_distance(&self, other: &SingleState) -> f64 {
        (self.px - other.px).hypot(self.py - other.py)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedParticle {
    pub state: SingleState,
    pub weight: f64,
}

/// Weighted particle approximation of a single-target density.
///
/// Weights are kept normalized; construction rejects empty clouds and
/// negative or non-finite weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleDensity {
    particles: Vec<WeightedParticle>,
}

impl ParticleDensity {
    pub fn new(particles: Vec<WeightedParticle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::domain("a particle density needs at least one particle"));
        }
        if particles
            .iter()
            .any(|p| !(p.weight >= 0.0 && p.weight.is_finite()) || !p.state.is_finite())
        {
            return Err(Error::domain("particle weights must be finite and nonnegative"));
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if total <= 0.0 {
            return Err(Error::domain("particle weights sum to zero"));
        }
        let mut particles = particles;
        for p in &mut particles {
            p.weight /= total;
        }
        Ok(Self { particles })
    }

    /// Equally weighted density over the given states.
    pub fn from_states(states: Vec<SingleState>) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        Self::new(
            states
                .into_iter()
                .map(|state| WeightedParticle { state, weight: w })
                .collect(),
        )
    }

    pub fn particles(&self) -> &[WeightedParticle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn states(&self) -> impl Iterator<Item = &SingleState> {
        self.particles.iter().map(|p| &p.state)
    }

    pub fn mean(&self) -> SingleState {
        let mut m = Vector4::zeros();
        for p in &self.particles {
            m += p.state.to_vector() * p.weight;
        }
        SingleState::from_vector(&m)
    }

    pub fn is_equally_weighted(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.particles.iter().all(|p| (p.weight - w).abs() <= 1e-12 * w.max(1.0))
    }

    pub(crate) fn from_parts_unchecked(particles: Vec<WeightedParticle>) -> Self {
        Self { particles }
    }

    pub(crate) fn particles_mut(&mut self) -> &mut [WeightedParticle] {
        &mut self.particles
    }

    fn resample_with_indices(&self, idx: Vec<usize>) -> Self {
        let w = 1.0 / idx.len() as f64;
        Self {
            particles: idx
                .into_iter()
                .map(|i| WeightedParticle {
                    state: self.particles[i].state,
                    weight: w,
                })
                .collect(),
        }
    }

    /// Systematic resampling to `count` equally weighted particles.
    pub fn resample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Self {
        let idx = math::systematic_indices(&self.weights(), count.max(1), rng);
        self.resample_with_indices(idx)
    }

    /// Systematic resampling with the fixed offset 1/2, so the result is a
    /// pure function of the input. Equally weighted inputs resampled to the
    /// same count come back unchanged.
    pub fn resample_deterministic(&self, count: usize) -> Self {
        if count == self.len() && self.is_equally_weighted() {
            return self.clone();
        }
        let idx = math::systematic_indices_with_offset(&self.weights(), count.max(1), 0.5);
        self.resample_with_indices(idx)
    }
}

/// A density that can be evaluated pointwise.
pub trait PointDensity {
    fn ln_pdf(&self, x: &SingleState) -> f64;

    fn pdf(&self, x: &SingleState) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// Single-target density representation carried by Bernoulli tracks.
pub trait TrackDensity: Clone + Send + Sync {
    type Evaluator: PointDensity + Send + Sync;

    /// A pointwise evaluator for this density. Particle densities are
    /// smoothed through a kernel density estimate.
    fn evaluator(&self) -> Self::Evaluator;

    /// The exact mixture `Σ w_i p_i` of the given parts; weights sum to one.
    fn mixture(parts: &[(f64, &Self)]) -> Self;

    fn mean(&self) -> SingleState;
}

impl TrackDensity for ParticleDensity {
    type Evaluator = KdeDensity;

    fn evaluator(&self) -> KdeDensity {
        fit_kde(self)
    }

    fn mixture(parts: &[(f64, &Self)]) -> Self {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        let mut particles = Vec::with_capacity(parts.iter().map(|(_, d)| d.len()).sum());
        for (w, d) in parts {
            for p in d.particles() {
                particles.push(WeightedParticle {
                    state: p.state,
                    weight: p.weight * w / total,
                });
            }
        }
        Self { particles }
    }

    fn mean(&self) -> SingleState {
        ParticleDensity::mean(self)
    }
}

/// One axis-aligned Gaussian component of a [`GaussianMixture`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagonalGaussian {
    pub weight: f64,
    pub mean: SingleState,
    pub variances: [f64; STATE_DIM],
}

impl DiagonalGaussian {
    fn ln_pdf(&self, x: &SingleState) -> f64 {
        let xs = x.as_array();
        let ms = self.mean.as_array();
        (0..STATE_DIM)
            .map(|d| math::ln_normal_pdf(xs[d], ms[d], self.variances[d]))
            .sum()
    }
}

/// Mixture of diagonal Gaussians. Closed under mixing and exactly
/// evaluable, which makes it the reference density for identities that
/// must hold to machine precision.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<DiagonalGaussian>,
}

impl GaussianMixture {
    pub fn new(components: Vec<DiagonalGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("a mixture needs at least one component"));
        }
        if components
            .iter()
            .any(|c| c.weight < 0.0 || c.variances.iter().any(|&v| !(v > 0.0)))
        {
            return Err(Error::domain("mixture weights must be >= 0 and variances > 0"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::domain("mixture weights sum to zero"));
        }
        let components = components
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Ok(Self { components })
    }

    pub fn gaussian(mean: SingleState, variances: [f64; STATE_DIM]) -> Self {
        Self {
            components: vec![DiagonalGaussian {
                weight: 1.0,
                mean,
                variances,
            }],
        }
    }

    pub fn components(&self) -> &[DiagonalGaussian] {
        &self.components
    }

    /// Draws `count` equally weighted particles from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> ParticleDensity {
        use rand_distr::{Distribution, Normal};
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let picks = math::systematic_indices(&weights, count, rng);
        let states = picks
            .into_iter()
            .map(|k| {
                let c = &self.components[k];
                let m = c.mean.as_array();
                let mut s = [0.0; STATE_DIM];
                for d in 0..STATE_DIM {
                    let n = Normal::new(m[d], c.variances[d].sqrt()).expect("positive variance");
                    s[d] = n.sample(rng);
                }
                SingleState::new(s[0], s[1], s[2], s[3])
            })
            .collect();
        ParticleDensity::from_states(states).expect("count >= 1")
    }
}

impl PointDensity for GaussianMixture {
    fn ln_pdf(&self, x: &SingleState) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.ln_pdf(x))
            .collect();
        math::log_sum_exp(&terms)
    }
}

impl TrackDensity for GaussianMixture {
    type Evaluator = GaussianMixture;

    fn evaluator(&self) -> GaussianMixture {
        self.clone()
    }

    fn mixture(parts: &[(f64, &Self)]) -> Self {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        let components = parts
            .iter()
            .flat_map(|(w, d)| {
                d.components.iter().map(move |c| DiagonalGaussian {
                    weight: c.weight * w / total,
                    ..*c
                })
            })
            .collect();
        Self { components }
    }

    fn mean(&self) -> SingleState {
        let mut m = Vector4::zeros();
        for c in &self.components {
            m += c.mean.to_vector() * c.weight;
        }
        SingleState::from_vector(&m)
    }
}

/// A single potential target: existence probability plus state density.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliTrack<D = ParticleDensity> {
    pub r: f64,
    pub density: D,
}

impl<D> BernoulliTrack<D> {
    pub fn new(r: f64, density: D) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!("existence probability {r} outside [0, 1]")));
        }
        Ok(Self { r, density })
    }
}

/// Multi-Bernoulli posterior: a union of independent Bernoulli tracks.
#[derive(Clone, Debug, PartialEq)]
pub struct MbPosterior<D = ParticleDensity> {
    tracks: Vec<BernoulliTrack<D>>,
}

impl<D> Default for MbPosterior<D> {
    fn default() -> Self {
        Self { tracks: Vec::new() }
    }
}

impl<D> MbPosterior<D> {
    pub fn new(tracks: Vec<BernoulliTrack<D>>) -> Self {
        Self { tracks }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &[BernoulliTrack<D>] {
        &self.tracks
    }

    pub fn tracks_mut(&mut self) -> &mut Vec<BernoulliTrack<D>> {
        &mut self.tracks
    }

    pub fn into_tracks(self) -> Vec<BernoulliTrack<D>> {
        self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn existence(&self) -> Vec<f64> {
        self.tracks.iter().map(|t| t.r).collect()
    }

    /// Expected number of targets `Σ r`.
    pub fn expected_cardinality(&self) -> f64 {
        self.tracks.iter().map(|t| t.r).sum()
    }

    /// `ln Q^I = Σ_{ℓ∈I} ln r_ℓ + Σ_{ℓ∉I} ln(1 - r_ℓ)`.
    pub fn ln_joint_existence_weight(&self, subset: &[usize]) -> Result<f64> {
        ln_joint_existence(&self.existence(), subset)
    }

    /// Joint existence weight `Q^I`: probability that exactly the tracks in
    /// `subset` exist.
    pub fn joint_existence_weight(&self, subset: &[usize]) -> Result<f64> {
        Ok(self.ln_joint_existence_weight(subset)?.exp())
    }

    /// Probability of each cardinality `0..=M`.
    pub fn cardinality_distribution(&self) -> Vec<f64> {
        let mut dist = vec![1.0];
        for t in &self.tracks {
            let mut next = vec![0.0; dist.len() + 1];
            for (n, p) in dist.iter().enumerate() {
                next[n] += p * (1.0 - t.r);
                next[n + 1] += p * t.r;
            }
            dist = next;
        }
        dist
    }
}

/// `ln Q^I` for an existence vector; indices in `subset` must be distinct
/// and in range.
pub fn ln_joint_existence(r: &[f64], subset: &[usize]) -> Result<f64> {
    let mut member = vec![false; r.len()];
    for &i in subset {
        if i >= r.len() {
            return Err(Error::UnknownTrack { index: i, len: r.len() });
        }
        if member[i] {
            return Err(Error::domain(format!("track index {i} repeated in subset")));
        }
        member[i] = true;
    }
    Ok(r
        .iter()
        .zip(&member)
        .map(|(&ri, &inside)| if inside { ri.ln() } else { (1.0 - ri).ln() })
        .sum())
}

impl<D: TrackDensity> MbPosterior<D> {
    /// Prepares the intensity (PHD) `v(x) = Σ r_ℓ p_ℓ(x)` for repeated
    /// evaluation.
    pub fn phd(&self) -> MbPhd<D::Evaluator> {
        MbPhd {
            terms: self
                .tracks
                .iter()
                .map(|t| (t.r, t.density.evaluator()))
                .collect(),
        }
    }

    pub fn means(&self) -> Vec<SingleState> {
        self.tracks.iter().map(|t| t.density.mean()).collect()
    }
}

/// Precomputed first-moment evaluator for an MB posterior.
pub struct MbPhd<E> {
    terms: Vec<(f64, E)>,
}

impl<E: PointDensity> MbPhd<E> {
    pub fn eval(&self, x: &SingleState) -> f64 {
        self.terms.iter().map(|(r, e)| r * e.pdf(x)).sum()
    }
}

/// Convenience single-point PHD of an MB posterior.
pub fn phd_mb<D: TrackDensity>(mb: &MbPosterior<D>, x: &SingleState) -> f64 {
    mb.phd().eval(x)
}

/// One hypothesis of a GMB posterior: which sensor-1 tracks exist, how they
/// are matched to sensor-2 tracks, and the fused density of every matched
/// pair.
#[derive(Clone, Debug)]
pub struct GmbHypothesis<D = ParticleDensity> {
    pub subset: Vec<usize>,
    pub map: FusionMap,
    pub weight: f64,
    /// Fused density per element of `subset`, same order.
    pub fused: Vec<Arc<D>>,
    /// `ln Z` per element of `subset`, same order.
    pub ln_normalizers: Vec<f64>,
}

impl<D> GmbHypothesis<D> {
    pub fn normalizers(&self) -> Vec<f64> {
        self.ln_normalizers.iter().map(|z| z.exp()).collect()
    }

    pub fn cardinality(&self) -> usize {
        self.subset.len()
    }
}

/// Generalized multi-Bernoulli posterior over the source index space
/// `0..source_len`.
#[derive(Clone, Debug)]
pub struct GmbPosterior<D = ParticleDensity> {
    hypotheses: Vec<GmbHypothesis<D>>,
    source_len: usize,
}

impl<D> GmbPosterior<D> {
    /// Validates and wraps a hypothesis set. Weights must already sum to one.
    pub fn new(source_len: usize, hypotheses: Vec<GmbHypothesis<D>>) -> Result<Self> {
        let total: f64 = hypotheses.iter().map(|h| h.weight).sum();
        if !hypotheses.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("hypothesis weights sum to {total}, expected 1")));
        }
        let mut seen = BTreeSet::new();
        for h in &hypotheses {
            if h.weight < 0.0 || !h.weight.is_finite() {
                return Err(Error::domain("hypothesis weight must be finite and >= 0"));
            }
            if h.fused.len() != h.subset.len() || h.ln_normalizers.len() != h.subset.len() {
                return Err(Error::domain("fused densities must align with the subset"));
            }
            let domain: Vec<usize> = h.map.pairs().iter().map(|p| p.0).collect();
            let mut sorted = h.subset.clone();
            sorted.sort_unstable();
            if domain != sorted {
                return Err(Error::domain("fusion map domain must equal the hypothesis subset"));
            }
            if let Some(&bad) = h.subset.iter().find(|&&i| i >= source_len) {
                return Err(Error::UnknownTrack { index: bad, len: source_len });
            }
            if !seen.insert(h.map.pairs().to_vec()) {
                return Err(Error::domain("duplicate (subset, map) hypothesis"));
            }
        }
        Ok(Self { hypotheses, source_len })
    }

    pub fn hypotheses(&self) -> &[GmbHypothesis<D>] {
        &self.hypotheses
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn expected_cardinality(&self) -> f64 {
        self.hypotheses
            .iter()
            .map(|h| h.weight * h.subset.len() as f64)
            .sum()
    }
}

impl<D: Clone> GmbPosterior<D> {
    /// Expands an MB posterior into its GMB form: one hypothesis per track
    /// subset, weight `Q^I`, identity map and unit normalizers.
    pub fn from_mb(mb: &MbPosterior<D>) -> Self {
        let m = mb.len();
        let dens: Vec<Arc<D>> = mb.tracks().iter().map(|t| Arc::new(t.density.clone())).collect();
        let r = mb.existence();
        let hypotheses = (0u64..(1u64 << m))
            .map(|mask| {
                let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
                let weight = ln_joint_existence(&r, &subset).expect("valid subset").exp();
                GmbHypothesis {
                    map: FusionMap::new(subset.iter().map(|&i| (i, i)).collect())
                        .expect("identity is injective"),
                    weight,
                    fused: subset.iter().map(|&i| dens[i].clone()).collect(),
                    ln_normalizers: vec![0.0; subset.len()],
                    subset,
                }
            })
            .collect();
        Self { hypotheses, source_len: m }
    }
}

impl<D: TrackDensity> GmbPosterior<D> {
    /// Prepares `v(x) = Σ_h w_h Σ_{ℓ∈I_h} p_h^{(ℓ)}(x)`. Densities shared
    /// between hypotheses are evaluated once.
    pub fn phd(&self) -> GmbPhd<D::Evaluator> {
        let mut index: HashMap<*const D, usize> = HashMap::new();
        let mut evaluators = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for h in &self.hypotheses {
            for d in &h.fused {
                let key = Arc::as_ptr(d);
                let slot = *index.entry(key).or_insert_with(|| {
                    evaluators.push(d.evaluator());
                    weights.push(0.0);
                    evaluators.len() - 1
                });
                weights[slot] += h.weight;
            }
        }
        GmbPhd {
            terms: weights.into_iter().zip(evaluators).collect(),
        }
    }
}

pub struct GmbPhd<E> {
    terms: Vec<(f64, E)>,
}

impl<E: PointDensity> GmbPhd<E> {
    pub fn eval(&self, x: &SingleState) -> f64 {
        self.terms.iter().map(|(w, e)| w * e.pdf(x)).sum()
    }
}

pub fn phd_gmb<D: TrackDensity>(gmb: &GmbPosterior<D>, x: &SingleState) -> f64 {
    gmb.phd().eval(x)
}

/// Closed axis-aligned box in state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub lo: [f64; STATE_DIM],
    pub hi: [f64; STATE_DIM],
}

impl Aabb {
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..STATE_DIM).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }
}

#[derive(Clone, Debug)]
pub struct SeparationReport {
    pub confidence: f64,
    /// Approximate HPD region of every track as a union of boxes.
    pub regions: Vec<Vec<Aabb>>,
    pub separated: bool,
}

impl SeparationReport {
    pub fn regions_intersect(&self, a: usize, b: usize) -> bool {
        boxes_intersect(&self.regions[a], &self.regions[b])
    }
}

fn boxes_intersect(a: &[Aabb], b: &[Aabb]) -> bool {
    let mut sorted: Vec<&Aabb> = b.iter().collect();
    sorted.sort_by(|x, y| x.lo[0].total_cmp(&y.lo[0]));
    a.iter().any(|ba| {
        let end = sorted.partition_point(|bb| bb.lo[0] <= ba.hi[0]);
        sorted[..end].iter().any(|bb| bb.intersects(ba))
    })
}

/// Approximate highest-posterior-density region of a particle density at
/// confidence `lambda`: particles ranked by KDE density, highest first,
/// until their mass reaches `lambda`, each covered by a box whose
/// half-width per dimension is the kernel standard deviation.
pub fn hpd_region(density: &ParticleDensity, lambda: f64) -> Vec<Aabb> {
    let kde = fit_kde(density);
    let centers = kde.centers();
    let mut ranked: Vec<(f64, usize)> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| (kde.ln_pdf(c), i))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let half = kde.kernel_std();
    let mass = 1.0 / centers.len() as f64;
    let needed = ((lambda / mass) - 1e-9).ceil().max(1.0) as usize;
    ranked
        .iter()
        .take(needed.min(centers.len()))
        .map(|&(_, i)| {
            let c = centers[i].as_array();
            let mut lo = [0.0; STATE_DIM];
            let mut hi = [0.0; STATE_DIM];
            for d in 0..STATE_DIM {
                lo[d] = c[d] - half[d];
                hi[d] = c[d] + half[d];
            }
            Aabb { lo, hi }
        })
        .collect()
}

impl MbPosterior<ParticleDensity> {
    /// Checks whether the tracks are mutually `lambda`-separated, i.e. their
    /// approximate HPD regions are pairwise disjoint.
    pub fn check_separation(&self, lambda: f64) -> Result<SeparationReport> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::domain(format!("HPD confidence {lambda} outside (0, 1)")));
        }
        let regions: Vec<Vec<Aabb>> = self
            .tracks
            .iter()
            .map(|t| hpd_region(&t.density, lambda))
            .collect();
        let mut separated = true;
        'outer: for a in 0..regions.len() {
            for b in (a + 1)..regions.len() {
                if boxes_intersect(&regions[a], &regions[b]) {
                    separated = false;
                    break 'outer;
                }
            }
        }
        Ok(SeparationReport {
            confidence: lambda,
            regions,
            separated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_mb(r: &[f64], xs: &[f64]) -> MbPosterior<GaussianMixture> {
        MbPosterior::new(
            r.iter()
                .zip(xs)
                .map(|(&r, &x)| BernoulliTrack {
                    r,
                    density: GaussianMixture::gaussian(SingleState::scalar(x), [0.2, 1.0, 1.0, 1.0]),
                })
                .collect(),
        )
    }

    #[test]
    fn joint_existence_examples() {
        let mb = point_mb(&[0.8, 0.9, 0.9], &[3.0, 4.0, 7.0]);
        assert!((mb.joint_existence_weight(&[1]).unwrap() - 0.018).abs() < 1e-12);
        assert!((mb.joint_existence_weight(&[]).unwrap() - 0.002).abs() < 1e-12);
        assert_eq!(
            mb.joint_existence_weight(&[3]),
            Err(Error::UnknownTrack { index: 3, len: 3 })
        );
        assert!(mb.joint_existence_weight(&[0, 0]).is_err());
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(MbPosterior::<GaussianMixture>::empty().cardinality_distribution(), vec![1.0]);
        let one = point_mb(&[0.5], &[0.0]);
        assert_eq!(one.cardinality_distribution(), vec![0.5, 0.5]);
        let three = point_mb(&[0.8, 0.9, 0.9], &[3.0, 4.0, 7.0]);
        assert!((three.cardinality_distribution()[0] - 0.002).abs() < 1e-15);
    }

    #[test]
    fn empty_mb_has_zero_phd() {
        let mb = MbPosterior::<GaussianMixture>::empty();
        assert_eq!(phd_mb(&mb, &SingleState::scalar(1.0)), 0.0);
        assert_eq!(mb.expected_cardinality(), 0.0);
    }

    #[test]
    fn unit_existence_phd_is_the_density() {
        let mb = point_mb(&[1.0], &[2.0]);
        let x = SingleState::scalar(2.3);
        let direct = mb.tracks()[0].density.pdf(&x);
        assert_eq!(phd_mb(&mb, &x), direct);
    }

    #[test]
    fn phd_grid_integral_matches_expected_cardinality() {
        // 1-D tracks at 0 and 10, variance 0.2 in px and 1 elsewhere. Only px
        // is integrated, so the other axes are evaluated at their means and
        // divided out.
        let mb = point_mb(&[0.5, 0.5], &[0.0, 10.0]);
        let phd = mb.phd();
        let other_axes = (2.0 * std::f64::consts::PI).powf(-1.5);
        let h = 0.01;
        let integral: f64 = (0..2000)
            .map(|i| -5.0 + h * (i as f64 + 0.5))
            .map(|x| phd.eval(&SingleState::scalar(x)) / other_axes * h)
            .sum();
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
    }

    #[test]
    fn gmb_from_mb_phd_matches_mb_phd() {
        let mb = point_mb(&[0.3, 0.7, 0.95], &[0.0, 1.0, 5.0]);
        let gmb = GmbPosterior::from_mb(&mb);
        assert_eq!(gmb.hypotheses().len(), 8);
        let (a, b) = (mb.phd(), gmb.phd());
        for i in 0..50 {
            let x = SingleState::scalar(-2.0 + 0.2 * i as f64);
            assert!((a.eval(&x) - b.eval(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn gmb_rejects_unnormalized_weights() {
        let mb = point_mb(&[0.5], &[0.0]);
        let mut gmb = GmbPosterior::from_mb(&mb);
        gmb.hypotheses[0].weight = 0.9;
        let err = GmbPosterior::new(1, gmb.hypotheses.clone());
        assert!(err.is_err());
    }

    fn cloud(mean: f64, std: f64, n: usize, seed: u64) -> ParticleDensity {
        GaussianMixture::gaussian(SingleState::scalar(mean), [std * std, 1e-30, 1e-30, 1e-30])
            .sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn far_apart_clouds_are_separated() {
        let a = cloud(0.0, 1.0, 300, 1);
        let b = cloud(100.0, 1.0, 300, 2);
        let mb = MbPosterior::new(vec![
            BernoulliTrack::new(0.9, a).unwrap(),
            BernoulliTrack::new(0.9, b).unwrap(),
        ]);
        assert!(mb.check_separation(0.9).unwrap().separated);
    }

    #[test]
    fn identical_clouds_are_not_separated() {
        let a = cloud(0.0, 1.0, 300, 1);
        let mb = MbPosterior::new(vec![
            BernoulliTrack::new(0.9, a.clone()).unwrap(),
            BernoulliTrack::new(0.9, a).unwrap(),
        ]);
        assert!(!mb.check_separation(0.9).unwrap().separated);
    }

    #[test]
    fn separation_rejects_bad_confidence() {
        let mb = MbPosterior::<ParticleDensity>::empty();
        assert!(mb.check_separation(0.0).is_err());
        assert!(mb.check_separation(1.0).is_err());
        assert!(mb.check_separation(0.5).unwrap().separated);
    }

    #[test]
    fn gaussian_hpd_separation_follows_the_analytic_intervals() {
        // Variance 0.2: the 0.9-HPD is mean ± 1.645·0.447 = ± 0.736, so means
        // 1 apart overlap and means 4 apart do not.
        let s = 0.2f64.sqrt();
        let mk = |m: f64, seed| BernoulliTrack::new(0.9, cloud(m, s, 10_000, seed)).unwrap();
        let close = MbPosterior::new(vec![mk(3.0, 11), mk(4.0, 12)]);
        assert!(!close.check_separation(0.9).unwrap().separated);
        let far = MbPosterior::new(vec![mk(3.0, 11), mk(7.0, 13)]);
        assert!(far.check_separation(0.9).unwrap().separated);
        // With standard deviation 0.2 the intervals are ± 0.33 and disjoint.
        let narrow = |m: f64, seed| BernoulliTrack::new(0.9, cloud(m, 0.2, 10_000, seed)).unwrap();
        let mb = MbPosterior::new(vec![narrow(3.0, 21), narrow(4.0, 22)]);
        assert!(mb.check_separation(0.9).unwrap().separated);
    }

    #[test]
    fn hpd_region_covers_lambda_mass() {
        let d = cloud(0.0, 1.0, 500, 5);
        let region = hpd_region(&d, 0.9);
        assert_eq!(region.len(), 450);
        assert_eq!(hpd_region(&d, 0.001).len(), 1);
    }

    #[test]
    fn resample_deterministic_is_stable() {
        let d = cloud(0.0, 1.0, 50, 9);
        assert_eq!(d.resample_deterministic(50), d);
        let p = ParticleDensity::new(vec![
            WeightedParticle { state: SingleState::scalar(0.0), weight: 3.0 },
            WeightedParticle { state: SingleState::scalar(1.0), weight: 1.0 },
        ])
        .unwrap();
        let r = p.resample_deterministic(4);
        assert_eq!(r.states().filter(|s| s.px == 0.0).count(), 3);
    }
}
