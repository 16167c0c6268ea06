//! Generalized covariance intersection of multi-Bernoulli posteriors.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{fit_kde, KdeDensity};
use crate::math;
use crate::rfs::{
    ln_joint_existence, BernoulliTrack, GmbHypothesis, GmbPosterior, MbPosterior, ParticleDensity, PointDensity,
    TrackDensity, WeightedParticle,
};
use crate::simnet::NetworkTopology;

/// Injective assignment of sensor-1 track indices to sensor-2 track
/// indices. Pairs are kept sorted by source index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FusionMap {
    pairs: Vec<(usize, usize)>,
}

impl FusionMap {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::domain(format!("source index {} mapped twice", w[0].0)));
            }
        }
        let mut targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("fusion map is not injective"));
        }
        Ok(Self { pairs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn domain(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    /// Image `θ(I)`, sorted ascending.
    pub fn image(&self) -> Vec<usize> {
        let mut img: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        img.sort_unstable();
        img
    }

    pub fn apply(&self, source: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&source, |p| p.0)
            .ok()
            .map(|i| self.pairs[i].1)
    }
}

/// All injective maps from `subset` into `0..target_len`, in lexicographic
/// order of the assigned targets. Empty when `|subset| > target_len`.
pub fn enumerate_fusion_maps(subset: &[usize], target_len: usize) -> Vec<FusionMap> {
    let mut sources = subset.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let mut out = Vec::new();
    if sources.len() > target_len {
        return out;
    }
    let mut used = vec![false; target_len];
    let mut current = Vec::with_capacity(sources.len());
    fn recurse(
        sources: &[usize],
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<FusionMap>,
    ) {
        let depth = current.len();
        if depth == sources.len() {
            out.push(FusionMap { pairs: current.clone() });
            return;
        }
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                current.push((sources[depth], t));
                recurse(sources, used, current, out);
                current.pop();
                used[t] = false;
            }
        }
    }
    recurse(&sources, &mut used, &mut current, &mut out);
    out
}

/// Number of injective maps from a set of size `k` into one of size `n`.
pub fn falling_factorial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).map(|v| v as u64).product()
}

/// Relative fusion weights `(ω₁, ω₂)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w1: f64,
    pub w2: f64,
}

impl FusionWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 >= 0.0 && w2 >= 0.0) || (w1 + w2 - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("fusion weights ({w1}, {w2}) must be >= 0 and sum to 1")));
        }
        Ok(Self { w1, w2 })
    }

    pub fn equal() -> Self {
        Self { w1: 0.5, w2: 0.5 }
    }

    pub fn swapped(self) -> Self {
        Self { w1: self.w2, w2: self.w1 }
    }
}

/// `ω·ln x` with the convention `0·ln 0 = 0`.
fn powered(w: f64, ln_x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * ln_x
    }
}

/// Fused single-target density of one matched track pair together with its
/// normalizing constant.
#[derive(Clone, Debug)]
pub struct PairFusionResult {
    /// Weighted particles over the union of both input supports.
    pub density: ParticleDensity,
    pub ln_normalizer: f64,
}

impl PairFusionResult {
    pub fn normalizer(&self) -> f64 {
        self.ln_normalizer.exp()
    }

    /// False when `Z` underflows to zero.
    pub fn is_feasible(&self) -> bool {
        self.normalizer() > 0.0
    }
}

/// Importance-sampling estimate of `p₁^ω₁ p₂^ω₂` and its integral `Z`,
/// using the union of both particle sets as draws from the proposal
/// `(L₁ p̂₁ + L₂ p̂₂) / (L₁ + L₂)`.
pub fn fuse_track_pair(p1: &ParticleDensity, p2: &ParticleDensity, w: FusionWeights) -> PairFusionResult {
    fuse_kde_pair(&fit_kde(p1), &fit_kde(p2), w)
}

fn fuse_kde_pair(k1: &KdeDensity, k2: &KdeDensity, w: FusionWeights) -> PairFusionResult {
    let ln_l1 = (k1.len() as f64).ln();
    let ln_l2 = (k2.len() as f64).ln();
    let states: Vec<_> = k1.centers().iter().chain(k2.centers()).copied().collect();
    let ln_zeta: Vec<f64> = states
        .iter()
        .map(|x| {
            let a = k1.ln_pdf(x);
            let b = k2.ln_pdf(x);
            let den = math::log_add_exp(ln_l1 + a, ln_l2 + b);
            powered(w.w1, a) + powered(w.w2, b) - den
        })
        .collect();
    let (weights, ln_normalizer) = math::normalize_log_weights(&ln_zeta);
    let particles = if ln_normalizer.is_finite() {
        states
            .into_iter()
            .zip(weights)
            .map(|(state, weight)| WeightedParticle { state, weight })
            .collect()
    } else {
        // Keep a valid equal-weight density; the pair is infeasible anyway.
        let n = states.len() as f64;
        states
            .into_iter()
            .map(|state| WeightedParticle { state, weight: 1.0 / n })
            .collect()
    };
    PairFusionResult {
        density: ParticleDensity::from_parts_unchecked(particles),
        ln_normalizer,
    }
}

/// Controls hypothesis enumeration in [`gci_mb_fuse`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Enumerate every `(I₁, θ)` when both inputs have at most this many
    /// tracks; otherwise gate track pairs.
    pub exhaustive_limit: usize,
    /// Gate radius, in position kernel bandwidths, between track means.
    pub gate_bandwidths: f64,
    /// Hypotheses with normalized weight below this are dropped.
    pub prune_weight: f64,
    /// Particle count of every track in the moment-matched output.
    pub particles_per_track: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            exhaustive_limit: 6,
            gate_bandwidths: 6.0,
            prune_weight: 1e-6,
            particles_per_track: 200,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles_per_track == 0 {
            return Err(Error::config("fusion.particles_per_track", "must be >= 1"));
        }
        if !(self.gate_bandwidths > 0.0) {
            return Err(Error::config("fusion.gate_bandwidths", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.prune_weight) {
            return Err(Error::config("fusion.prune_weight", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub gmb: GmbPosterior,
    pub mb: MbPosterior,
    /// True when the inputs were swapped so that sensor 1 has fewer tracks.
    pub swapped: bool,
}

struct PairEntry {
    density: Arc<ParticleDensity>,
    ln_z: f64,
}

/// Fuses two MB posteriors into a GMB posterior over the smaller track set
/// and returns it together with its first-moment MB approximation.
pub fn gci_mb_fuse(mb1: &MbPosterior, mb2: &MbPosterior, w: FusionWeights, cfg: &FusionConfig) -> FusionOutput {
    let swapped = mb1.len() > mb2.len();
    let (a, b, w) = if swapped { (mb2, mb1, w.swapped()) } else { (mb1, mb2, w) };
    let (m1, m2) = (a.len(), b.len());
    let r1 = a.existence();
    let r2 = b.existence();

    let kde1: Vec<KdeDensity> = a.tracks().iter().map(|t| fit_kde(&t.density)).collect();
    let kde2: Vec<KdeDensity> = b.tracks().iter().map(|t| fit_kde(&t.density)).collect();
    let exhaustive = m1 <= cfg.exhaustive_limit && m2 <= cfg.exhaustive_limit;

    let mut pairs: Vec<Vec<Option<PairEntry>>> = Vec::with_capacity(m1);
    for (i, k1) in kde1.iter().enumerate() {
        let mean1 = a.tracks()[i].density.mean();
        let row = kde2
            .iter()
            .enumerate()
            .map(|(j, k2)| {
                if !exhaustive {
                    let gate = cfg.gate_bandwidths * k1.position_bandwidth().max(k2.position_bandwidth());
                    if mean1.position_distance(&b.tracks()[j].density.mean()) > gate {
                        return None;
                    }
                }
                let fused = fuse_kde_pair(k1, k2, w);
                Some(PairEntry {
                    density: Arc::new(fused.density),
                    ln_z: fused.ln_normalizer,
                })
            })
            .collect();
        pairs.push(row);
    }

    let maps: Vec<FusionMap> = if exhaustive {
        (0u64..(1u64 << m1))
            .flat_map(|mask| {
                let subset: Vec<usize> = (0..m1).filter(|i| mask & (1 << i) != 0).collect();
                enumerate_fusion_maps(&subset, m2)
            })
            .collect()
    } else {
        gated_maps(&pairs, m2)
    };

    let mut ln_weights = Vec::with_capacity(maps.len());
    for map in &maps {
        let subset = map.domain();
        let mut lw = powered(w.w1, ln_joint_existence(&r1, &subset).expect("valid subset"))
            + powered(w.w2, ln_joint_existence(&r2, &map.image()).expect("valid image"));
        for &(i, j) in map.pairs() {
            lw += match &pairs[i][j] {
                Some(p) if p.ln_z.exp() > 0.0 => p.ln_z,
                _ => f64::NEG_INFINITY,
            };
        }
        ln_weights.push(lw);
    }

    let (weights, ln_c) = math::normalize_log_weights(&ln_weights);
    if !ln_c.is_finite() {
        let mb = mb1.clone();
        return FusionOutput {
            gmb: GmbPosterior::from_mb(&mb),
            mb,
            swapped: false,
        };
    }

    let kept_total: f64 = weights.iter().filter(|&&x| x >= cfg.prune_weight && x > 0.0).sum();
    let hypotheses: Vec<GmbHypothesis> = maps
        .into_iter()
        .zip(weights)
        .filter(|&(_, wt)| wt >= cfg.prune_weight && wt > 0.0)
        .map(|(map, wt)| {
            let entries: Vec<&PairEntry> = map
                .pairs()
                .iter()
                .map(|&(i, j)| pairs[i][j].as_ref().expect("weighted pair was computed"))
                .collect();
            GmbHypothesis {
                subset: map.domain(),
                weight: wt / kept_total,
                fused: entries.iter().map(|e| e.density.clone()).collect(),
                ln_normalizers: entries.iter().map(|e| e.ln_z).collect(),
                map,
            }
        })
        .collect();
    let gmb = GmbPosterior::new(m1, hypotheses).expect("hypotheses are normalized and distinct");

    let matched = moment_match(&gmb);
    let mb = MbPosterior::new(
        matched
            .into_tracks()
            .into_iter()
            .map(|t| BernoulliTrack {
                r: t.r,
                density: t.density.resample_deterministic(cfg.particles_per_track),
            })
            .collect(),
    );
    FusionOutput { gmb, mb, swapped }
}

/// Depth-first enumeration restricted to admissible, feasible pairs.
fn gated_maps(pairs: &[Vec<Option<PairEntry>>], m2: usize) -> Vec<FusionMap> {
    fn recurse(
        i: usize,
        pairs: &[Vec<Option<PairEntry>>],
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<FusionMap>,
    ) {
        if i == pairs.len() {
            out.push(FusionMap { pairs: current.clone() });
            return;
        }
        recurse(i + 1, pairs, used, current, out);
        for j in 0..used.len() {
            let ok = matches!(&pairs[i][j], Some(p) if p.ln_z.exp() > 0.0);
            if ok && !used[j] {
                used[j] = true;
                current.push((i, j));
                recurse(i + 1, pairs, used, current, out);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    recurse(0, pairs, &mut vec![false; m2], &mut Vec::new(), &mut out);
    out
}

/// MB posterior with the same first moment as `gmb`: one track per source
/// index that appears in some hypothesis, with
/// `r = Σ_{h ∋ ℓ} w_h` and density `Σ_{h ∋ ℓ} w_h p_h^{(ℓ)} / r`.
pub fn moment_match<D: TrackDensity>(gmb: &GmbPosterior<D>) -> MbPosterior<D> {
    let mut tracks = Vec::new();
    for l in 0..gmb.source_len() {
        let mut slots: HashMap<*const D, usize> = HashMap::new();
        let mut parts: Vec<(f64, &Arc<D>)> = Vec::new();
        for h in gmb.hypotheses() {
            if let Some(pos) = h.subset.iter().position(|&s| s == l) {
                let d = &h.fused[pos];
                match slots.get(&Arc::as_ptr(d)) {
                    Some(&k) => parts[k].0 += h.weight,
                    None => {
                        slots.insert(Arc::as_ptr(d), parts.len());
                        parts.push((h.weight, d));
                    }
                }
            }
        }
        let r: f64 = parts.iter().map(|p| p.0).sum();
        if !(r > 0.0) {
            continue;
        }
        let normalized: Vec<(f64, &D)> = parts.iter().map(|(w, d)| (w / r, d.as_ref())).collect();
        tracks.push(BernoulliTrack {
            r: r.min(1.0),
            density: D::mixture(&normalized),
        });
    }
    MbPosterior::new(tracks)
}

/// Pairwise Metropolis weight between adjacent nodes:
/// `ω₂ = 1 / (1 + max(deg a, deg b))`, `ω₁ = 1 − ω₂`.
pub fn metropolis_weights(topology: &NetworkTopology, node: usize, neighbor: usize) -> Result<FusionWeights> {
    if !topology.are_adjacent(node, neighbor) {
        return Err(Error::NotAdjacent { a: node, b: neighbor });
    }
    let w2 = 1.0 / (1.0 + topology.degree(node).max(topology.degree(neighbor)) as f64);
    Ok(FusionWeights { w1: 1.0 - w2, w2 })
}

/// Pairwise weights for folding the neighbors of `node` (ascending id) into
/// its own posterior so that the final exponents equal the node's row of
/// the Metropolis matrix.
pub fn metropolis_fold_weights(topology: &NetworkTopology, node: usize) -> Result<Vec<FusionWeights>> {
    let neighbors = topology.neighbors(node)?;
    let row: Vec<f64> = neighbors
        .iter()
        .map(|&j| metropolis_weights(topology, node, j).map(|w| w.w2))
        .collect::<Result<_>>()?;
    let mut acc = 1.0 - row.iter().sum::<f64>();
    Ok(row
        .into_iter()
        .map(|wj| {
            let total = acc + wj;
            acc = total;
            FusionWeights {
                w1: (total - wj) / total,
                w2: wj / total,
            }
        })
        .collect())
}

/// Left fold of [`gci_mb_fuse`] over `posteriors`, with `weights[k]` used
/// for the fusion of the running result with `posteriors[k + 1]`.
pub fn sequential_fuse(posteriors: &[MbPosterior], weights: &[FusionWeights], cfg: &FusionConfig) -> Result<MbPosterior> {
    let (first, rest) = posteriors
        .split_first()
        .ok_or_else(|| Error::domain("sequential fusion needs at least one posterior"))?;
    if weights.len() != rest.len() {
        return Err(Error::domain(format!(
            "{} posteriors need {} pairwise weights, got {}",
            posteriors.len(),
            rest.len(),
            weights.len()
        )));
    }
    let mut acc = first.clone();
    for (next, &w) in rest.iter().zip(weights) {
        acc = gci_mb_fuse(&acc, next, w, cfg).mb;
    }
    Ok(acc)
}
