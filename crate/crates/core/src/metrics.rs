//! Evaluation functionals: OSPA, powered-sum approximation error and the
//! proportion of efficient estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::enumerate_fusion_maps;
use crate::rfs::{ln_joint_existence, MbPosterior, PointDensity, SingleState, TrackDensity};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for OspaParams {
    fn default() -> Self {
        Self { cutoff: 5.0, order: 1.0 }
    }
}

impl OspaParams {
    pub fn new(cutoff: f64, order: f64) -> Result<Self> {
        let p = Self { cutoff, order };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::config("ospa.cutoff", "must be > 0"));
        }
        if !(self.order >= 1.0 && self.order.is_finite()) {
            return Err(Error::config("ospa.order", "must be >= 1"));
        }
        Ok(())
    }
}

/// Minimum-cost perfect assignment of rows to columns for a rectangular
/// cost matrix with `rows <= cols`. Returns the column chosen for each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    // Potentials-based Hungarian algorithm with 1-based sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

/// OSPA distance between two finite sets using position-only base
/// distance.
pub fn ospa(x: &[SingleState], y: &[SingleState], params: &OspaParams) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let n = large.len();
    if n == 0 {
        return 0.0;
    }
    let c = params.cutoff;
    let p = params.order;
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| a.position_distance(b).min(c).powf(p)).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let matched: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let penalty = c.powf(p) * (n - small.len()) as f64;
    ((matched + penalty) / n as f64).powf(1.0 / p).min(c)
}

/// Terms of the MB set density at a finite set and the quality of the
/// powered-sum surrogate for `π(X)^ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationReport {
    /// `ln(Q^{I_σ} Π_i p_{σ(i)}(x_i))` for every injective assignment σ.
    pub ln_terms: Vec<f64>,
    /// `ln π(X)`.
    pub ln_density: f64,
    /// Largest term divided by the sum of all terms.
    pub dominant_ratio: f64,
    /// Index of the largest term.
    pub dominant: usize,
    /// `|π(X)^ω − Σ_σ term_σ^ω|`.
    pub error: f64,
    /// `error / π(X)^ω`.
    pub relative_error: f64,
}

/// Compares `π(X)^ω` to the sum of powered terms from the log of every
/// term. Both sides are factored by the largest term, so the difference
/// stays accurate when one term dominates by many orders of magnitude.
pub fn powered_sum_error(ln_terms: &[f64], omega: f64) -> ApproximationReport {
    let (dominant, ln_max) = ln_terms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, t)| if t > acc.1 { (i, t) } else { acc });
    if ln_max == f64::NEG_INFINITY {
        return ApproximationReport {
            ln_terms: ln_terms.to_vec(),
            ln_density: f64::NEG_INFINITY,
            dominant_ratio: if ln_terms.len() == 1 { 1.0 } else { 0.0 },
            dominant,
            error: 0.0,
            relative_error: 0.0,
        };
    }
    let mut s = 0.0;
    let mut powered_rest = 0.0;
    for (i, &t) in ln_terms.iter().enumerate() {
        if i != dominant && t > f64::NEG_INFINITY {
            s += (t - ln_max).exp();
            powered_rest += (omega * (t - ln_max)).exp();
        }
    }
    let diff = ((omega * s.ln_1p()).exp_m1() - powered_rest).abs();
    let relative_error = diff / (omega * s.ln_1p()).exp();
    ApproximationReport {
        ln_terms: ln_terms.to_vec(),
        ln_density: ln_max + s.ln_1p(),
        dominant_ratio: 1.0 / (1.0 + s),
        dominant,
        error: (omega * ln_max).exp() * diff,
        relative_error,
    }
}

/// Logs of the MB set-density terms at `x`: one per injective assignment of
/// the points of `x` to tracks, in fusion-map enumeration order.
pub fn mb_density_terms<D: TrackDensity>(mb: &MbPosterior<D>, x: &[SingleState]) -> Vec<f64> {
    let evaluators: Vec<D::Evaluator> = mb.tracks().iter().map(|t| t.density.evaluator()).collect();
    let r = mb.existence();
    let points: Vec<usize> = (0..x.len()).collect();
    enumerate_fusion_maps(&points, mb.len())
        .into_iter()
        .map(|map| {
            let image: Vec<usize> = map.pairs().iter().map(|p| p.1).collect();
            let mut ln_t = ln_joint_existence(&r, &image).expect("image is a valid subset");
            for &(i, l) in map.pairs() {
                ln_t += evaluators[l].ln_pdf(&x[i]);
            }
            ln_t
        })
        .collect()
}

/// Powered-sum approximation error of the MB density at the estimated set
/// `x` for exponent `omega`.
pub fn approximation_error<D: TrackDensity>(
    mb: &MbPosterior<D>,
    x: &[SingleState],
    omega: f64,
) -> Result<ApproximationReport> {
    if x.len() > mb.len() {
        return Err(Error::domain(format!(
            "set of {} points exceeds the {} tracks of the posterior",
            x.len(),
            mb.len()
        )));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::domain(format!("exponent {omega} outside [0, 1]")));
    }
    Ok(powered_sum_error(&mb_density_terms(mb, x), omega))
}

/// Fraction of OSPA values strictly below `threshold`.
pub fn efficiency_proportion(series: &[f64], threshold: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::domain("efficiency proportion of an empty series"));
    }
    if !(threshold > 0.0) {
        return Err(Error::domain("efficiency threshold must be > 0"));
    }
    let hits = series.iter().filter(|&&v| v < threshold).count();
    Ok(hits as f64 / series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfs::{BernoulliTrack, GaussianMixture};

    fn pts(xs: &[f64]) -> Vec<SingleState> {
        xs.iter().map(|&x| SingleState::scalar(x)).collect()
    }

    #[test]
    fn ospa_examples() {
        let p = OspaParams::default();
        assert_eq!(ospa(&pts(&[1.0, 4.0]), &pts(&[1.0, 4.0]), &p), 0.0);
        assert_eq!(ospa(&pts(&[3.0]), &[], &p), 5.0);
        assert_eq!(ospa(&[], &[], &p), 0.0);
        assert!((ospa(&pts(&[0.0]), &pts(&[1.0]), &p) - 1.0).abs() < 1e-15);
        // one matched at distance 1 plus one missed: (1 + 5) / 2.
        assert!((ospa(&pts(&[0.0]), &pts(&[1.0, 40.0]), &p) - 3.0).abs() < 1e-12);
        // far apart pair is cut off.
        assert_eq!(ospa(&pts(&[0.0]), &pts(&[100.0]), &p), 5.0);
    }

    #[test]
    fn assignment_finds_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
        let rect = vec![vec![10.0, 1.0, 7.0]];
        assert_eq!(min_cost_assignment(&rect), vec![1]);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency_proportion(&[0.1, 0.2], 1.0).unwrap(), 1.0);
        assert_eq!(efficiency_proportion(&[3.0, 4.0], 1.0).unwrap(), 0.0);
        assert_eq!(efficiency_proportion(&[0.1, 0.2, 0.3, 4.0], 1.0).unwrap(), 0.75);
        assert!(efficiency_proportion(&[], 1.0).is_err());
    }

    fn gaussian_mb(parts: &[(f64, f64, f64)]) -> MbPosterior<GaussianMixture> {
        MbPosterior::new(
            parts
                .iter()
                .map(|&(r, m, v)| {
                    BernoulliTrack::new(r, GaussianMixture::gaussian(SingleState::scalar(m), [v, 1.0, 1.0, 1.0])).unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn single_track_single_point_is_exact() {
        let mb = gaussian_mb(&[(0.7, 1.0, 0.5)]);
        let rep = approximation_error(&mb, &pts(&[1.2]), 0.5).unwrap();
        assert_eq!(rep.error, 0.0);
        assert_eq!(rep.dominant_ratio, 1.0);
    }

    #[test]
    fn error_matches_direct_evaluation() {
        let mb = gaussian_mb(&[(0.8, 0.0, 1.0), (0.6, 0.5, 1.0)]);
        let x = pts(&[0.2]);
        let rep = approximation_error(&mb, &x, 0.5).unwrap();
        let terms: Vec<f64> = rep.ln_terms.iter().map(|t| t.exp()).collect();
        let direct = (terms.iter().sum::<f64>().sqrt() - terms.iter().map(|t| t.sqrt()).sum::<f64>()).abs();
        assert!((rep.error - direct).abs() < 1e-12 * direct.max(1.0));
        assert!((rep.ln_density.exp() - terms.iter().sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn error_too_many_points() {
        let mb = gaussian_mb(&[(0.7, 1.0, 0.5)]);
        assert!(approximation_error(&mb, &pts(&[1.0, 2.0]), 0.5).is_err());
    }

    #[test]
    fn certain_existence_gives_single_term() {
        // Only the sequence using the first track has nonzero Q.
        let mb = gaussian_mb(&[(1.0, 0.0, 1.0), (0.0, 0.5, 1.0)]);
        let rep = approximation_error(&mb, &pts(&[0.3]), 0.5).unwrap();
        assert_eq!(rep.error, 0.0);
    }
}
