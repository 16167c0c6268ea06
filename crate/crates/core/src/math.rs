//! Numerically stable helpers shared by the filter and the fusion code.

use rand::Rng;

/// `ln(Σ exp(x_i))` with max-shift. Returns `-inf` for an empty slice or
/// when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Normalizes log-weights in place into linear weights summing to one and
/// returns the log of the original total. If every weight is `-inf` the
/// slice is left as zeros and `-inf` is returned.
pub fn normalize_log_weights(log_w: &[f64]) -> (Vec<f64>, f64) {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return (vec![0.0; log_w.len()], total);
    }
    let w = log_w.iter().map(|&lw| (lw - total).exp()).collect();
    (w, total)
}

/// Systematic resampling of `count` indices from normalized `weights`
/// using the single offset `u0 ∈ [0, 1)`.
pub fn systematic_indices_with_offset(weights: &[f64], count: usize, u0: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    if weights.is_empty() || count == 0 {
        return out;
    }
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut cumulative = weights[0];
    let mut i = 0;
    for k in 0..count {
        let target = (u0 + k as f64) * step;
        while cumulative < target && i + 1 < weights.len() {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

/// Systematic (low-variance) resampling with a random offset.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let u0: f64 = rng.gen();
    systematic_indices_with_offset(weights, count, u0)
}

/// Log of the 1-D normal density with the given variance.
pub fn ln_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - 0.5 * d * d / variance
}
