//! Gaussian kernel density estimates of particle clouds.
//!
//! The cloud is whitened with the inverse square root of its empirical
//! covariance, a rule-of-thumb bandwidth is chosen independently per
//! whitened axis, and the resulting diagonal kernel is mapped back to state
//! space. This is what lets one node evaluate another node's particle
//! posterior at arbitrary points.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};

use crate::error::{Error, Result};
use crate::rfs::{ParticleDensity, PointDensity, SingleState, STATE_DIM};

/// Smallest per-axis bandwidth, in state units.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;
/// Relative ridge added to the empirical covariance before whitening.
pub const RELATIVE_RIDGE: f64 = 1e-8;
/// Ridge used when the empirical covariance is identically zero.
pub const ABSOLUTE_RIDGE: f64 = BANDWIDTH_FLOOR * BANDWIDTH_FLOOR;

/// Rule-of-thumb bandwidth `σ (4 / 3N)^{1/5}`, floored at
/// [`BANDWIDTH_FLOOR`].
pub fn rut_bandwidth(sigma: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("bandwidth needs at least one sample"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("standard deviation {sigma} must be >= 0")));
    }
    let h = sigma * (4.0 / (3.0 * n as f64)).powf(0.2);
    Ok(h.max(BANDWIDTH_FLOOR))
}

#[derive(Clone, Debug)]
pub struct KdeDensity {
    centers: Vec<SingleState>,
    kernel_cov: Matrix4<f64>,
    whitener: Matrix4<f64>,
    transform: Matrix4<f64>,
    bandwidths: [f64; STATE_DIM],
    empirical_cov: Matrix4<f64>,
    // Σ^{-1/2} (so the kernel exponent is |A (x - c)|² / 2) and the centers
    // mapped through it.
    precision_root: Matrix4<f64>,
    scaled_centers: Vec<[f64; STATE_DIM]>,
    ln_norm: f64,
}

fn sym_pow(m: &Matrix4<f64>, power: f64) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(*m);
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Fits the kernel density estimate of a particle cloud. Unequally weighted
/// clouds are first resampled (deterministically) to equal weights so the
/// estimate is the plain average of kernels.
pub fn fit_kde(particles: &ParticleDensity) -> KdeDensity {
    let equal;
    let cloud = if particles.is_equally_weighted() {
        particles
    } else {
        equal = particles.resample_deterministic(particles.len());
        &equal
    };
    let centers: Vec<SingleState> = cloud.states().copied().collect();
    let n = centers.len();
    let nf = n as f64;

    let mean: Vector4<f64> = centers.iter().map(|c| c.to_vector()).sum::<Vector4<f64>>() / nf;
    let mut empirical_cov = Matrix4::zeros();
    for c in &centers {
        let d = c.to_vector() - mean;
        empirical_cov += d * d.transpose();
    }
    empirical_cov /= nf;
    empirical_cov = (empirical_cov + empirical_cov.transpose()) * 0.5;

    let trace = empirical_cov.trace();
    let ridge = if trace > 0.0 {
        RELATIVE_RIDGE * trace / STATE_DIM as f64
    } else {
        ABSOLUTE_RIDGE
    };
    let regularized = empirical_cov + Matrix4::identity() * ridge;
    let whitener = sym_pow(&regularized, -0.5);
    let transform = sym_pow(&regularized, 0.5);

    // Per-axis spread of the whitened cloud.
    let whitened: Vec<Vector4<f64>> = centers.iter().map(|c| whitener * c.to_vector()).collect();
    let wmean: Vector4<f64> = whitened.iter().sum::<Vector4<f64>>() / nf;
    let mut bandwidths = [0.0; STATE_DIM];
    for (d, bw) in bandwidths.iter_mut().enumerate() {
        let var = whitened.iter().map(|y| (y[d] - wmean[d]).powi(2)).sum::<f64>() / nf;
        *bw = rut_bandwidth(var.max(0.0).sqrt(), n).expect("n >= 1");
    }
    let lambda = Matrix4::from_diagonal(&Vector4::from_iterator(bandwidths.iter().map(|h| h * h)));
    let raw_cov = transform * lambda * transform.transpose();
    let raw_cov = (raw_cov + raw_cov.transpose()) * 0.5;

    // Kernel eigenvalues never go below the bandwidth floor in state units.
    let eig = SymmetricEigen::new(raw_cov);
    let floor = BANDWIDTH_FLOOR * BANDWIDTH_FLOOR;
    let floored = eig.eigenvalues.map(|l| l.max(floor));
    let kernel_cov = if floored == eig.eigenvalues {
        raw_cov
    } else {
        eig.eigenvectors * Matrix4::from_diagonal(&floored) * eig.eigenvectors.transpose()
    };
    let precision_root =
        Matrix4::from_diagonal(&floored.map(|l| l.powf(-0.5))) * eig.eigenvectors.transpose();
    let ln_det: f64 = floored.iter().map(|l| l.ln()).sum();
    let ln_norm = -nf.ln()
        - 0.5 * STATE_DIM as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * ln_det;
    let scaled_centers = centers
        .iter()
        .map(|c| {
            let u = precision_root * c.to_vector();
            [u[0], u[1], u[2], u[3]]
        })
        .collect();

    KdeDensity {
        centers,
        kernel_cov,
        whitener,
        transform,
        bandwidths,
        empirical_cov,
        precision_root,
        scaled_centers,
        ln_norm,
    }
}

impl KdeDensity {
    pub fn centers(&self) -> &[SingleState] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn kernel_cov(&self) -> &Matrix4<f64> {
        &self.kernel_cov
    }

    pub fn whitener(&self) -> &Matrix4<f64> {
        &self.whitener
    }

    /// `T = W⁻¹`.
    pub fn transform(&self) -> &Matrix4<f64> {
        &self.transform
    }

    /// Per-axis bandwidths in whitened coordinates.
    pub fn bandwidths(&self) -> [f64; STATE_DIM] {
        self.bandwidths
    }

    pub fn empirical_cov(&self) -> &Matrix4<f64> {
        &self.empirical_cov
    }

    /// `T Λ Tᵀ` with `Λ = diag(h²)`; equals the kernel covariance unless the
    /// state-space floor was active.
    pub fn reconstructed_kernel_cov(&self) -> Matrix4<f64> {
        let lambda = Matrix4::from_diagonal(&Vector4::from_iterator(
            self.bandwidths.iter().map(|h| h * h),
        ));
        self.transform * lambda * self.transform.transpose()
    }

    /// Per-dimension kernel standard deviation in state units.
    pub fn kernel_std(&self) -> [f64; STATE_DIM] {
        let mut s = [0.0; STATE_DIM];
        for (d, v) in s.iter_mut().enumerate() {
            *v = self.kernel_cov[(d, d)].sqrt();
        }
        s
    }

    /// Largest kernel standard deviation over the position axes.
    pub fn position_bandwidth(&self) -> f64 {
        let s = self.kernel_std();
        s[0].max(s[1])
    }
}

impl PointDensity for KdeDensity {
    fn ln_pdf(&self, x: &SingleState) -> f64 {
        let u = self.precision_root * x.to_vector();
        // Streaming log-sum-exp over the kernel exponents.
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for c in &self.scaled_centers {
            let d0 = u[0] - c[0];
            let d1 = u[1] - c[1];
            let d2 = u[2] - c[2];
            let d3 = u[3] - c[3];
            let q = -0.5 * (d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3);
            if q > max {
                acc = acc * (max - q).exp() + 1.0;
                max = q;
            } else {
                acc += (q - max).exp();
            }
        }
        max + acc.ln() + self.ln_norm
    }
}
