//! Multivariate Gaussian class-conditional machinery shared by the
//! generative and MRF models.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, chol_logdet, forward_solve, Mat};

const LN_2PI: f64 = 1.837877066409345;

/// One class-conditional Gaussian with its class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    /// Symmetric covariance; diagonal for the independence-assumption
    /// classifier, identity for nearest-mean clustering.
    pub covariance: Mat,
    pub prior: f64,
}

impl GaussianClass {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Prepares the Cholesky factorization for repeated density evaluation.
    /// Fails when the covariance is not positive definite (raise the
    /// regularizer).
    pub fn prepare(&self) -> Result<PreparedGaussian> {
        let chol = cholesky(&self.covariance).ok_or_else(|| {
            Error::Domain("class covariance is not positive definite".into())
        })?;
        let log_norm = -0.5 * (self.dim() as f64 * LN_2PI + chol_logdet(&chol));
        Ok(PreparedGaussian {
            mean: self.mean.clone(),
            chol,
            log_norm,
        })
    }
}

/// Factorized Gaussian ready for density queries.
#[derive(Debug, Clone)]
pub struct PreparedGaussian {
    mean: Vec<f64>,
    chol: Mat,
    log_norm: f64,
}

impl PreparedGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.mean.len());
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let z = forward_solve(&self.chol, &centered);
        let mahalanobis: f64 = z.iter().map(|v| v * v).sum();
        self.log_norm - 0.5 * mahalanobis
    }
}

/// Sample mean over the rows of `data` (flat `n x dim`) selected by `select`.
pub fn selected_mean(data: &[f64], dim: usize, select: impl Fn(usize) -> bool) -> (Vec<f64>, usize) {
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for (row_idx, row) in data.chunks_exact(dim).enumerate() {
        if select(row_idx) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
            count += 1;
        }
    }
    if count > 0 {
        for m in &mut mean {
            *m /= count as f64;
        }
    }
    (mean, count)
}

/// Maximum-likelihood covariance (divide by `n`) of the selected rows, with
/// `regularizer` added on the diagonal. `diagonal` zeroes the off-diagonal
/// entries (independent-feature assumption).
pub fn selected_covariance(
    data: &[f64],
    dim: usize,
    mean: &[f64],
    regularizer: f64,
    diagonal: bool,
    select: impl Fn(usize) -> bool,
) -> Mat {
    let mut cov = Mat::zeros(dim, dim);
    let mut count = 0usize;
    let mut centered = vec![0.0; dim];
    for (row_idx, row) in data.chunks_exact(dim).enumerate() {
        if !select(row_idx) {
            continue;
        }
        for ((c, v), m) in centered.iter_mut().zip(row).zip(mean) {
            *c = v - m;
        }
        count += 1;
        if diagonal {
            for (a, c) in centered.iter().enumerate() {
                cov.add_at(a, a, c * c);
            }
        } else {
            for a in 0..dim {
                for b in a..dim {
                    cov.add_at(a, b, centered[a] * centered[b]);
                }
            }
        }
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        for a in 0..dim {
            for b in a..dim {
                let v = cov.at(a, b) * inv;
                cov.set(a, b, v);
                cov.set(b, a, v);
            }
        }
    }
    cov.add_diag(regularizer);
    cov
}

/// Cloud posterior from two prepared class models (class 1 = cloud),
/// computed stably in log space. The two class posteriors sum to one by
/// construction.
pub fn two_class_posterior(
    clear: &PreparedGaussian,
    cloud: &PreparedGaussian,
    priors: (f64, f64),
    x: &[f64],
) -> f64 {
    let log_clear = clear.log_density(x) + priors.0.max(1e-300).ln();
    let log_cloud = cloud.log_density(x) + priors.1.max(1e-300).ln();
    let max = log_clear.max(log_cloud);
    let e_clear = (log_clear - max).exp();
    let e_cloud = (log_cloud - max).exp();
    e_cloud / (e_clear + e_cloud)
}
