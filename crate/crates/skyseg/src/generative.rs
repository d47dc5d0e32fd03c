//! Gaussian generative classifiers and clusterers.
//!
//! Supervised: Gaussian discriminant analysis with full per-class
//! covariances, and a naive-Bayes variant that keeps only the diagonal.
//! Unsupervised: k-means (identity covariances, hard assignments) and a
//! two-component Gaussian mixture fitted by expectation-maximization.
//! Unsupervised cluster indices are mapped onto {clear, cloud} by majority
//! overlap with training labels when labels exist, otherwise the warmer
//! cluster (higher mean on the warmth channel) becomes cloud.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::SampleSet;
use crate::gaussian::{
    selected_covariance, selected_mean, two_class_posterior, GaussianClass, PreparedGaussian,
};
use crate::linalg::Mat;

/// Variance floor keeping degenerate dimensions positive definite.
const VARIANCE_FLOOR: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500;
const GMM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerativeKind {
    Gda,
    Nbc,
    KMeans,
    Gmm,
}

/// A fitted two-class model: index 0 is clear sky, index 1 is cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub kind: GenerativeKind,
    pub classes: [GaussianClass; 2],
    pub gamma: f64,
}

impl GenerativeModel {
    pub fn prepare(&self) -> Result<PreparedGenerative> {
        Ok(PreparedGenerative {
            clear: self.classes[0].prepare()?,
            cloud: self.classes[1].prepare()?,
            priors: (self.classes[0].prior, self.classes[1].prior),
        })
    }
}

/// Factorized model for repeated posterior queries.
#[derive(Debug, Clone)]
pub struct PreparedGenerative {
    clear: PreparedGaussian,
    cloud: PreparedGaussian,
    priors: (f64, f64),
}

impl PreparedGenerative {
    /// Posterior probability that `x` is cloud.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        two_class_posterior(&self.clear, &self.cloud, self.priors, x)
    }
}

fn class_labels(samples: &SampleSet) -> Result<&[u8]> {
    samples
        .labels
        .as_deref()
        .ok_or_else(|| Error::Config("supervised fit needs labels".into()))
}

fn fit_labeled(samples: &SampleSet, gamma: f64, diagonal: bool) -> Result<[GaussianClass; 2]> {
    let labels = class_labels(samples)?;
    let mut classes = Vec::with_capacity(2);
    for class in 0..2u8 {
        let (mean, count) = selected_mean(&samples.data, samples.dim, |i| labels[i] == class);
        if count < 2 {
            return Err(Error::Domain(format!(
                "class {class} has {count} samples; need at least 2"
            )));
        }
        let mut covariance = selected_covariance(
            &samples.data,
            samples.dim,
            &mean,
            gamma,
            diagonal,
            |i| labels[i] == class,
        );
        for d in 0..samples.dim {
            if covariance.at(d, d) < VARIANCE_FLOOR {
                covariance.set(d, d, VARIANCE_FLOOR);
            }
        }
        // Uniform class prior.
        classes.push(GaussianClass {
            mean,
            covariance,
            prior: 0.5,
        });
    }
    Ok([classes.remove(0), classes.remove(0)])
}

/// Gaussian discriminant analysis with covariance regularization `Σ + γI`.
pub fn fit_gda(samples: &SampleSet, gamma: f64) -> Result<GenerativeModel> {
    if gamma < 0.0 {
        return Err(Error::Config("gamma must be non-negative".into()));
    }
    Ok(GenerativeModel {
        kind: GenerativeKind::Gda,
        classes: fit_labeled(samples, gamma, false)?,
        gamma,
    })
}

/// Naive Bayes: diagonal covariances, no hyperparameters.
pub fn fit_nbc(samples: &SampleSet) -> Result<GenerativeModel> {
    Ok(GenerativeModel {
        kind: GenerativeKind::Nbc,
        classes: fit_labeled(samples, 0.0, true)?,
        gamma: 0.0,
    })
}

/// k-means clustering outcome.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Total within-cluster squared distance after every assignment pass.
    pub inertia_trace: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations with k-means++ seeding. Empty clusters are reseeded from
/// the point farthest from its centroid. Stops at an assignment fixpoint.
pub fn kmeans(samples: &SampleSet, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = samples.len();
    if n < k {
        return Err(Error::Domain(format!("{n} samples cannot form {k} clusters")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(samples.vector(rng.random_range(0..n)).to_vec());
    let mut nearest = vec![f64::INFINITY; n];
    while centroids.len() < k {
        let newest = centroids.last().unwrap();
        let mut total = 0.0;
        for i in 0..n {
            let d = squared_distance(samples.vector(i), newest);
            if d < nearest[i] {
                nearest[i] = d;
            }
            total += nearest[i];
        }
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(samples.vector(pick).to_vec());
    }

    let mut assignments = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        // Assignment pass.
        let mut changed = false;
        let mut inertia = 0.0;
        for i in 0..n {
            let x = samples.vector(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(x, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        inertia_trace.push(inertia);
        if !changed && inertia_trace.len() > 1 {
            break;
        }

        // Update pass.
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; samples.dim]; k];
        for i in 0..n {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(samples.vector(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed from the globally farthest point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(samples.vector(a), &centroids[assignments[a]]);
                        let db = squared_distance(samples.vector(b), &centroids[assignments[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = samples.vector(far).to_vec();
            } else {
                for (s, c_v) in sums[c].iter().zip(centroids[c].iter_mut()) {
                    *c_v = s / counts[c] as f64;
                }
            }
        }
    }

    Ok(KMeansFit {
        centroids,
        assignments,
        inertia_trace,
    })
}

/// Two-component Gaussian mixture fitted by EM.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub components: Vec<GaussianClass>,
    /// Observed-data log-likelihood after each E step.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

/// EM for a two-component mixture, initialized from k-means with the given
/// seed. `gamma` is added to every covariance diagonal at each M step.
pub fn fit_gmm(samples: &SampleSet, gamma: f64, seed: u64) -> Result<MixtureModel> {
    let n = samples.len();
    let k = 2usize;
    if n < k {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let init = kmeans(samples, k, seed)?;
    let mut components: Vec<GaussianClass> = (0..k)
        .map(|c| {
            let count = init.assignments.iter().filter(|&&a| a == c).count().max(1);
            let mean = init.centroids[c].clone();
            let mut covariance = selected_covariance(
                &samples.data,
                samples.dim,
                &mean,
                gamma.max(VARIANCE_FLOOR),
                false,
                |i| init.assignments[i] == c,
            );
            for d in 0..samples.dim {
                if covariance.at(d, d) < VARIANCE_FLOOR {
                    covariance.set(d, d, VARIANCE_FLOOR);
                }
            }
            GaussianClass {
                mean,
                covariance,
                prior: count as f64 / n as f64,
            }
        })
        .collect();

    let mut loglik_trace = Vec::new();
    let mut responsibilities = vec![0.0; n * k];
    let mut converged = false;

    for _ in 0..MAX_ITERATIONS {
        // E step.
        let prepared: Vec<PreparedGaussian> = components
            .iter()
            .map(|c| c.prepare())
            .collect::<Result<_>>()?;
        let mut loglik = 0.0;
        for i in 0..n {
            let x = samples.vector(i);
            let logs: Vec<f64> = prepared
                .iter()
                .zip(&components)
                .map(|(p, c)| p.log_density(x) + c.prior.max(1e-300).ln())
                .collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
            loglik += max + sum.ln();
            for (c, l) in logs.iter().enumerate() {
                responsibilities[i * k + c] = ((l - max).exp()) / sum;
            }
        }
        let improved = loglik_trace
            .last()
            .is_none_or(|last| loglik - last > GMM_TOLERANCE);
        loglik_trace.push(loglik);
        if !improved {
            converged = true;
            break;
        }

        // M step.
        for c in 0..k {
            let weight: f64 = (0..n).map(|i| responsibilities[i * k + c]).sum();
            let weight = weight.max(1e-12);
            let mut mean = vec![0.0; samples.dim];
            for i in 0..n {
                let r = responsibilities[i * k + c];
                for (m, v) in mean.iter_mut().zip(samples.vector(i)) {
                    *m += r * v;
                }
            }
            for m in &mut mean {
                *m /= weight;
            }
            let mut covariance = Mat::zeros(samples.dim, samples.dim);
            let mut centered = vec![0.0; samples.dim];
            for i in 0..n {
                let r = responsibilities[i * k + c];
                for ((cd, v), m) in centered.iter_mut().zip(samples.vector(i)).zip(&mean) {
                    *cd = v - m;
                }
                for a in 0..samples.dim {
                    for b in a..samples.dim {
                        covariance.add_at(a, b, r * centered[a] * centered[b]);
                    }
                }
            }
            for a in 0..samples.dim {
                for b in a..samples.dim {
                    let v = covariance.at(a, b) / weight;
                    covariance.set(a, b, v);
                    covariance.set(b, a, v);
                }
            }
            covariance.add_diag(gamma.max(VARIANCE_FLOOR));
            components[c] = GaussianClass {
                mean,
                covariance,
                prior: weight / n as f64,
            };
        }
    }

    Ok(MixtureModel {
        components,
        loglik_trace,
        converged,
    })
}

/// Decides which of two clusters is cloud: majority overlap with labels when
/// available, otherwise the cluster warmer on the warmth channel. Returns
/// `(clear_idx, cloud_idx)`.
pub fn order_clusters(
    means: [&[f64]; 2],
    assignments: &[usize],
    labels: Option<&[u8]>,
    warmth_dim: usize,
) -> (usize, usize) {
    if let Some(labels) = labels {
        let mut cloud_counts = [0usize; 2];
        let mut totals = [0usize; 2];
        for (&a, &l) in assignments.iter().zip(labels) {
            totals[a] += 1;
            cloud_counts[a] += l as usize;
        }
        if totals[0] > 0 && totals[1] > 0 {
            let f0 = cloud_counts[0] as f64 / totals[0] as f64;
            let f1 = cloud_counts[1] as f64 / totals[1] as f64;
            if f0 != f1 {
                return if f1 > f0 { (0, 1) } else { (1, 0) };
            }
        }
    }
    if means[1][warmth_dim] >= means[0][warmth_dim] {
        (0, 1)
    } else {
        (1, 0)
    }
}

/// k-means as a classifier: identity covariances and equal priors around the
/// two centroids, soft posteriors from the induced Gaussians (the hard
/// assignment is the nearest mean, which the 0.5 threshold reproduces).
pub fn fit_kmeans_model(samples: &SampleSet, seed: u64, warmth_dim: usize) -> Result<GenerativeModel> {
    let fit = kmeans(samples, 2, seed)?;
    let (clear, cloud) = order_clusters(
        [&fit.centroids[0], &fit.centroids[1]],
        &fit.assignments,
        samples.labels.as_deref(),
        warmth_dim,
    );
    let class = |idx: usize| GaussianClass {
        mean: fit.centroids[idx].clone(),
        covariance: Mat::identity(samples.dim),
        prior: 0.5,
    };
    Ok(GenerativeModel {
        kind: GenerativeKind::KMeans,
        classes: [class(clear), class(cloud)],
        gamma: 0.0,
    })
}

/// Gaussian mixture as a classifier, component order resolved as above.
pub fn fit_gmm_model(
    samples: &SampleSet,
    gamma: f64,
    seed: u64,
    warmth_dim: usize,
) -> Result<GenerativeModel> {
    let mixture = fit_gmm(samples, gamma, seed)?;
    let prepared: Vec<PreparedGaussian> = mixture
        .components
        .iter()
        .map(|c| c.prepare())
        .collect::<Result<_>>()?;
    let assignments: Vec<usize> = (0..samples.len())
        .map(|i| {
            let x = samples.vector(i);
            let l0 = prepared[0].log_density(x) + mixture.components[0].prior.ln();
            let l1 = prepared[1].log_density(x) + mixture.components[1].prior.ln();
            usize::from(l1 > l0)
        })
        .collect();
    let (clear, cloud) = order_clusters(
        [&mixture.components[0].mean, &mixture.components[1].mean],
        &assignments,
        samples.labels.as_deref(),
        warmth_dim,
    );
    Ok(GenerativeModel {
        kind: GenerativeKind::Gmm,
        classes: [
            mixture.components[clear].clone(),
            mixture.components[cloud].clone(),
        ],
        gamma,
    })
}
