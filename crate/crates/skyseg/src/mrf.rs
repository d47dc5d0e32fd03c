//! Markov random field segmentation.
//!
//! Labels form an Ising-style field over the pixel lattice: the energy of a
//! labeling is the sum of per-pixel Gaussian negative log-likelihoods and a
//! pairwise coupling `-beta * s_i * s_j` over neighboring pixel pairs, with
//! spins `s = 2y - 1`. Lower energy means higher posterior.
//!
//! Inference is iterated conditional modes (sequential per-pixel
//! conditional-MAP updates in raster order, which monotonically decrease the
//! energy) or Metropolis simulated annealing over a margin-sampled proposal
//! set followed by one settling ICM sweep. Class parameters come either from
//! labeled training data (supervised) or from alternating parameter
//! re-estimation with ICM sweeps on a single frame (unsupervised).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureFrame, SampleSet};
use crate::gaussian::{selected_covariance, selected_mean, GaussianClass};
use crate::grid::Grid;

/// Clique structure of the label graph: pairs over the 4- or 8-neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliqueOrder {
    FourConnected,
    EightConnected,
}

impl CliqueOrder {
    /// Offsets enumerating every neighbor of a pixel.
    fn neighbor_offsets(&self) -> &'static [(isize, isize)] {
        match self {
            CliqueOrder::FourConnected => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            CliqueOrder::EightConnected => &[
                (-1, 0),
                (0, -1),
                (0, 1),
                (1, 0),
                (-1, -1),
                (-1, 1),
                (1, -1),
                (1, 1),
            ],
        }
    }

    /// Offsets enumerating each unordered pair exactly once.
    fn forward_offsets(&self) -> &'static [(isize, isize)] {
        match self {
            CliqueOrder::FourConnected => &[(0, 1), (1, 0)],
            CliqueOrder::EightConnected => &[(0, 1), (1, 0), (1, 1), (1, -1)],
        }
    }

    /// Number of pixel pairs in an `rows x cols` lattice.
    pub fn pair_count(&self, rows: usize, cols: usize) -> usize {
        let horizontal = rows * (cols - 1);
        let vertical = (rows - 1) * cols;
        match self {
            CliqueOrder::FourConnected => horizontal + vertical,
            CliqueOrder::EightConnected => horizontal + vertical + 2 * (rows - 1) * (cols - 1),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CliqueOrder::FourConnected => "1",
            CliqueOrder::EightConnected => "2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" | "four" => Ok(CliqueOrder::FourConnected),
            "2" | "eight" => Ok(CliqueOrder::EightConnected),
            other => Err(Error::Config(format!(
                "unknown clique order `{other}` (expected 1|2)"
            ))),
        }
    }
}

/// Fitted MRF: two class-conditional Gaussians plus the coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfModel {
    /// Index 0 clear, index 1 cloud.
    pub classes: [GaussianClass; 2],
    pub beta: f64,
    pub clique: CliqueOrder,
    pub gamma: f64,
}

/// Geometric cooling schedule: `T_{t+1} = cooling * T_t` for `steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub initial_temp: f64,
    pub cooling: f64,
    pub steps: usize,
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.cooling && self.cooling < 1.0) {
            return Err(Error::Config(format!(
                "cooling rate must lie in (0,1), got {}",
                self.cooling
            )));
        }
        if self.initial_temp <= 0.0 {
            return Err(Error::Config("initial temperature must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            initial_temp: 1.0,
            cooling: 0.75,
            steps: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SegmentMode {
    Icm,
    Sa { schedule: AnnealSchedule, seed: u64 },
}

/// Fraction of pixels (those with the smallest decision margin) that the
/// annealer proposes flips from.
pub const SA_PROPOSAL_FRACTION: f64 = 0.2;
/// Cap on full ICM sweeps per segmentation.
pub const MAX_SWEEPS: usize = 50;
/// Cap on parameter/label alternations in the unsupervised fit.
pub const MAX_OUTER_ITERATIONS: usize = 50;

#[inline]
fn spin(label: u8) -> f64 {
    2.0 * label as f64 - 1.0
}

/// Model evaluated against one frame: cached per-pixel class log-densities.
pub struct PreparedMrf {
    rows: usize,
    cols: usize,
    /// Negative log-likelihood per pixel for each class.
    phi: [Vec<f64>; 2],
    beta: f64,
    clique: CliqueOrder,
}

impl PreparedMrf {
    pub fn new(model: &MrfModel, features: &FeatureFrame) -> Result<Self> {
        let pdfs = [model.classes[0].prepare()?, model.classes[1].prepare()?];
        let n = features.n_pixels();
        let mut phi = [vec![0.0; n], vec![0.0; n]];
        for p in 0..n {
            let x = features.vector(p);
            phi[0][p] = -pdfs[0].log_density(x);
            phi[1][p] = -pdfs[1].log_density(x);
        }
        Ok(Self {
            rows: features.rows(),
            cols: features.cols(),
            phi,
            beta: model.beta,
            clique: model.clique,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check_shape(&self, labels: &Grid<u8>) {
        assert!(
            labels.rows() == self.rows && labels.cols() == self.cols,
            "label shape mismatch"
        );
    }

    /// Total energy of a labeling.
    pub fn energy(&self, labels: &Grid<u8>) -> f64 {
        self.check_shape(labels);
        let mut total = 0.0;
        for p in 0..self.rows * self.cols {
            total += self.phi[labels.data()[p] as usize][p];
        }
        let mut pairwise = 0.0;
        for i in 0..self.rows as isize {
            for j in 0..self.cols as isize {
                let si = spin(*labels.get(i as usize, j as usize));
                for (di, dj) in self.clique.forward_offsets() {
                    let (ni, nj) = (i + di, j + dj);
                    if ni >= 0 && ni < self.rows as isize && nj >= 0 && nj < self.cols as isize {
                        pairwise += si * spin(*labels.get(ni as usize, nj as usize));
                    }
                }
            }
        }
        total - self.beta * pairwise
    }

    /// Sum of neighbor spins around `(i, j)` under the current labeling.
    fn neighbor_spin_sum(&self, labels: &Grid<u8>, i: isize, j: isize) -> f64 {
        let mut sum = 0.0;
        for (di, dj) in self.clique.neighbor_offsets() {
            let (ni, nj) = (i + di, j + dj);
            if ni >= 0 && ni < self.rows as isize && nj >= 0 && nj < self.cols as isize {
                sum += spin(*labels.get(ni as usize, nj as usize));
            }
        }
        sum
    }

    /// Conditional energies `(clear, cloud)` of one pixel given its
    /// neighbors.
    pub fn local_energies(&self, labels: &Grid<u8>, i: usize, j: usize) -> (f64, f64) {
        let p = i * self.cols + j;
        let spins = self.neighbor_spin_sum(labels, i as isize, j as isize);
        (
            self.phi[0][p] + self.beta * spins,
            self.phi[1][p] - self.beta * spins,
        )
    }

    /// Conditional posterior of cloud at one pixel given its neighbors.
    pub fn local_posterior(&self, labels: &Grid<u8>, i: usize, j: usize) -> f64 {
        let (e_clear, e_cloud) = self.local_energies(labels, i, j);
        let m = e_clear.min(e_cloud);
        let w_clear = (-(e_clear - m)).exp();
        let w_cloud = (-(e_cloud - m)).exp();
        w_cloud / (w_clear + w_cloud)
    }

    /// One raster-order sweep of conditional-MAP updates, in place. Returns
    /// the number of changed pixels. Ties assign cloud.
    pub fn icm_sweep(&self, labels: &mut Grid<u8>) -> usize {
        self.check_shape(labels);
        let mut changes = 0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let (e_clear, e_cloud) = self.local_energies(labels, i, j);
                let new = u8::from(e_cloud <= e_clear);
                if new != *labels.get(i, j) {
                    labels.set(i, j, new);
                    changes += 1;
                }
            }
        }
        changes
    }

    /// Maximum-likelihood labels: the `beta = 0` assignment.
    pub fn ml_labels(&self) -> Grid<u8> {
        let mut labels = Grid::fill(self.rows, self.cols, 0u8);
        for p in 0..self.rows * self.cols {
            labels.data_mut()[p] = u8::from(self.phi[1][p] <= self.phi[0][p]);
        }
        labels
    }

    /// Flat indices of the pixels with the smallest absolute conditional
    /// energy margin (the ones most likely to flip), `round(fraction * n)`
    /// of them, at least one.
    pub fn margin_sampling(&self, labels: &Grid<u8>, fraction: f64) -> Result<Vec<usize>> {
        if !(0.0 < fraction && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fraction must lie in (0,1], got {fraction}"
            )));
        }
        self.check_shape(labels);
        let n = self.rows * self.cols;
        let count = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut margins: Vec<(f64, usize)> = (0..n)
            .map(|p| {
                let (e_clear, e_cloud) = self.local_energies(labels, p / self.cols, p % self.cols);
                ((e_clear - e_cloud).abs(), p)
            })
            .collect();
        margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(margins.into_iter().take(count).map(|(_, p)| p).collect())
    }

    /// Metropolis annealing over margin-sampled proposals. Deterministic for
    /// a fixed seed.
    pub fn anneal(&self, labels: &mut Grid<u8>, schedule: &AnnealSchedule, seed: u64) -> Result<()> {
        schedule.validate()?;
        self.check_shape(labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut temp = schedule.initial_temp;
        for _ in 0..schedule.steps {
            let mut proposals = self.margin_sampling(labels, SA_PROPOSAL_FRACTION)?;
            // Fisher-Yates shuffle for a seed-reproducible visit order.
            for k in (1..proposals.len()).rev() {
                let swap = rng.random_range(0..=k);
                proposals.swap(k, swap);
            }
            for p in proposals {
                let (i, j) = (p / self.cols, p % self.cols);
                let (e_clear, e_cloud) = self.local_energies(labels, i, j);
                let current = *labels.get(i, j);
                let delta = if current == 0 {
                    e_cloud - e_clear
                } else {
                    e_clear - e_cloud
                };
                let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp();
                if accept {
                    labels.set(i, j, 1 - current);
                }
            }
            temp *= schedule.cooling;
        }
        Ok(())
    }
}

/// Whole-frame energy of a labeling under a model.
pub fn energy(labels: &Grid<u8>, features: &FeatureFrame, model: &MrfModel) -> Result<f64> {
    Ok(PreparedMrf::new(model, features)?.energy(labels))
}

/// One ICM sweep; see [`PreparedMrf::icm_sweep`].
pub fn icm_sweep(labels: &mut Grid<u8>, features: &FeatureFrame, model: &MrfModel) -> Result<usize> {
    Ok(PreparedMrf::new(model, features)?.icm_sweep(labels))
}

/// Margin-based proposal subset; see [`PreparedMrf::margin_sampling`].
pub fn margin_sampling(
    labels: &Grid<u8>,
    features: &FeatureFrame,
    model: &MrfModel,
    fraction: f64,
) -> Result<Vec<usize>> {
    PreparedMrf::new(model, features)?.margin_sampling(labels, fraction)
}

/// Supervised fit: per-class Gaussians from labeled samples with `Σ + γI`
/// regularization and the given coupling.
pub fn fit_supervised(
    samples: &SampleSet,
    gamma: f64,
    beta: f64,
    clique: CliqueOrder,
) -> Result<MrfModel> {
    let labels = samples
        .labels
        .as_deref()
        .ok_or_else(|| Error::Config("supervised MRF fit needs labels".into()))?;
    let mut classes = Vec::with_capacity(2);
    for class in 0..2u8 {
        let (mean, count) = selected_mean(&samples.data, samples.dim, |i| labels[i] == class);
        if count < 2 {
            return Err(Error::Domain(format!(
                "class {class} has {count} samples; need at least 2"
            )));
        }
        let covariance = selected_covariance(&samples.data, samples.dim, &mean, gamma, false, |i| {
            labels[i] == class
        });
        classes.push(GaussianClass {
            mean,
            covariance,
            prior: 0.5,
        });
    }
    Ok(MrfModel {
        classes: [classes.remove(0), classes.remove(0)],
        beta,
        clique,
        gamma,
    })
}

/// Segments one frame. ICM mode runs sweeps from the maximum-likelihood
/// initialization to a fixpoint (or the sweep cap); SA mode anneals first and
/// settles with a single sweep.
pub fn segment(model: &MrfModel, features: &FeatureFrame, mode: &SegmentMode) -> Result<Grid<u8>> {
    let prepared = PreparedMrf::new(model, features)?;
    let mut labels = prepared.ml_labels();
    match mode {
        SegmentMode::Icm => {
            for _ in 0..MAX_SWEEPS {
                if prepared.icm_sweep(&mut labels) == 0 {
                    break;
                }
            }
        }
        SegmentMode::Sa { schedule, seed } => {
            prepared.anneal(&mut labels, schedule, *seed)?;
            prepared.icm_sweep(&mut labels);
        }
    }
    Ok(labels)
}

/// Temperature-increment level (Kelvin on the warmth channel) separating
/// clear-sky pixels (increments near zero once the background is removed)
/// from cloud pixels. Used only to resolve frames where unsupervised
/// clustering finds no cloud/clear structure; assumes unstandardized
/// features.
pub const CLOUD_WARMTH_THRESHOLD_K: f64 = 3.0;
/// A frame whose warmth-thresholded cloud fraction falls outside
/// `[band, 1 - band]` is declared single-class.
const UNIFORM_FRACTION_BAND: f64 = 0.05;

/// Outcome of the per-frame unsupervised fit.
#[derive(Debug, Clone)]
pub struct UnsupervisedFit {
    pub model: MrfModel,
    pub mask: Grid<u8>,
    /// Per-pixel cloud scores: conditional posteriors at the final labeling,
    /// or hard 0/1 for frames detected as single-class.
    pub scores: Vec<f64>,
    /// True when the frame was declared single-class (all clear or all
    /// cloud) because the two clusters were inseparable.
    pub degenerate: bool,
}

fn class_stats(
    samples: &SampleSet,
    mask: &[u8],
    gamma: f64,
) -> Option<[GaussianClass; 2]> {
    let mut classes = Vec::with_capacity(2);
    for class in 0..2u8 {
        let (mean, count) = selected_mean(&samples.data, samples.dim, |i| mask[i] == class);
        if count < 2 {
            return None;
        }
        let covariance = selected_covariance(&samples.data, samples.dim, &mean, gamma, false, |i| {
            mask[i] == class
        });
        classes.push(GaussianClass {
            mean,
            covariance,
            prior: 0.5,
        });
    }
    Some([classes.remove(0), classes.remove(0)])
}

fn uniform_fit(
    samples: &SampleSet,
    features: &FeatureFrame,
    cloudy: bool,
    beta: f64,
    clique: CliqueOrder,
    gamma: f64,
) -> UnsupervisedFit {
    let (pooled_mean, _) = selected_mean(&samples.data, samples.dim, |_| true);
    let pooled_cov =
        selected_covariance(&samples.data, samples.dim, &pooled_mean, gamma, false, |_| true);
    let class = GaussianClass {
        mean: pooled_mean,
        covariance: pooled_cov,
        prior: 0.5,
    };
    let label = u8::from(cloudy);
    UnsupervisedFit {
        model: MrfModel {
            classes: [class.clone(), class],
            beta,
            clique,
            gamma,
        },
        mask: Grid::fill(features.rows(), features.cols(), label),
        scores: vec![label as f64; samples.len()],
        degenerate: true,
    }
}

/// Unsupervised per-frame fit: k-means initialization, then alternating
/// class-parameter re-estimation and ICM sweeps until the labeling reaches a
/// fixpoint. A class collapsing below two pixels triggers a k-means
/// re-initialization (new seed); after three collapses the fit aborts.
///
/// Two-cluster fitting assumes the frame actually holds two populations.
/// When both cluster means land on the same side of the warmth threshold the
/// clustering found structure other than cloud/clear (uniform skies, or a
/// split inside a dominant cloud layer); the frame is then resolved by
/// thresholding the warmth channel directly: declared single-class when the
/// thresholded cloud fraction is extreme, otherwise the threshold mask
/// re-seeds the alternation.
pub fn fit_icm_unsupervised(
    features: &FeatureFrame,
    beta: f64,
    clique: CliqueOrder,
    gamma: f64,
    seed: u64,
    warmth_dim: usize,
    schedule: Option<&AnnealSchedule>,
) -> Result<UnsupervisedFit> {
    let samples = SampleSet {
        dim: features.dim(),
        data: features.data().to_vec(),
        labels: None,
    };
    let n = samples.len();

    let mut attempts = 0u32;
    loop {
        let km = crate::generative::kmeans(&samples, 2, seed + attempts as u64)?;
        let cloud_flags = [
            km.centroids[0][warmth_dim] >= CLOUD_WARMTH_THRESHOLD_K,
            km.centroids[1][warmth_dim] >= CLOUD_WARMTH_THRESHOLD_K,
        ];
        let mask_vec: Vec<u8> = if cloud_flags[0] == cloud_flags[1] {
            let threshold_mask: Vec<u8> = (0..n)
                .map(|i| u8::from(samples.vector(i)[warmth_dim] >= CLOUD_WARMTH_THRESHOLD_K))
                .collect();
            let fraction = threshold_mask.iter().map(|&v| v as usize).sum::<usize>() as f64
                / n as f64;
            if fraction <= UNIFORM_FRACTION_BAND {
                return Ok(uniform_fit(&samples, features, false, beta, clique, gamma));
            }
            if fraction >= 1.0 - UNIFORM_FRACTION_BAND {
                return Ok(uniform_fit(&samples, features, true, beta, clique, gamma));
            }
            threshold_mask
        } else {
            let cloud_idx = usize::from(cloud_flags[1]);
            km.assignments
                .iter()
                .map(|&a| u8::from(a == cloud_idx))
                .collect()
        };

        let Some(classes) = class_stats(&samples, &mask_vec, gamma) else {
            attempts += 1;
            if attempts > 3 {
                return Err(Error::Convergence(
                    "unsupervised fit collapsed to one class after 3 re-initializations".into(),
                ));
            }
            continue;
        };

        // Alternate parameter estimation and label updates.
        let mut mask = Grid::from_vec(features.rows(), features.cols(), mask_vec);
        let mut model = MrfModel {
            classes,
            beta,
            clique,
            gamma,
        };
        let mut collapsed = false;
        for _ in 0..MAX_OUTER_ITERATIONS {
            let prepared = PreparedMrf::new(&model, features)?;
            let changes = prepared.icm_sweep(&mut mask);
            match class_stats(&samples, mask.data(), gamma) {
                Some(classes) => model.classes = classes,
                None => {
                    collapsed = true;
                    break;
                }
            }
            if changes == 0 {
                break;
            }
        }
        if collapsed {
            attempts += 1;
            if attempts > 3 {
                return Err(Error::Convergence(
                    "unsupervised fit collapsed to one class after 3 re-initializations".into(),
                ));
            }
            continue;
        }

        // Optional annealing refinement, then settle.
        if let Some(schedule) = schedule {
            let prepared = PreparedMrf::new(&model, features)?;
            prepared.anneal(&mut mask, schedule, seed)?;
            prepared.icm_sweep(&mut mask);
            if let Some(classes) = class_stats(&samples, mask.data(), gamma) {
                model.classes = classes;
            }
        }

        // Keep the cloud class the warmer one.
        if model.classes[0].mean[warmth_dim] > model.classes[1].mean[warmth_dim] {
            model.classes.swap(0, 1);
            for v in mask.data_mut() {
                *v = 1 - *v;
            }
        }

        let prepared = PreparedMrf::new(&model, features)?;
        let scores: Vec<f64> = (0..n)
            .map(|p| prepared.local_posterior(&mask, p / features.cols(), p % features.cols()))
            .collect();
        return Ok(UnsupervisedFit {
            model,
            mask,
            scores,
            degenerate: false,
        });
    }
}
