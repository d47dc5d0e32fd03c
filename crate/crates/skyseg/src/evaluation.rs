//! Metrics, decision-prior selection, leave-one-out cross-validation,
//! timing benchmarks and majority voting.
//!
//! The headline score is the Youden J statistic,
//! `sensitivity + specificity - 1`, which stays meaningful under class
//! imbalance. Every model exposes a cloud probability per pixel; the
//! decision prior `lambda` (the pixel is cloud when `lambda * p >= 0.5`)
//! moves the operating point along the ROC curve and is selected by
//! maximizing J.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::{extract, FeatureFrame, FeatureSpec};
use crate::grid::Grid;
use crate::imaging::LoadedEntry;
use crate::model::{decide, train, ModelFamily, SegModel, TrainConfig};
use crate::mrf::CliqueOrder;
use crate::preprocess::Preprocessor;

// ---------------------------------------------------------------------------
// Confusion matrix and scores
// ---------------------------------------------------------------------------

/// Pixel counts of a binary segmentation against truth (positive = cloud).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Self {
        assert_eq!(pred.len(), truth.len(), "length mismatch");
        let mut cm = ConfusionMatrix::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (1, 1) => cm.true_pos += 1,
                (1, 0) => cm.false_pos += 1,
                (0, 0) => cm.true_neg += 1,
                (0, 1) => cm.false_neg += 1,
                _ => panic!("labels must be binary"),
            }
        }
        cm
    }

    pub fn from_masks(pred: &Grid<u8>, truth: &Grid<u8>) -> Self {
        assert!(pred.same_shape(truth), "shape mismatch");
        Self::from_labels(pred.data(), truth.data())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    /// A truth class is absent (the all-clear or all-cloud image).
    pub fn degenerate(&self) -> bool {
        self.true_pos + self.false_neg == 0 || self.true_neg + self.false_pos == 0
    }

    /// `TP / (TP + FN)`. With no positive truth pixels the rate is defined
    /// as 1 when the error count is 0, else 0, so degenerate images still
    /// produce reports.
    pub fn sensitivity(&self) -> f64 {
        let denom = self.true_pos + self.false_neg;
        if denom == 0 {
            return if self.false_neg == 0 { 1.0 } else { 0.0 };
        }
        self.true_pos as f64 / denom as f64
    }

    /// `TN / (TN + FP)`, degenerate convention as above.
    pub fn specificity(&self) -> f64 {
        let denom = self.true_neg + self.false_pos;
        if denom == 0 {
            return if self.false_pos == 0 { 1.0 } else { 0.0 };
        }
        self.true_neg as f64 / denom as f64
    }

    /// Youden J statistic.
    pub fn j_stat(&self) -> f64 {
        self.sensitivity() + self.specificity() - 1.0
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }
}

/// Per-image and aggregate evaluation of one model over a frame set.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub per_image: Vec<ConfusionMatrix>,
    pub aggregate: ConfusionMatrix,
    pub warnings: Vec<String>,
    /// Wall-clock training time, seconds (when measured).
    pub train_time_s: Option<f64>,
    /// Median per-image segmentation time, milliseconds (when measured).
    pub test_ms_per_image: Option<f64>,
}

impl EvalReport {
    pub fn from_images(images: Vec<ConfusionMatrix>) -> Self {
        let mut aggregate = ConfusionMatrix::default();
        let mut warnings = Vec::new();
        for (k, cm) in images.iter().enumerate() {
            aggregate.merge(cm);
            if cm.degenerate() {
                warnings.push(format!(
                    "image {k}: single-class truth, degenerate rate convention applied"
                ));
            }
        }
        Self {
            per_image: images,
            aggregate,
            warnings,
            train_time_s: None,
            test_ms_per_image: None,
        }
    }

    /// CSV with one row per image plus an aggregate row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("image,tp,fp,tn,fn,sensitivity,specificity,j_stat,accuracy\n");
        let mut row = |name: &str, cm: &ConfusionMatrix| {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                name,
                cm.true_pos,
                cm.false_pos,
                cm.true_neg,
                cm.false_neg,
                cm.sensitivity(),
                cm.specificity(),
                cm.j_stat(),
                cm.accuracy()
            );
        };
        for (k, cm) in self.per_image.iter().enumerate() {
            row(&k.to_string(), cm);
        }
        row("aggregate", &self.aggregate);
        out
    }
}

// ---------------------------------------------------------------------------
// ROC and decision-prior selection
// ---------------------------------------------------------------------------

/// Default decision-prior grid: 50 log-spaced points in [0.02, 2].
pub fn default_lambda_grid() -> Vec<f64> {
    (0..50)
        .map(|k| 0.02 * (100.0f64).powf(k as f64 / 49.0))
        .collect()
}

/// Priors that realize every operating point reachable on a finite score
/// set under the `lambda * p >= 0.5` rule: one prior per distinct positive
/// score (cutting mid-gap below it, so the inclusive comparison is robust to
/// rounding) plus one predicting nothing. Zero scores are never predicted
/// cloud by any finite prior.
pub fn lambda_grid_from_scores(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.iter().copied().filter(|&s| s > 0.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut grid: Vec<f64> = Vec::with_capacity(distinct.len() + 1);
    for (k, &s) in distinct.iter().enumerate() {
        let threshold = if k == 0 {
            0.5 * s
        } else {
            0.5 * (distinct[k - 1] + s)
        };
        grid.push(0.5 / threshold);
    }
    if let Some(&max) = distinct.last() {
        grid.push(0.25 / max); // below every score: predict nothing
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid
}

/// One point of a ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub lambda: f64,
    pub false_pos_rate: f64,
    pub true_pos_rate: f64,
    pub j_stat: f64,
}

/// Evaluates the decision rule at every prior in the grid.
pub fn roc_sweep(scores: &[f64], truth: &[u8], grid: &[f64]) -> Vec<RocPoint> {
    assert_eq!(scores.len(), truth.len());
    grid.iter()
        .map(|&lambda| {
            let pred: Vec<u8> = scores.iter().map(|&s| decide(s, lambda)).collect();
            let cm = ConfusionMatrix::from_labels(&pred, truth);
            RocPoint {
                lambda,
                false_pos_rate: 1.0 - cm.specificity(),
                true_pos_rate: cm.sensitivity(),
                j_stat: cm.j_stat(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub j_stat: f64,
    /// Truth held a single class; the returned prior is the neutral 1.0.
    pub degenerate: bool,
}

/// Picks the prior maximizing J over the grid; ties break toward the
/// smaller prior. Single-class truth returns `lambda = 1` flagged.
pub fn roc_select_lambda(scores: &[f64], truth: &[u8], grid: &[f64]) -> LambdaChoice {
    let positives = truth.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == truth.len() {
        let pred: Vec<u8> = scores.iter().map(|&s| decide(s, 1.0)).collect();
        let cm = ConfusionMatrix::from_labels(&pred, truth);
        return LambdaChoice {
            lambda: 1.0,
            j_stat: cm.j_stat(),
            degenerate: true,
        };
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<LambdaChoice> = None;
    for point in roc_sweep(scores, truth, &sorted) {
        let better = best.is_none_or(|b| point.j_stat > b.j_stat);
        if better {
            best = Some(LambdaChoice {
                lambda: point.lambda,
                j_stat: point.j_stat,
                degenerate: false,
            });
        }
    }
    best.expect("non-empty grid")
}

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation with grid search
// ---------------------------------------------------------------------------

/// Search space of one model family. Only the axes the family uses take
/// effect; the rest stay at their single default.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub family: ModelFamily,
    pub feature_specs: Vec<FeatureSpec>,
    pub gammas: Vec<f64>,
    pub costs: Vec<f64>,
    pub betas: Vec<f64>,
    pub coolings: Vec<f64>,
    pub orders: Vec<u32>,
    pub cliques: Vec<CliqueOrder>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(family: ModelFamily, feature_specs: Vec<FeatureSpec>) -> Self {
        Self {
            family,
            feature_specs,
            gammas: vec![1.0],
            costs: vec![1.0],
            betas: vec![1.0],
            coolings: vec![0.75],
            orders: vec![1],
            cliques: vec![CliqueOrder::FourConnected],
            lambdas: default_lambda_grid(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = !self.feature_specs.is_empty()
            && !self.gammas.is_empty()
            && !self.costs.is_empty()
            && !self.betas.is_empty()
            && !self.coolings.is_empty()
            && !self.orders.is_empty()
            && !self.cliques.is_empty()
            && !self.lambdas.is_empty();
        if !nonempty {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        Ok(())
    }

    /// Expands the axes the family actually uses, in deterministic order
    /// with smaller hyperparameters first (the tie-break order).
    pub fn expand(&self) -> Vec<TrainConfig> {
        let uses_gamma = matches!(
            self.family,
            ModelFamily::Gda
                | ModelFamily::Gmm
                | ModelFamily::Rrc
                | ModelFamily::Gpc
                | ModelFamily::Mrf
                | ModelFamily::SaMrf
        );
        let uses_cost = self.family == ModelFamily::Svc;
        let uses_beta = matches!(
            self.family,
            ModelFamily::Mrf | ModelFamily::SaMrf | ModelFamily::IcmMrf | ModelFamily::SaIcmMrf
        );
        let uses_cooling = matches!(self.family, ModelFamily::SaMrf | ModelFamily::SaIcmMrf);
        let uses_order = matches!(
            self.family,
            ModelFamily::Rrc | ModelFamily::Svc | ModelFamily::Gpc
        );

        let one = |v: f64| vec![v];
        let gammas = if uses_gamma { sorted(&self.gammas) } else { one(1.0) };
        let costs = if uses_cost { sorted(&self.costs) } else { one(1.0) };
        let betas = if uses_beta { sorted(&self.betas) } else { one(1.0) };
        let coolings = if uses_cooling { sorted(&self.coolings) } else { one(0.75) };
        let orders: Vec<u32> = if uses_order {
            let mut o = self.orders.clone();
            o.sort_unstable();
            o.dedup();
            o
        } else {
            vec![1]
        };
        let cliques: Vec<CliqueOrder> = if uses_beta {
            self.cliques.clone()
        } else {
            vec![CliqueOrder::FourConnected]
        };

        let mut configs = Vec::new();
        for spec in &self.feature_specs {
            for &order in &orders {
                for &clique in &cliques {
                    for &gamma in &gammas {
                        for &cost in &costs {
                            for &beta in &betas {
                                for &cooling in &coolings {
                                    let mut config = TrainConfig::new(self.family, *spec);
                                    config.gamma = gamma;
                                    config.cost = cost;
                                    config.beta = beta;
                                    config.clique = clique;
                                    config.schedule.cooling = cooling;
                                    config.order = order;
                                    config.seed = self.seed;
                                    configs.push(config);
                                }
                            }
                        }
                    }
                }
            }
        }
        configs
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Mean validation J of one `(config, lambda)` grid point.
#[derive(Debug, Clone)]
pub struct LooRow {
    pub config: TrainConfig,
    pub mean_j: f64,
    pub fold_j: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LooReport {
    pub rows: Vec<LooRow>,
    /// Configs excluded because some fold failed to train.
    pub invalid: Vec<(TrainConfig, String)>,
    pub best: LooRow,
}

impl LooReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "family,features,order,clique,gamma,cost,beta,cooling,lambda,mean_j,fold_j\n",
        );
        for row in &self.rows {
            let c = &row.config;
            let folds = row
                .fold_j
                .iter()
                .map(|j| format!("{j:.6}"))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.family.as_str(),
                c.feature_spec,
                c.order,
                c.clique.as_str(),
                c.gamma,
                c.cost,
                c.beta,
                c.schedule.cooling,
                c.lambda,
                row.mean_j,
                folds
            );
        }
        out
    }
}

/// Scores one config on one fold: train on all images but `held_out`,
/// return the held-out scores and truth.
fn run_fold(
    config: &TrainConfig,
    images: &[FeatureFrame],
    held_out: usize,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let train_frames: Vec<&FeatureFrame> = images
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != held_out)
        .map(|(_, f)| f)
        .collect();
    let model = train(config, &train_frames)?;
    let scores = model.score_frame(&images[held_out])?;
    let truth = images[held_out]
        .labels
        .clone()
        .ok_or_else(|| Error::Config("validation image has no labels".into()))?;
    Ok((scores, truth))
}

fn evaluate_config(
    config: &TrainConfig,
    images: &[FeatureFrame],
    lambdas: &[f64],
) -> Result<Vec<LooRow>> {
    let folds = images.len();
    // fold_scores[fold] -> (scores, truth); training happens once per fold,
    // every lambda reuses the scores.
    let mut fold_j = vec![Vec::with_capacity(folds); lambdas.len()];
    for fold in 0..folds {
        let (scores, truth) = run_fold(config, images, fold)?;
        for (k, &lambda) in lambdas.iter().enumerate() {
            let pred: Vec<u8> = scores.iter().map(|&s| decide(s, lambda)).collect();
            fold_j[k].push(ConfusionMatrix::from_labels(&pred, &truth).j_stat());
        }
    }
    Ok(lambdas
        .iter()
        .zip(fold_j)
        .map(|(&lambda, fold_j)| {
            let mean_j = fold_j.iter().sum::<f64>() / fold_j.len() as f64;
            let mut config = config.clone();
            config.lambda = lambda;
            LooRow {
                config,
                mean_j,
                fold_j,
            }
        })
        .collect())
}

/// Leave-one-out cross-validation over a hyperparameter/prior grid.
///
/// Every training image is held out once per grid point; the validation J is
/// the mean over folds and the selected configuration maximizes it, with
/// ties broken toward smaller hyperparameters and then smaller priors (the
/// expansion order).
pub fn loo_cross_validate(images: &[FeatureFrame], grid: &GridSpec) -> Result<LooReport> {
    grid.validate()?;
    if images.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least 2 images".into()));
    }
    if images.iter().any(|f| f.labels.is_none()) {
        return Err(Error::Config("every training image needs labels".into()));
    }
    let mut lambdas = sorted(&grid.lambdas);
    if lambdas.is_empty() {
        lambdas.push(1.0);
    }
    let configs = grid.expand();

    #[cfg(feature = "parallel")]
    let results: Vec<(TrainConfig, Result<Vec<LooRow>>)> = {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|config| (config.clone(), evaluate_config(config, images, &lambdas)))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(TrainConfig, Result<Vec<LooRow>>)> = configs
        .iter()
        .map(|config| (config.clone(), evaluate_config(config, images, &lambdas)))
        .collect();

    let mut rows = Vec::new();
    let mut invalid = Vec::new();
    for (config, result) in results {
        match result {
            Ok(config_rows) => rows.extend(config_rows),
            Err(err) => invalid.push((config, err.to_string())),
        }
    }
    // Deterministic selection: first strict maximum in expansion order.
    let best = rows
        .iter()
        .cloned()
        .reduce(|best, row| if row.mean_j > best.mean_j { row } else { best })
        .ok_or_else(|| Error::Convergence("every grid point failed to train".into()))?;
    Ok(LooReport {
        rows,
        invalid,
        best,
    })
}

// ---------------------------------------------------------------------------
// Timing benchmarks
// ---------------------------------------------------------------------------

/// Wall-clock timing of one model over a frame set, single-threaded.
#[derive(Debug, Clone)]
pub struct TimingReport {
    /// Median preprocessing + feature extraction time per image, ms.
    pub preprocess_ms_per_image: f64,
    /// Median segmentation (scoring + thresholding) time per image, ms.
    pub segment_ms_per_image: f64,
    /// Mean segmentation time per image, ms.
    pub segment_ms_per_image_mean: f64,
    /// `preprocess + segment` medians; additivity holds by construction.
    pub total_ms_per_image: f64,
    /// Raw per-image medians, ms.
    pub per_image_segment_ms: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Benchmarks one model. Preprocessing (derive + extract) is timed
/// separately from segmentation; one warm-up pass is discarded. Runs on the
/// calling thread only.
pub fn benchmark(
    model: &SegModel,
    entries: &[LoadedEntry],
    preprocessor: &Preprocessor,
    repetitions: usize,
) -> Result<TimingReport> {
    if entries.is_empty() || repetitions == 0 {
        return Err(Error::Config("benchmark needs entries and repetitions > 0".into()));
    }
    let spec = model.feature_spec;

    // Warm-up (also validates the pipeline end to end).
    {
        let e = &entries[0];
        let derived = preprocessor.derive(&e.frame, &e.weather, e.prev.as_ref())?;
        let features = extract(&derived, &spec)?;
        model.predict_frame(&features)?;
    }

    let mut preprocess_medians = Vec::new();
    let mut segment_medians = Vec::new();
    let mut all_segment = Vec::new();
    for entry in entries {
        let mut pre_times = Vec::with_capacity(repetitions);
        let mut seg_times = Vec::with_capacity(repetitions);
        let mut features = None;
        for _ in 0..repetitions {
            let start = Instant::now();
            let derived = preprocessor.derive(&entry.frame, &entry.weather, entry.prev.as_ref())?;
            let extracted = extract(&derived, &spec)?;
            pre_times.push(start.elapsed().as_secs_f64() * 1e3);
            features = Some(extracted);
        }
        let features = features.expect("repetitions > 0");
        for _ in 0..repetitions {
            let start = Instant::now();
            let _ = model.predict_frame(&features)?;
            seg_times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        preprocess_medians.push(median(&mut pre_times));
        let seg_median = median(&mut seg_times);
        segment_medians.push(seg_median);
        all_segment.extend(seg_times);
    }

    let preprocess_ms = preprocess_medians.iter().sum::<f64>() / preprocess_medians.len() as f64;
    let segment_ms = {
        let mut m = segment_medians.clone();
        median(&mut m)
    };
    let segment_mean = all_segment.iter().sum::<f64>() / all_segment.len() as f64;
    Ok(TimingReport {
        preprocess_ms_per_image: preprocess_ms,
        segment_ms_per_image: segment_ms,
        segment_ms_per_image_mean: segment_mean,
        total_ms_per_image: preprocess_ms + segment_ms,
        per_image_segment_ms: segment_medians,
    })
}

/// Plot-data CSV: one row per (model, J, timing) triple.
pub fn timing_csv(rows: &[(String, f64, TimingReport)]) -> String {
    let mut out = String::from("model,j_stat,preprocess_ms,segment_ms,total_ms\n");
    for (name, j, timing) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            name,
            j,
            timing.preprocess_ms_per_image,
            timing.segment_ms_per_image,
            timing.total_ms_per_image
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Voting
// ---------------------------------------------------------------------------

/// Majority vote over member predictions. Each member judges the frame
/// extracted with its own feature spec; the vote mask is the majority of the
/// members' hard labels (ties toward cloud) and the reported probability is
/// the fraction of cloud votes.
pub fn vote(
    members: &[&SegModel],
    features_per_member: &[&FeatureFrame],
) -> Result<(Vec<f64>, Grid<u8>)> {
    if members.is_empty() || members.len() != features_per_member.len() {
        return Err(Error::Config(
            "vote needs one feature frame per member model".into(),
        ));
    }
    let rows = features_per_member[0].rows();
    let cols = features_per_member[0].cols();
    let n = rows * cols;
    let mut votes = vec![0usize; n];
    for (model, features) in members.iter().zip(features_per_member) {
        if features.rows() != rows || features.cols() != cols {
            return Err(Error::Config("member frames must share the image shape".into()));
        }
        let (_, mask) = model.predict_frame(features)?;
        for (v, &m) in votes.iter_mut().zip(mask.data()) {
            *v += m as usize;
        }
    }
    let count = members.len();
    let probability: Vec<f64> = votes.iter().map(|&v| v as f64 / count as f64).collect();
    let mask = Grid::from_vec(
        rows,
        cols,
        probability.iter().map(|&p| u8::from(p >= 0.5)).collect(),
    );
    Ok((probability, mask))
}
