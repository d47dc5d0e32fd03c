//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test -p skyseg --test acceptance -- --nocapture`.

use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skyseg::discriminative::{
    fit_gpc, fit_rrc, fit_svc, gpc_log_posterior, rrc_objective, svc_objective,
};
use skyseg::evaluation::{
    benchmark, default_lambda_grid, lambda_grid_from_scores, loo_cross_validate,
    roc_select_lambda, vote, ConfusionMatrix, GridSpec,
};
use skyseg::features::{extract, FeatureFamily, FeatureFrame, FeatureSpec, Neighborhood, SampleSet};
use skyseg::generative::{fit_gmm, kmeans};
use skyseg::grid::Grid;
use skyseg::imaging::{LoadedEntry, Split};
use skyseg::linalg::{dot, Mat};
use skyseg::model::{decide, train, ModelFamily, SegModel, TrainConfig};
use skyseg::mrf::{fit_supervised, CliqueOrder, PreparedMrf};
use skyseg::poly::PolyMap;
use skyseg::preprocess::Preprocessor;
use skyseg::synth::{synthesize, SceneParams};

/// Heavy criteria run serialized so the timing measurements stay clean.
static HEAVY: Mutex<()> = Mutex::new(());

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Shared synthetic scenes (7 train / 5 test, mirroring the split sizes)
// ---------------------------------------------------------------------------

struct Scene {
    entries: Vec<LoadedEntry>,
    preprocessor: Preprocessor,
    /// Features per spec, extracted once: (spec, per-entry frames).
    cache: Mutex<Vec<(FeatureSpec, Vec<FeatureFrame>)>>,
}

impl Scene {
    fn build(seed: u64, params: &SceneParams) -> Scene {
        let data = synthesize(seed, 7, 5, params);
        let entries = data.to_loaded_entries();
        let mut preprocessor = Preprocessor::new();
        preprocessor.calibrate(&entries);
        Scene {
            entries,
            preprocessor,
            cache: Mutex::new(Vec::new()),
        }
    }

    fn features(&self, spec: FeatureSpec) -> Vec<FeatureFrame> {
        let mut cache = self.cache.lock().unwrap();
        if let Some((_, frames)) = cache
            .iter()
            .find(|(s, _)| s.family == spec.family && s.neighborhood == spec.neighborhood)
        {
            return frames.clone();
        }
        let frames: Vec<FeatureFrame> = self
            .entries
            .iter()
            .map(|e| {
                let derived = self
                    .preprocessor
                    .derive(&e.frame, &e.weather, e.prev.as_ref())
                    .expect("derive");
                let mut f = extract(&derived, &spec).expect("extract");
                f.attach_labels(e.label.as_ref().expect("synthetic labels")).expect("labels");
                f
            })
            .collect();
        cache.push((spec, frames.clone()));
        frames
    }

    fn split_indices(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(k, _)| k)
            .collect()
    }
}

fn well_scene() -> &'static Scene {
    static SCENE: OnceLock<Scene> = OnceLock::new();
    SCENE.get_or_init(|| Scene::build(500, &SceneParams::well_separated()))
}

fn noisy_scene() -> &'static Scene {
    static SCENE: OnceLock<Scene> = OnceLock::new();
    SCENE.get_or_init(|| Scene::build(640, &SceneParams::noisy_boundary()))
}

/// Train with the given config on the scene's train split, select the
/// decision prior on the pooled train scores, and return the aggregate test
/// J statistic.
fn train_and_test_j(scene: &Scene, config: &TrainConfig) -> (SegModel, f64) {
    let frames = scene.features(config.feature_spec);
    let train_idx = scene.split_indices(Split::Train);
    let test_idx = scene.split_indices(Split::Test);
    let train_frames: Vec<&FeatureFrame> = train_idx.iter().map(|&k| &frames[k]).collect();
    let mut model = train(config, &train_frames).expect("training");

    // Decision prior from the pooled training scores.
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for &k in &train_idx {
        scores.extend(model.score_frame(&frames[k]).expect("scoring"));
        truth.extend_from_slice(frames[k].labels.as_ref().unwrap());
    }
    let choice = roc_select_lambda(&scores, &truth, &default_lambda_grid());
    model.lambda = choice.lambda;

    let mut aggregate = ConfusionMatrix::default();
    for &k in &test_idx {
        let (_, mask) = model.predict_frame(&frames[k]).expect("prediction");
        let cm = ConfusionMatrix::from_labels(mask.data(), frames[k].labels.as_ref().unwrap());
        aggregate.merge(&cm);
    }
    (model, aggregate.j_stat())
}

// ---------------------------------------------------------------------------
// Criterion 1: polynomial map kernel identity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_kernel_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for order in [1u32, 2] {
        for d in [2usize, 3, 27] {
            let map = PolyMap::new(d, order).unwrap();
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            for _ in 0..1000 {
                for v in a.iter_mut().chain(b.iter_mut()) {
                    *v = rng.random_range(-1.0..1.0);
                }
                let mapped = dot(&map.expand(&a), &map.expand(&b));
                let kernel = (1.0 + dot(&a, &b)).powi(order as i32);
                worst = worst.max((mapped - kernel).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-9, "worst kernel deviation {worst}");
    assert!(elapsed < 1.0, "kernel identity took {elapsed:.3} s");
    println!(
        "ACCEPTANCE 1 PASS - kernel identity: worst |phi.phi' - (1+x.x')^n| = {worst:.2e} over 6000 pairs in {elapsed:.3} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: solver oracles
// ---------------------------------------------------------------------------

fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(n, d + 1);
    for r in 0..n {
        m.row_mut(r)[0] = 1.0;
        for c in 1..=d {
            m.row_mut(r)[c] = normal(rng);
        }
    }
    m
}

/// Steepest descent with exact line search on the ridge objective.
fn rrc_descent_oracle(design: &Mat, targets: &[f64], gamma: f64) -> Vec<f64> {
    let p = design.cols();
    let mut a = design.gram();
    a.add_diag(gamma);
    let b = design.t_matvec(targets);
    let mut w = vec![0.0; p];
    for _ in 0..300_000 {
        let aw = a.matvec(&w);
        let grad: Vec<f64> = aw.iter().zip(&b).map(|(x, y)| 2.0 * (x - y)).collect();
        let gg = dot(&grad, &grad);
        if gg.sqrt() < 1e-13 * (1.0 + dot(&b, &b).sqrt()) {
            break;
        }
        let ag = a.matvec(&grad);
        let alpha = gg / (2.0 * dot(&grad, &ag));
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= alpha * gi;
        }
    }
    w
}

/// Backtracking gradient descent on the squared-hinge objective.
fn svc_descent_oracle(design: &Mat, labels: &[f64], cost: f64) -> Vec<f64> {
    let p = design.cols();
    let mut w = vec![0.0; p];
    let mut value = svc_objective(design, labels, cost, &w);
    for _ in 0..100_000 {
        // Gradient of the squared hinge.
        let fitted = design.matvec(&w);
        let mut grad = w.clone();
        for i in 0..design.rows() {
            if 1.0 - labels[i] * fitted[i] > 0.0 {
                let scale = 2.0 * cost * (fitted[i] - labels[i]);
                for (g, v) in grad.iter_mut().zip(design.row(i)) {
                    *g += scale * v;
                }
            }
        }
        let gn = dot(&grad, &grad).sqrt();
        if gn < 1e-11 * (1.0 + cost) {
            break;
        }
        let mut alpha = 1.0;
        loop {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - alpha * gi).collect();
            let cv = svc_objective(design, labels, cost, &cand);
            if cv < value {
                w = cand;
                value = cv;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-18 {
                return w;
            }
        }
    }
    w
}

/// Backtracking gradient ascent to the GPC posterior mode.
fn gpc_ascent_oracle(design: &Mat, targets: &[f64], gamma: f64) -> Vec<f64> {
    let p = design.cols();
    let mut w = vec![0.0; p];
    let mut value = gpc_log_posterior(design, targets, gamma, &w);
    for _ in 0..200_000 {
        let fitted = design.matvec(&w);
        let errors: Vec<f64> = fitted
            .iter()
            .zip(targets)
            .map(|(t, y)| y - 1.0 / (1.0 + (-t).exp()))
            .collect();
        let mut grad = design.t_matvec(&errors);
        for (g, wi) in grad.iter_mut().zip(&w) {
            *g -= wi / gamma;
        }
        if dot(&grad, &grad).sqrt() < 1e-11 * (1.0 + design.rows() as f64) {
            break;
        }
        let mut alpha = 1.0;
        loop {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi + alpha * gi).collect();
            let cv = gpc_log_posterior(design, targets, gamma, &cand);
            if cv > value {
                w = cand;
                value = cv;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-18 {
                return w;
            }
        }
    }
    w
}

#[test]
fn acceptance_2_solver_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    // RRC: closed form vs iterative minimizer, 20 random problems.
    let mut worst_rrc: f64 = 0.0;
    for k in 0..20 {
        let d = 2 + (k % 9); // d <= 10
        let design = random_design(&mut rng, 500, d);
        let targets: Vec<f64> = (0..500).map(|_| rng.random::<f64>().round()).collect();
        let gamma = [0.1, 1.0, 5.0][k % 3];
        let closed = fit_rrc(&design, &targets, gamma).unwrap();
        let oracle = rrc_descent_oracle(&design, &targets, gamma);
        for (c, o) in closed.iter().zip(&oracle) {
            worst_rrc = worst_rrc.max((c - o).abs());
        }
        let f_closed = rrc_objective(&design, &targets, gamma, &closed);
        let f_oracle = rrc_objective(&design, &targets, gamma, &oracle);
        assert!(
            (f_closed - f_oracle).abs() <= 1e-6 * (1.0 + f_oracle.abs()),
            "problem {k}: objectives {f_closed} vs {f_oracle}"
        );
    }
    assert!(worst_rrc <= 1e-6, "worst RRC weight deviation {worst_rrc}");

    // SVC 1-d: dense grid oracle.
    let design_1d = Mat::from_vec(2, 1, vec![1.0, -1.0]);
    let labels_1d = vec![1.0, -1.0];
    for cost in [0.5, 10.0, 1000.0] {
        let fit = fit_svc(&design_1d, &labels_1d, cost).unwrap();
        let mut best = f64::INFINITY;
        let mut w = -2.0;
        while w <= 2.0 {
            best = best.min(svc_objective(&design_1d, &labels_1d, cost, &[w]));
            w += 1e-5;
        }
        assert!(
            (fit.objective - best).abs() <= 1e-6 * (1.0 + best.abs()),
            "SVC 1-d cost {cost}: {} vs {best}",
            fit.objective
        );
    }

    // SVC 2-d: first-order oracle on random problems.
    for k in 0..5 {
        let n = 40;
        let mut design = Mat::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for r in 0..n {
            let y = if r % 2 == 0 { 1.0 } else { -1.0 };
            design.row_mut(r)[0] = y * 1.5 + normal(&mut rng);
            design.row_mut(r)[1] = normal(&mut rng);
            labels.push(y);
        }
        let cost = [0.5, 2.0, 20.0][k % 3];
        let fit = fit_svc(&design, &labels, cost).unwrap();
        let oracle = svc_descent_oracle(&design, &labels, cost);
        let f_oracle = svc_objective(&design, &labels, cost, &oracle);
        assert!(
            (fit.objective - f_oracle).abs() <= 1e-6 * (1.0 + f_oracle.abs()),
            "SVC 2-d problem {k}: {} vs {f_oracle}",
            fit.objective
        );
    }

    // GPC: Newton MAP vs gradient-ascent MAP.
    let mut worst_gpc: f64 = 0.0;
    for k in 0..5 {
        let design = random_design(&mut rng, 200, 3);
        let targets: Vec<f64> = (0..200)
            .map(|r| f64::from(dot(design.row(r), &[0.3, 1.2, -0.8, 0.5]) + 0.4 * normal(&mut rng) > 0.0))
            .collect();
        let gamma = [0.5, 2.0, 10.0][k % 3];
        let newton = fit_gpc(&design, &targets, gamma).unwrap();
        let ascent = gpc_ascent_oracle(&design, &targets, gamma);
        for (n_w, a_w) in newton.weights.iter().zip(&ascent) {
            worst_gpc = worst_gpc.max((n_w - a_w).abs());
        }
    }
    assert!(worst_gpc <= 1e-6, "worst GPC MAP deviation {worst_gpc}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "solver oracles took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 2 PASS - solver oracles: RRC dev {worst_rrc:.2e}, GPC dev {worst_gpc:.2e}, SVC objectives within 1e-6, in {elapsed:.1} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: monotonicity suites
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_monotonicity() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();

    // GMM EM log-likelihood, 100 seeds.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for seed in 0..100u64 {
        let n = 120;
        let data: Vec<f64> = (0..n * 2)
            .map(|k| normal(&mut rng) + if k % 3 == 0 { 2.0 } else { 0.0 })
            .collect();
        let samples = SampleSet {
            dim: 2,
            data,
            labels: None,
        };
        let mixture = fit_gmm(&samples, 1e-6, seed).unwrap();
        for pair in mixture.loglik_trace.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9,
                "seed {seed}: log-likelihood fell from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }

    // k-means inertia, 100 seeds.
    for seed in 0..100u64 {
        let n = 150;
        let data: Vec<f64> = (0..n * 3).map(|_| 2.0 * normal(&mut rng)).collect();
        let samples = SampleSet {
            dim: 3,
            data,
            labels: None,
        };
        let fit = kmeans(&samples, 2, seed).unwrap();
        for pair in fit.inertia_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "seed {seed}: inertia rose");
        }
    }

    // ICM energy per sweep, 100 synthetic frames.
    let params = SceneParams {
        rows: 30,
        cols: 40,
        ..SceneParams::well_separated()
    };
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::Single);
    for seed in 0..100u64 {
        let data = synthesize(1000 + seed, 1, 0, &params);
        let entries = data.to_loaded_entries();
        let pre = Preprocessor::new();
        let derived = pre
            .derive(&entries[0].frame, &entries[0].weather, None)
            .unwrap();
        let mut features = extract(&derived, &spec).unwrap();
        features
            .attach_labels(entries[0].label.as_ref().unwrap())
            .unwrap();
        let samples = SampleSet::from_frames(&[&features]).unwrap();
        let Ok(model) = fit_supervised(&samples, 0.5, 1.0, CliqueOrder::FourConnected) else {
            continue; // frame came out single-class; no MRF to fit
        };
        let prepared = PreparedMrf::new(&model, &features).unwrap();
        // Random initial labels.
        let mut labels = Grid::fill(params.rows, params.cols, 0u8);
        for v in labels.data_mut() {
            *v = u8::from(rng.random::<f64>() < 0.5);
        }
        let mut energy = prepared.energy(&labels);
        for _ in 0..5 {
            prepared.icm_sweep(&mut labels);
            let next = prepared.energy(&labels);
            assert!(
                next <= energy + 1e-9 * energy.abs().max(1.0),
                "seed {seed}: energy rose from {energy} to {next}"
            );
            energy = next;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "monotonicity suites took {elapsed:.1} s");
    println!(
        "ACCEPTANCE 3 PASS - monotonicity: EM log-likelihood (100 seeds), k-means inertia (100 seeds), ICM energy (100 frames), in {elapsed:.1} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: ICM denoising
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_icm_denoising() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::Single);
    let mut total_isolated = 0usize;
    let mut total_corrected = 0usize;
    for seed in 0..10u64 {
        let data = synthesize(2000 + seed, 4, 0, &SceneParams::well_separated());
        let entries = data.to_loaded_entries();
        let mut pre = Preprocessor::new();
        pre.calibrate(&entries);
        for entry in entries.iter().filter(|e| {
            let f = e.label.as_ref().unwrap().cloud_fraction();
            f > 0.05 && f < 0.95
        }) {
            let derived = pre.derive(&entry.frame, &entry.weather, None).unwrap();
            let mut features = extract(&derived, &spec).unwrap();
            let truth = entry.label.as_ref().unwrap().grid().clone();
            features.attach_labels(entry.label.as_ref().unwrap()).unwrap();
            let samples = SampleSet::from_frames(&[&features]).unwrap();
            let model = fit_supervised(&samples, 0.5, 1.0, CliqueOrder::FourConnected).unwrap();
            let prepared = PreparedMrf::new(&model, &features).unwrap();

            // 10% salt-and-pepper corruption of the truth mask.
            let mut corrupted = truth.clone();
            let mut flipped = vec![false; truth.len()];
            for p in 0..truth.len() {
                if rng.random::<f64>() < 0.10 {
                    corrupted.data_mut()[p] = 1 - corrupted.data_mut()[p];
                    flipped[p] = true;
                }
            }
            let (rows, cols) = (truth.rows() as isize, truth.cols() as isize);
            let isolated: Vec<usize> = (0..truth.len())
                .filter(|&p| {
                    if !flipped[p] {
                        return false;
                    }
                    let (i, j) = (p as isize / cols, p as isize % cols);
                    [(-1, 0), (0, -1), (0, 1), (1, 0)].iter().all(|(di, dj)| {
                        let (ni, nj) = (i + di, j + dj);
                        ni < 0
                            || ni >= rows
                            || nj < 0
                            || nj >= cols
                            || !flipped[(ni * cols + nj) as usize]
                    })
                })
                .collect();

            let mut labels = corrupted;
            for _ in 0..5 {
                prepared.icm_sweep(&mut labels);
            }
            total_isolated += isolated.len();
            total_corrected += isolated
                .iter()
                .filter(|&&p| labels.data()[p] == truth.data()[p])
                .count();
        }
    }
    let rate = total_corrected as f64 / total_isolated as f64;
    assert!(
        rate >= 0.95,
        "only {total_corrected}/{total_isolated} isolated flips corrected ({rate:.3})"
    );
    println!(
        "ACCEPTANCE 4 PASS - denoising: {total_corrected}/{total_isolated} isolated flips corrected ({:.1}%) within 5 sweeps at beta = 1",
        rate * 100.0
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: end-to-end synthetic segmentation
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_end_to_end_segmentation() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();

    let scene = well_scene();
    let train_px: usize = scene
        .split_indices(Split::Train)
        .iter()
        .map(|&k| scene.entries[k].frame.rows() * scene.entries[k].frame.cols())
        .sum();
    let test_px: usize = scene
        .split_indices(Split::Test)
        .iter()
        .map(|&k| scene.entries[k].frame.rows() * scene.entries[k].frame.cols())
        .sum();
    assert_eq!(train_px, 33_600);
    assert_eq!(test_px, 24_000);

    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::First);
    let mut well_js = Vec::new();
    for family in [
        ModelFamily::Gda,
        ModelFamily::Rrc,
        ModelFamily::Svc,
        ModelFamily::Gpc,
        ModelFamily::IcmMrf,
    ] {
        let mut config = TrainConfig::new(family, spec);
        config.gamma = match family {
            ModelFamily::Gda => 0.5,
            ModelFamily::Rrc => 1.0,
            ModelFamily::Gpc => 100.0,
            ModelFamily::IcmMrf => 1.0,
            _ => 1.0,
        };
        config.cost = 1.0;
        config.beta = 0.5;
        let (_, j) = train_and_test_j(scene, &config);
        assert!(j >= 0.90, "{family:?} test J = {j:.4} on well-separated scenes");
        well_js.push((family, j));
    }

    // Noisy-boundary scenes: the unsupervised MRF must stay within 0.02 of
    // every non-MRF generative model.
    let noisy = noisy_scene();
    let mut generative_js = Vec::new();
    for family in [
        ModelFamily::Gda,
        ModelFamily::Nbc,
        ModelFamily::KMeans,
        ModelFamily::Gmm,
    ] {
        let standardize = family == ModelFamily::KMeans;
        let mut config = TrainConfig::new(family, spec.with_standardize(standardize));
        config.gamma = 0.5;
        config.seed = 11;
        let (_, j) = train_and_test_j(noisy, &config);
        generative_js.push((family, j));
    }
    let mut icm_config = TrainConfig::new(ModelFamily::IcmMrf, spec);
    icm_config.gamma = 1.0;
    icm_config.beta = 0.5;
    let (_, icm_j) = train_and_test_j(noisy, &icm_config);
    for (family, j) in &generative_js {
        assert!(
            icm_j >= j - 0.02,
            "ICM-MRF J {icm_j:.4} vs {family:?} J {j:.4} on noisy boundaries"
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "end-to-end took {elapsed:.1} s");
    let well_str = well_js
        .iter()
        .map(|(f, j)| format!("{}={j:.3}", f.as_str()))
        .collect::<Vec<_>>()
        .join(" ");
    let noisy_str = generative_js
        .iter()
        .map(|(f, j)| format!("{}={j:.3}", f.as_str()))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "ACCEPTANCE 5 PASS - end-to-end: well-separated [{well_str}] all >= 0.90; noisy [icm-mrf={icm_j:.3} vs {noisy_str}] within 0.02, in {elapsed:.1} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: timing ordering
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_timing_ordering() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let scene = well_scene();
    let test_entries: Vec<LoadedEntry> = scene
        .split_indices(Split::Test)
        .into_iter()
        .map(|k| scene.entries[k].clone())
        .collect();

    // Each model runs at a representative configuration (its strongest
    // feature set, as selected in practice); the comparison is the per-image
    // segmentation cost hierarchy, not absolute times.
    let make = |family: ModelFamily, spec: FeatureSpec| -> SegModel {
        let mut config = TrainConfig::new(family, spec);
        config.gamma = match family {
            ModelFamily::Gpc => 100.0,
            _ => 1.0,
        };
        config.beta = 0.5;
        let frames = scene.features(spec);
        let train_idx = scene.split_indices(Split::Train);
        let train_frames: Vec<&FeatureFrame> = train_idx.iter().map(|&k| &frames[k]).collect();
        train(&config, &train_frames).expect("training")
    };

    let rrc = make(
        ModelFamily::Rrc,
        FeatureSpec::new(FeatureFamily::X4, Neighborhood::Single),
    );
    let svc = make(
        ModelFamily::Svc,
        FeatureSpec::new(FeatureFamily::X4, Neighborhood::First),
    );
    let gpc = make(
        ModelFamily::Gpc,
        FeatureSpec::new(FeatureFamily::X4, Neighborhood::First),
    );
    let icm = make(
        ModelFamily::IcmMrf,
        FeatureSpec::new(FeatureFamily::X3, Neighborhood::First),
    );

    // Round-robin measurement with a minimum over rounds: transient CPU
    // contention from concurrently running test binaries then hits every
    // model alike instead of inflating whichever happened to run during a
    // burst. One warm-up round is discarded.
    let models = [&rrc, &svc, &gpc];
    let frames_per_model: Vec<Vec<FeatureFrame>> = models
        .iter()
        .map(|m| {
            let all = scene.features(m.feature_spec);
            scene
                .split_indices(Split::Test)
                .into_iter()
                .map(|k| all[k].clone())
                .collect()
        })
        .collect();
    let mut best = [f64::INFINITY; 3];
    for round in 0..15 {
        for (m, model) in models.iter().enumerate() {
            let start = Instant::now();
            for frame in &frames_per_model[m] {
                model.predict_frame(frame).expect("prediction");
            }
            let per_image =
                start.elapsed().as_secs_f64() * 1e3 / frames_per_model[m].len() as f64;
            if round > 0 {
                best[m] = best[m].min(per_image);
            }
        }
    }
    let [rrc_ms, svc_ms, gpc_ms] = best;
    // The per-frame unsupervised fit is orders of magnitude heavier; the
    // report-producing benchmark harness measures it directly.
    let icm_ms = benchmark(&icm, &test_entries, &scene.preprocessor, 3)
        .expect("benchmark")
        .segment_ms_per_image;

    assert!(
        rrc_ms < svc_ms && svc_ms < gpc_ms && gpc_ms < icm_ms,
        "ordering violated: rrc {rrc_ms:.3} svc {svc_ms:.3} gpc {gpc_ms:.3} icm {icm_ms:.3} ms"
    );
    assert!(
        icm_ms >= 10.0 * rrc_ms,
        "ICM-MRF only {:.1}x slower than RRC",
        icm_ms / rrc_ms
    );
    println!(
        "ACCEPTANCE 6 PASS - timing per image: rrc {rrc_ms:.3} ms < svc {svc_ms:.3} ms < gpc {gpc_ms:.3} ms < icm-mrf {icm_ms:.1} ms (ratio {:.0}x)",
        icm_ms / rrc_ms
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: voting
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_voting() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let scene = well_scene();
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::First);
    let frames = scene.features(spec);
    let test_idx = scene.split_indices(Split::Test);

    let mut members = Vec::new();
    let mut member_js = Vec::new();
    for family in [ModelFamily::Rrc, ModelFamily::Svc, ModelFamily::IcmMrf] {
        let mut config = TrainConfig::new(family, spec);
        config.gamma = 1.0;
        config.beta = 0.5;
        let (model, j) = train_and_test_j(scene, &config);
        members.push(model);
        member_js.push((family, j));
    }

    let member_refs: Vec<&SegModel> = members.iter().collect();
    let mut aggregate = ConfusionMatrix::default();
    for &k in &test_idx {
        let frame_refs: Vec<&FeatureFrame> = vec![&frames[k]; members.len()];
        let (_, mask) = vote(&member_refs, &frame_refs).expect("vote");
        aggregate.merge(&ConfusionMatrix::from_labels(
            mask.data(),
            frames[k].labels.as_ref().unwrap(),
        ));
    }
    let vote_j = aggregate.j_stat();
    let best = member_js
        .iter()
        .map(|(_, j)| *j)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        vote_j >= best - 0.01,
        "vote J {vote_j:.4} vs best member {best:.4}"
    );
    let members_str = member_js
        .iter()
        .map(|(f, j)| format!("{}={j:.3}", f.as_str()))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "ACCEPTANCE 7 PASS - voting: {{rrc, svc, icm-mrf}} J = {vote_j:.3} vs members [{members_str}]"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: ROC / decision-prior oracle equivalence
// ---------------------------------------------------------------------------

/// Independent enumeration over distinct score thresholds.
fn brute_force_best_j(scores: &[f64], truth: &[u8]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let mut best = f64::NEG_INFINITY;
    for &t in &thresholds {
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&s, &y) in scores.iter().zip(truth) {
            match (u8::from(s >= t), y) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 0) => tn += 1,
                (0, 1) => fn_ += 1,
                _ => unreachable!(),
            }
        }
        let sens = tp as f64 / (tp + fn_) as f64;
        let spec = tn as f64 / (tn + fp) as f64;
        best = best.max(sens + spec - 1.0);
    }
    best
}

#[test]
fn acceptance_8_roc_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut checked = 0;
    while checked < 50 {
        let n = 50 + (checked * 37) % 400;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let truth: Vec<u8> = scores
            .iter()
            .map(|&s| u8::from(rng.random::<f64>() < 0.2 + 0.6 * s))
            .collect();
        if truth.iter().all(|&t| t == 0) || truth.iter().all(|&t| t == 1) {
            continue;
        }
        let choice = roc_select_lambda(&scores, &truth, &lambda_grid_from_scores(&scores));
        let oracle = brute_force_best_j(&scores, &truth);
        assert_eq!(
            choice.j_stat, oracle,
            "set {checked}: selected J {} vs enumerated {}",
            choice.j_stat, oracle
        );
        checked += 1;
    }
    println!(
        "ACCEPTANCE 8 PASS - ROC/prior selection equals exhaustive threshold enumeration exactly on 50 score sets"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: optional real-data reproduction
// ---------------------------------------------------------------------------

#[test]
fn acceptance_9_real_data_optional() {
    let Ok(manifest_path) = std::env::var("SKYSEG_REAL_DATA") else {
        println!(
            "ACCEPTANCE 9 SKIP - real dataset not mounted (set SKYSEG_REAL_DATA=<manifest.csv> to enable)"
        );
        return;
    };
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let manifest =
        skyseg::imaging::manifest::load_manifest(std::path::Path::new(&manifest_path)).unwrap();
    let dataset = manifest.load().unwrap();
    let mut preprocessor = Preprocessor::new();
    preprocessor.calibrate(&dataset.entries);

    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::First);
    let frames: Vec<FeatureFrame> = dataset
        .entries
        .iter()
        .map(|e| {
            let derived = preprocessor
                .derive(&e.frame, &e.weather, e.prev.as_ref())
                .unwrap();
            let mut f = extract(&derived, &spec).unwrap();
            if let Some(label) = &e.label {
                f.attach_labels(label).unwrap();
            }
            f
        })
        .collect();
    let train_idx: Vec<usize> = dataset
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Train)
        .map(|(k, _)| k)
        .collect();
    let test_idx: Vec<usize> = dataset
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Test)
        .map(|(k, _)| k)
        .collect();
    let train_frames: Vec<FeatureFrame> = train_idx.iter().map(|&k| frames[k].clone()).collect();

    // Cross-validate the unsupervised MRF coupling and prior.
    let mut grid = GridSpec::new(ModelFamily::IcmMrf, vec![spec]);
    grid.betas = vec![0.5, 1.0, 2.0];
    let report = loo_cross_validate(&train_frames, &grid).unwrap();
    let icm_model = {
        let refs: Vec<&FeatureFrame> = train_frames.iter().collect();
        train(&report.best.config, &refs).unwrap()
    };
    let mut icm_agg = ConfusionMatrix::default();
    for &k in &test_idx {
        let (_, mask) = icm_model.predict_frame(&frames[k]).unwrap();
        icm_agg.merge(&ConfusionMatrix::from_labels(
            mask.data(),
            frames[k].labels.as_ref().expect("test labels"),
        ));
    }
    let icm_j = icm_agg.j_stat();
    assert!(
        (icm_j - 0.9255).abs() <= 0.03,
        "real-data ICM-MRF J {icm_j:.4} outside 0.9255 +/- 0.03"
    );

    // Voting with RRC and SVC members.
    let mut members = vec![icm_model];
    for family in [ModelFamily::Rrc, ModelFamily::Svc] {
        let mut config = TrainConfig::new(family, spec);
        config.gamma = 1.0;
        config.cost = 1.0;
        let refs: Vec<&FeatureFrame> = train_frames.iter().collect();
        let mut model = train(&config, &refs).unwrap();
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for f in &train_frames {
            scores.extend(model.score_frame(f).unwrap());
            truth.extend_from_slice(f.labels.as_ref().unwrap());
        }
        model.lambda = roc_select_lambda(&scores, &truth, &default_lambda_grid()).lambda;
        members.push(model);
    }
    let member_refs: Vec<&SegModel> = members.iter().collect();
    let mut vote_agg = ConfusionMatrix::default();
    for &k in &test_idx {
        let frame_refs: Vec<&FeatureFrame> = vec![&frames[k]; members.len()];
        let (_, mask) = vote(&member_refs, &frame_refs).unwrap();
        vote_agg.merge(&ConfusionMatrix::from_labels(
            mask.data(),
            frames[k].labels.as_ref().unwrap(),
        ));
    }
    let vote_j = vote_agg.j_stat();
    assert!(
        (vote_j - 0.9468).abs() <= 0.03,
        "real-data voting J {vote_j:.4} outside 0.9468 +/- 0.03"
    );
    println!(
        "ACCEPTANCE 9 PASS - real data: ICM-MRF J {icm_j:.4} (target 0.9255 +/- 0.03), voting J {vote_j:.4} (target 0.9468 +/- 0.03)"
    );
}

// ---------------------------------------------------------------------------
// Shared-scene smoke check (not a numbered criterion): the decision rule the
// suite relies on.
// ---------------------------------------------------------------------------

#[test]
fn decision_rule_boundary_cases() {
    assert_eq!(decide(0.5, 1.0), 1);
    assert_eq!(decide(1.0, 0.0), 0);
    assert_eq!(decide(0.25, 2.0), 1);
}
