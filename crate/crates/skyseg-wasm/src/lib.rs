//! Browser demo: synthesize IR sky scenes, run any of the segmentation
//! models on them and sweep the decision prior, all client-side.
//!
//! Build with `wasm-pack build --target web` (or `cargo build --target
//! wasm32-unknown-unknown` plus `wasm-bindgen`); `www/index.html` is the
//! single-page frontend.

use wasm_bindgen::prelude::*;

use skyseg::evaluation::{
    default_lambda_grid, roc_select_lambda, roc_sweep, ConfusionMatrix,
};
use skyseg::features::{extract, FeatureFamily, FeatureFrame, FeatureSpec, Neighborhood};
use skyseg::grid::Grid;
use skyseg::imaging::Split;
use skyseg::model::{train, ModelFamily, TrainConfig};
use skyseg::preprocess::Preprocessor;
use skyseg::synth::{synthesize, SceneParams};

fn now_ms() -> f64 {
    #[cfg(target_arch = "wasm32")]
    {
        js_sys::Date::now()
    }
    #[cfg(not(target_arch = "wasm32"))]
    {
        use std::time::{SystemTime, UNIX_EPOCH};
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs_f64()
            * 1e3
    }
}

fn preset(name: &str) -> Result<SceneParams, JsError> {
    match name {
        "well-separated" => Ok(SceneParams::well_separated()),
        "noisy-boundary" => Ok(SceneParams::noisy_boundary()),
        other => Err(JsError::new(&format!("unknown scene preset `{other}`"))),
    }
}

struct Prepared {
    frames: Vec<FeatureFrame>,
    truths: Vec<Grid<u8>>,
    splits: Vec<Split>,
    derived_delta: Vec<Grid<f64>>,
    derived: Vec<skyseg::preprocess::DerivedFrame>,
}

/// Synthesizes a small dataset (5 train / 3 test) and derives everything the
/// demo needs.
fn prepare(seed: u64, scene: &str, spec: FeatureSpec) -> Result<Prepared, JsError> {
    let params = preset(scene)?;
    let data = synthesize(seed, 5, 3, &params);
    let entries = data.to_loaded_entries();
    let mut pre = Preprocessor::new();
    pre.calibrate(&entries);
    let mut frames = Vec::new();
    let mut truths = Vec::new();
    let mut splits = Vec::new();
    let mut derived_delta = Vec::new();
    let mut derived_all = Vec::new();
    for entry in &entries {
        let derived = pre
            .derive(&entry.frame, &entry.weather, entry.prev.as_ref())
            .map_err(|e| JsError::new(&e.to_string()))?;
        let mut features = extract(&derived, &spec).map_err(|e| JsError::new(&e.to_string()))?;
        features
            .attach_labels(entry.label.as_ref().expect("synthetic labels"))
            .map_err(|e| JsError::new(&e.to_string()))?;
        frames.push(features);
        truths.push(entry.label.as_ref().unwrap().grid().clone());
        splits.push(entry.split);
        derived_delta.push(derived.delta_temp.clone());
        derived_all.push(derived);
    }
    Ok(Prepared {
        frames,
        truths,
        splits,
        derived_delta,
        derived: derived_all,
    })
}

// ---------------------------------------------------------------------------
// Rendering helpers (plain Rust, unit-tested natively)
// ---------------------------------------------------------------------------

/// Five-stop heat colormap for scalar fields, `t` in [0, 1].
pub fn heat_color(t: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [8.0, 6.0, 36.0]),
        (0.25, [90.0, 18.0, 110.0]),
        (0.5, [187.0, 55.0, 84.0]),
        (0.75, [243.0, 120.0, 25.0]),
        (1.0, [252.0, 254.0, 164.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut color = STOPS[0].1;
    for pair in STOPS.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t >= t0 && t <= t1 {
            let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            color = [
                c0[0] + w * (c1[0] - c0[0]),
                c0[1] + w * (c1[1] - c0[1]),
                c0[2] + w * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    [color[0] as u8, color[1] as u8, color[2] as u8]
}

/// Colormaps a scalar grid into RGBA, scaling between its own min and max.
pub fn render_field(grid: &Grid<f64>) -> Vec<u8> {
    let min = grid.min();
    let max = grid.max();
    let range = (max - min).max(1e-12);
    let mut rgba = Vec::with_capacity(grid.len() * 4);
    for v in grid.data() {
        let [r, g, b] = heat_color((v - min) / range);
        rgba.extend_from_slice(&[r, g, b, 255]);
    }
    rgba
}

/// Composites a segmentation over a base field: predicted cloud pixels are
/// lightened, false positives tinted red, false negatives tinted blue.
pub fn render_segmentation(base: &Grid<f64>, mask: &Grid<u8>, truth: &Grid<u8>) -> Vec<u8> {
    let mut rgba = render_field(base);
    for p in 0..mask.len() {
        let (m, t) = (mask.data()[p], truth.data()[p]);
        let px = &mut rgba[p * 4..p * 4 + 4];
        match (m, t) {
            (1, 1) => {
                for c in px.iter_mut().take(3) {
                    *c = (*c as f64 * 0.45 + 140.0) as u8;
                }
            }
            (1, 0) => {
                px[0] = 235;
                px[1] = 60;
                px[2] = 60;
            }
            (0, 1) => {
                px[0] = 70;
                px[1] = 110;
                px[2] = 235;
            }
            _ => {}
        }
    }
    rgba
}

fn parse_spec(features: &str, neighborhood: &str) -> Result<FeatureSpec, JsError> {
    Ok(FeatureSpec {
        family: FeatureFamily::parse(features).map_err(|e| JsError::new(&e.to_string()))?,
        neighborhood: Neighborhood::parse(neighborhood)
            .map_err(|e| JsError::new(&e.to_string()))?,
        standardize: false,
    })
}

// ---------------------------------------------------------------------------
// Exported operations
// ---------------------------------------------------------------------------

/// One rendered frame.
#[wasm_bindgen]
pub struct FrameView {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    cloud_fraction: f64,
}

#[wasm_bindgen]
impl FrameView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn cloud_fraction(&self) -> f64 {
        self.cloud_fraction
    }
}

/// Renders one derived channel of one frame of the synthetic scene.
/// Channels: raw | corrected | delta | intensity | flow | truth.
#[wasm_bindgen]
pub fn render_scene(
    seed: u64,
    scene: &str,
    channel: &str,
    frame_index: usize,
) -> Result<FrameView, JsError> {
    let spec = FeatureSpec::new(FeatureFamily::X3, Neighborhood::Single);
    let prepared = prepare(seed, scene, spec)?;
    let k = frame_index % prepared.frames.len();
    let derived = &prepared.derived[k];
    let truth = &prepared.truths[k];
    let field = match channel {
        "raw" => derived.temp_raw.clone(),
        "corrected" => derived.temp_corrected.clone(),
        "delta" => derived.delta_temp.clone(),
        "intensity" => derived.intensity.map(|&v| v as f64),
        "flow" => skyseg::preprocess::flow_magnitude(&derived.flow),
        "truth" => truth.map(|&v| v as f64),
        other => return Err(JsError::new(&format!("unknown channel `{other}`"))),
    };
    Ok(FrameView {
        width: field.cols(),
        height: field.rows(),
        rgba: render_field(&field),
        cloud_fraction: truth.data().iter().map(|&v| v as usize).sum::<usize>() as f64
            / truth.len() as f64,
    })
}

/// Segmentation outcome for one test frame.
#[wasm_bindgen]
pub struct SegmentationView {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    j_stat: f64,
    sensitivity: f64,
    specificity: f64,
    accuracy: f64,
    lambda: f64,
    train_ms: f64,
    segment_ms: f64,
}

#[wasm_bindgen]
impl SegmentationView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn j_stat(&self) -> f64 {
        self.j_stat
    }

    #[wasm_bindgen(getter)]
    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    #[wasm_bindgen(getter)]
    pub fn specificity(&self) -> f64 {
        self.specificity
    }

    #[wasm_bindgen(getter)]
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[wasm_bindgen(getter)]
    pub fn train_ms(&self) -> f64 {
        self.train_ms
    }

    #[wasm_bindgen(getter)]
    pub fn segment_ms(&self) -> f64 {
        self.segment_ms
    }
}

fn build_model(
    prepared: &Prepared,
    family: ModelFamily,
    spec: FeatureSpec,
    beta: f64,
    lambda: Option<f64>,
) -> Result<(skyseg::model::SegModel, f64), JsError> {
    let train_frames: Vec<&FeatureFrame> = prepared
        .frames
        .iter()
        .zip(&prepared.splits)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(f, _)| f)
        .collect();
    let mut config = TrainConfig::new(family, spec);
    config.gamma = match family {
        ModelFamily::Gpc => 100.0,
        _ => 0.5,
    };
    config.beta = beta;
    config.schedule.steps = 30;
    let start = now_ms();
    let mut model = train(&config, &train_frames).map_err(|e| JsError::new(&e.to_string()))?;
    model.lambda = match lambda {
        Some(l) => l,
        None => {
            let mut scores = Vec::new();
            let mut truth = Vec::new();
            for frame in &train_frames {
                scores.extend(
                    model
                        .score_frame(frame)
                        .map_err(|e| JsError::new(&e.to_string()))?,
                );
                truth.extend_from_slice(frame.labels.as_ref().unwrap());
            }
            roc_select_lambda(&scores, &truth, &default_lambda_grid()).lambda
        }
    };
    Ok((model, now_ms() - start))
}

/// Trains the chosen family on the scene's training frames and segments one
/// test frame. `lambda <= 0` selects the prior automatically on the training
/// scores.
#[wasm_bindgen]
pub fn run_segmentation(
    seed: u64,
    scene: &str,
    family: &str,
    features: &str,
    neighborhood: &str,
    beta: f64,
    lambda: f64,
    test_index: usize,
) -> Result<SegmentationView, JsError> {
    let family = ModelFamily::parse(family).map_err(|e| JsError::new(&e.to_string()))?;
    let spec = parse_spec(features, neighborhood)?;
    let prepared = prepare(seed, scene, spec)?;
    let lambda_arg = if lambda > 0.0 { Some(lambda) } else { None };
    let (model, train_ms) = build_model(&prepared, family, spec, beta, lambda_arg)?;

    let test_indices: Vec<usize> = prepared
        .splits
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Split::Test)
        .map(|(k, _)| k)
        .collect();
    let k = test_indices[test_index % test_indices.len()];
    let start = now_ms();
    let (_, mask) = model
        .predict_frame(&prepared.frames[k])
        .map_err(|e| JsError::new(&e.to_string()))?;
    let segment_ms = now_ms() - start;

    let truth = &prepared.truths[k];
    let cm = ConfusionMatrix::from_masks(&mask, truth);
    Ok(SegmentationView {
        width: mask.cols(),
        height: mask.rows(),
        rgba: render_segmentation(&prepared.derived_delta[k], &mask, truth),
        j_stat: cm.j_stat(),
        sensitivity: cm.sensitivity(),
        specificity: cm.specificity(),
        accuracy: cm.accuracy(),
        lambda: model.lambda,
        train_ms,
        segment_ms,
    })
}

/// Decision-prior sweep of one model over the pooled test frames.
#[wasm_bindgen]
pub struct RocView {
    lambdas: Vec<f64>,
    false_pos_rates: Vec<f64>,
    true_pos_rates: Vec<f64>,
    j_stats: Vec<f64>,
    best_lambda: f64,
    best_j: f64,
}

#[wasm_bindgen]
impl RocView {
    #[wasm_bindgen(getter)]
    pub fn lambdas(&self) -> Vec<f64> {
        self.lambdas.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn false_pos_rates(&self) -> Vec<f64> {
        self.false_pos_rates.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn true_pos_rates(&self) -> Vec<f64> {
        self.true_pos_rates.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn j_stats(&self) -> Vec<f64> {
        self.j_stats.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn best_lambda(&self) -> f64 {
        self.best_lambda
    }

    #[wasm_bindgen(getter)]
    pub fn best_j(&self) -> f64 {
        self.best_j
    }
}

#[wasm_bindgen]
pub fn lambda_sweep(
    seed: u64,
    scene: &str,
    family: &str,
    features: &str,
    neighborhood: &str,
    beta: f64,
) -> Result<RocView, JsError> {
    let family = ModelFamily::parse(family).map_err(|e| JsError::new(&e.to_string()))?;
    let spec = parse_spec(features, neighborhood)?;
    let prepared = prepare(seed, scene, spec)?;
    let (model, _) = build_model(&prepared, family, spec, beta, Some(1.0))?;

    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for (k, split) in prepared.splits.iter().enumerate() {
        if *split != Split::Test {
            continue;
        }
        scores.extend(
            model
                .score_frame(&prepared.frames[k])
                .map_err(|e| JsError::new(&e.to_string()))?,
        );
        truth.extend_from_slice(prepared.truths[k].data());
    }
    let grid = default_lambda_grid();
    let points = roc_sweep(&scores, &truth, &grid);
    let best = roc_select_lambda(&scores, &truth, &grid);
    Ok(RocView {
        lambdas: points.iter().map(|p| p.lambda).collect(),
        false_pos_rates: points.iter().map(|p| p.false_pos_rate).collect(),
        true_pos_rates: points.iter().map(|p| p.true_pos_rate).collect(),
        j_stats: points.iter().map(|p| p.j_stat).collect(),
        best_lambda: best.lambda,
        best_j: best.j_stat,
    })
}
