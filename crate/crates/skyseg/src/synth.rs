//! Deterministic synthetic IR scene generator.
//!
//! Frames are built as background irradiance (known parameters) plus smooth
//! positive cloud blobs, a persistent lens stain pattern and Gaussian pixel
//! noise. The blob support doubles as the ground-truth label mask, and cloud
//! fields translate by a constant velocity between the previous and current
//! frame of each entry so optical flow has a known answer. Everything is a
//! pure function of `(seed, params)`.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::Grid;
use crate::imaging::manifest::{save_manifest, DatasetManifest, ManifestEntry, Split};
use crate::imaging::weather::{interpolate_weather, save_weather, WeatherRecord};
use crate::imaging::{io, IRFrame, LabelMask, LoadedEntry};
use crate::preprocess::AtmosphericParams;

/// Scene configuration. The two presets cover the regimes the models are
/// evaluated in: `well_separated` (strong clouds, little noise) and
/// `noisy_boundary` (weak clouds with soft edges in heavy noise).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub rows: usize,
    pub cols: usize,
    pub background: AtmosphericParams,
    /// Inclusive range of blob counts for partially cloudy frames.
    pub blob_count: (usize, usize),
    /// Blob peak amplitude range, Kelvin (positive: clouds are warmer than
    /// the tropopause background).
    pub blob_amplitude: (f64, f64),
    /// Blob width range, pixels.
    pub blob_sigma: (f64, f64),
    /// Fraction of the peak below which a blob stops contributing; the
    /// support above this level is the ground-truth mask.
    pub blob_support_level: f64,
    /// Pixel noise standard deviation, Kelvin.
    pub noise_sigma: f64,
    pub window_spots: usize,
    pub window_amplitude: (f64, f64),
    pub window_sigma: (f64, f64),
    /// Cloud motion `(rows, cols)` in px/frame.
    pub cloud_velocity: (f64, f64),
    pub air_temp_k: f64,
    pub dew_point_k: f64,
    pub pressure_pa: f64,
    pub humidity: f64,
    pub start_timestamp: i64,
    pub frame_interval_s: i64,
}

impl SceneParams {
    pub fn well_separated() -> Self {
        Self {
            rows: 60,
            cols: 80,
            background: AtmosphericParams {
                scatter_amplitude: 240.0,
                scatter_scale: 400.0,
                direct_amplitude: 300.0,
                direct_radius: 6.0,
                sun_row: 29.5,
                sun_col: 39.5,
            },
            blob_count: (2, 4),
            blob_amplitude: (10.0, 18.0),
            blob_sigma: (6.0, 10.0),
            blob_support_level: 0.35,
            noise_sigma: 0.3,
            window_spots: 4,
            window_amplitude: (1.0, 3.0),
            window_sigma: (2.0, 5.0),
            cloud_velocity: (0.0, 1.0),
            air_temp_k: 291.5,
            dew_point_k: 281.0,
            pressure_pa: 85_000.0,
            humidity: 0.45,
            start_timestamp: 1_650_000_000,
            frame_interval_s: 30,
        }
    }

    /// Solid cloud interiors with an ambiguous rim: the support cutoff sits
    /// below twice the noise level, so pixels near the blob edge cannot be
    /// classified from their own features alone.
    pub fn noisy_boundary() -> Self {
        Self {
            blob_amplitude: (7.0, 11.0),
            blob_sigma: (7.0, 12.0),
            blob_support_level: 0.25,
            noise_sigma: 1.2,
            ..Self::well_separated()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkyCondition {
    Clear,
    Cloudy,
    Overcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEntry {
    pub frame: IRFrame,
    /// Same scene one interval earlier (cloud field shifted back by the
    /// velocity); written as the `_prev` sibling file.
    pub prev: IRFrame,
    /// The generator's own blob support: the ground truth the label file is
    /// written from.
    pub stencil: Grid<u8>,
    pub label: LabelMask,
    pub condition: SkyCondition,
    pub split: Split,
    pub clear_sky: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub seed: u64,
    pub params: SceneParams,
    /// Injected lens stain pattern (oracle for the window model).
    pub window_pattern: Grid<f64>,
    pub weather: Vec<WeatherRecord>,
    pub entries: Vec<SynthEntry>,
}

struct Blob {
    row: f64,
    col: f64,
    sigma: f64,
    amplitude: f64,
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; uniforms shifted into (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn uniform_in(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

/// Split condition sequence: partially cloudy frames first, then one
/// clear-sky and one fully covered frame when the split is large enough.
fn conditions(n: usize) -> Vec<SkyCondition> {
    match n {
        0 => Vec::new(),
        1 => vec![SkyCondition::Cloudy],
        2 => vec![SkyCondition::Cloudy, SkyCondition::Clear],
        _ => {
            let mut v = vec![SkyCondition::Cloudy; n - 2];
            v.push(SkyCondition::Clear);
            v.push(SkyCondition::Overcast);
            v
        }
    }
}

fn window_pattern(rng: &mut ChaCha8Rng, params: &SceneParams) -> Grid<f64> {
    let mut w = Grid::fill(params.rows, params.cols, 0.0);
    for _ in 0..params.window_spots {
        let row = rng.random_range(0.0..params.rows as f64);
        let col = rng.random_range(0.0..params.cols as f64);
        let sigma = uniform_in(rng, params.window_sigma);
        let amplitude = uniform_in(rng, params.window_amplitude);
        for i in 0..params.rows {
            for j in 0..params.cols {
                let r2 = (i as f64 - row).powi(2) + (j as f64 - col).powi(2);
                let bump = amplitude * (-r2 / (2.0 * sigma * sigma)).exp();
                let v = *w.get(i, j);
                w.set(i, j, v + bump);
            }
        }
    }
    w
}

/// Cloud temperature offset and its support at a given shift of the blob
/// centers. A blob contributes only where it exceeds `support_level` of its
/// peak, so the support is exactly the label mask.
fn cloud_field(
    blobs: &[Blob],
    shift: (f64, f64),
    params: &SceneParams,
) -> (Grid<f64>, Grid<u8>) {
    let mut offset = Grid::fill(params.rows, params.cols, 0.0);
    let mut mask = Grid::fill(params.rows, params.cols, 0u8);
    for blob in blobs {
        let floor = params.blob_support_level * blob.amplitude;
        let (ci, cj) = (blob.row + shift.0, blob.col + shift.1);
        for i in 0..params.rows {
            for j in 0..params.cols {
                let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                let bump = blob.amplitude * (-r2 / (2.0 * blob.sigma * blob.sigma)).exp();
                if bump >= floor {
                    // Overlapping clouds take the warmer value.
                    if bump > *offset.get(i, j) {
                        offset.set(i, j, bump);
                    }
                    mask.set(i, j, 1);
                }
            }
        }
    }
    (offset, mask)
}

/// Smooth full-cover layer for overcast frames: positive everywhere.
fn overcast_field(rng: &mut ChaCha8Rng, params: &SceneParams) -> (Grid<f64>, Grid<u8>) {
    let base = 0.5 * (params.blob_amplitude.0 + params.blob_amplitude.1);
    let mut shape = Grid::fill(params.rows, params.cols, 0.0);
    for _ in 0..3 {
        let row = rng.random_range(0.0..params.rows as f64);
        let col = rng.random_range(0.0..params.cols as f64);
        let sigma = rng.random_range(18.0..30.0);
        for i in 0..params.rows {
            for j in 0..params.cols {
                let r2 = (i as f64 - row).powi(2) + (j as f64 - col).powi(2);
                let v = *shape.get(i, j);
                shape.set(i, j, v + (-r2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    let max = shape.max().max(1e-9);
    let offset = shape.map(|&s| base * (0.75 + 0.5 * s / max));
    let mask = Grid::fill(params.rows, params.cols, 1u8);
    (offset, mask)
}

fn build_frame(
    background: &Grid<f64>,
    window: &Grid<f64>,
    clouds: &Grid<f64>,
    rng: &mut ChaCha8Rng,
    noise_sigma: f64,
    timestamp: i64,
    sun_elevation: f64,
    sun_azimuth: f64,
) -> IRFrame {
    let n = background.len();
    let mut raw = Vec::with_capacity(n);
    for p in 0..n {
        let kelvin = background.data()[p]
            + window.data()[p]
            + clouds.data()[p]
            + noise_sigma * sample_normal(rng);
        raw.push(((kelvin * 100.0).round() as i64).max(1) as u32);
    }
    IRFrame::new(
        Grid::from_vec(background.rows(), background.cols(), raw),
        timestamp,
        sun_elevation,
        sun_azimuth,
    )
    .expect("synthetic raw values are positive")
}

/// Generates a dataset. Pure in `(seed, n_train, n_test, params)`.
pub fn synthesize(seed: u64, n_train: usize, n_test: usize, params: &SceneParams) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = window_pattern(&mut rng, params);
    let background = crate::preprocess::atmosphere_grid(&params.background, params.rows, params.cols);

    let n_frames = n_train + n_test;
    let last_t = params.start_timestamp + (n_frames.max(1) as i64 - 1) * params.frame_interval_s;
    let mut weather = Vec::new();
    let mut t = params.start_timestamp - 600;
    let mut k = 0.0;
    while t <= last_t + 600 {
        weather.push(WeatherRecord {
            timestamp: t,
            air_temp_k: params.air_temp_k + 0.05 * k,
            dew_point_k: params.dew_point_k + 0.03 * k,
            pressure_pa: params.pressure_pa - 2.0 * k,
            humidity: (params.humidity + 0.001 * k).min(1.0),
        });
        t += 600;
        k += 1.0;
    }

    let plan: Vec<(Split, SkyCondition)> = conditions(n_train)
        .into_iter()
        .map(|c| (Split::Train, c))
        .chain(conditions(n_test).into_iter().map(|c| (Split::Test, c)))
        .collect();

    let mut entries = Vec::with_capacity(plan.len());
    for (idx, (split, condition)) in plan.into_iter().enumerate() {
        let timestamp = params.start_timestamp + idx as i64 * params.frame_interval_s;
        let sun_elevation = 30.0 + 0.05 * idx as f64;
        let sun_azimuth = 160.0 + 0.4 * idx as f64;

        let (curr_clouds, prev_clouds, stencil) = match condition {
            SkyCondition::Clear => {
                let zero = Grid::fill(params.rows, params.cols, 0.0);
                let mask = Grid::fill(params.rows, params.cols, 0u8);
                (zero.clone(), zero, mask)
            }
            SkyCondition::Cloudy => {
                let count = if params.blob_count.1 == 0 {
                    0
                } else {
                    rng.random_range(params.blob_count.0..=params.blob_count.1)
                };
                let blobs: Vec<Blob> = (0..count)
                    .map(|_| Blob {
                        row: rng.random_range(4.0..params.rows as f64 - 4.0),
                        col: rng.random_range(4.0..params.cols as f64 - 4.0),
                        sigma: uniform_in(&mut rng, params.blob_sigma),
                        amplitude: uniform_in(&mut rng, params.blob_amplitude),
                    })
                    .collect();
                let (curr, mask) = cloud_field(&blobs, (0.0, 0.0), params);
                let (prev, _) = cloud_field(
                    &blobs,
                    (-params.cloud_velocity.0, -params.cloud_velocity.1),
                    params,
                );
                (curr, prev, mask)
            }
            SkyCondition::Overcast => {
                let (field, mask) = overcast_field(&mut rng, params);
                // A full-cover layer moves too, but its translation is
                // invisible at the frame border; reuse the same field.
                (field.clone(), field, mask)
            }
        };

        let prev = build_frame(
            &background,
            &window,
            &prev_clouds,
            &mut rng,
            params.noise_sigma,
            timestamp - params.frame_interval_s,
            sun_elevation,
            sun_azimuth,
        );
        let frame = build_frame(
            &background,
            &window,
            &curr_clouds,
            &mut rng,
            params.noise_sigma,
            timestamp,
            sun_elevation,
            sun_azimuth,
        );
        let label = LabelMask::new(stencil.clone()).expect("stencil is binary");
        entries.push(SynthEntry {
            frame,
            prev,
            stencil,
            label,
            condition,
            split,
            clear_sky: condition == SkyCondition::Clear,
        });
    }

    SynthDataset {
        seed,
        params: params.clone(),
        window_pattern: window,
        weather,
        entries,
    }
}

impl SynthDataset {
    /// Materializes entries the same way manifest loading would, with weather
    /// interpolated at each frame's timestamp.
    pub fn to_loaded_entries(&self) -> Vec<LoadedEntry> {
        self.entries
            .iter()
            .map(|e| LoadedEntry {
                frame: e.frame.clone(),
                prev: Some(e.prev.clone()),
                weather: interpolate_weather(&self.weather, e.frame.timestamp)
                    .expect("generated weather covers all frames"),
                label: Some(e.label.clone()),
                split: e.split,
                clear_sky: e.clear_sky,
            })
            .collect()
    }

    /// Writes the dataset under `dir` and returns the manifest path. Output
    /// bytes are a pure function of the dataset.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let weather_rel = PathBuf::from("weather.csv");
        save_weather(&self.weather, &dir.join(&weather_rel))?;

        let mut manifest_entries = Vec::new();
        let mut split_counters = [0usize; 2];
        for entry in &self.entries {
            let split_idx = match entry.split {
                Split::Train => 0,
                Split::Test => 1,
            };
            let name = format!("{}_{:03}", entry.split.as_str(), split_counters[split_idx]);
            split_counters[split_idx] += 1;

            let frame_rel = PathBuf::from(format!("frames/{name}.txt"));
            let label_rel = PathBuf::from(format!("labels/{name}.txt"));
            io::save_frame(&entry.frame, &dir.join(&frame_rel))?;
            io::save_frame(&entry.prev, &io::prev_frame_path(&dir.join(&frame_rel)))?;
            io::save_label(&entry.label, &dir.join(&label_rel))?;
            manifest_entries.push(ManifestEntry {
                frame: frame_rel,
                weather: weather_rel.clone(),
                label: Some(label_rel),
                split: entry.split,
                clear_sky: entry.clear_sky,
            });
        }
        let manifest = DatasetManifest {
            root: dir.to_path_buf(),
            entries: manifest_entries,
        };
        let manifest_path = dir.join("manifest.csv");
        save_manifest(&manifest, &manifest_path)?;
        Ok(manifest_path)
    }
}

/// Generates and writes a dataset in one step.
pub fn synth_dataset(
    seed: u64,
    n_train: usize,
    n_test: usize,
    params: &SceneParams,
    dir: &Path,
) -> Result<DatasetManifest> {
    let dataset = synthesize(seed, n_train, n_test, params);
    let manifest_path = dataset.write(dir)?;
    crate::imaging::manifest::load_manifest(&manifest_path)
}
