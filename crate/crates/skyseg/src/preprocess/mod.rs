//! Frame preprocessing pipeline.
//!
//! A raw radiometric frame `T` is transformed in a fixed order:
//!
//! 1. window correction `T' = T - W` using the clear-sky stain model,
//! 2. background removal `dT = T' - A` with the fitted irradiance model,
//! 3. 8-bit normalization of `dT`,
//! 4. optical flow between consecutive normalized frames.
//!
//! Heights accompany each temperature channel via the lapse rate.
//!
//! Calibration state (the window pattern and the background parameters) is
//! learned from clear-sky flagged frames only: a least-squares background fit
//! on a cloudy frame would absorb the clouds into the background and erase
//! the signal the classifiers need. Each clear frame is fitted twice: once
//! on the raw pixels (whose residual feeds the window model) and once after
//! window correction (which yields the published background parameters,
//! warm-started from the previous fit). Cloudy frames reuse the latest
//! published parameters.

pub mod atmosphere;
pub mod flow;
pub mod malr;
pub mod window;

pub use atmosphere::{
    atmosphere_grid, eval_atmosphere, fit_atmosphere, normalize8, remove_atmosphere,
    AtmosphericParams, FitOutcome,
};
pub use flow::{flow_magnitude, optical_flow};
pub use malr::{height_grid, malr_rate, pixel_height};
pub use window::{WindowModel, WINDOW_CAPACITY};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imaging::{IRFrame, LoadedEntry, WeatherRecord};

/// All derived channels of one frame.
#[derive(Debug, Clone)]
pub struct DerivedFrame {
    /// Raw temperatures, Kelvin.
    pub temp_raw: Grid<f64>,
    /// Heights from raw temperatures, km.
    pub height_raw: Grid<f64>,
    /// Window-corrected temperatures, Kelvin.
    pub temp_corrected: Grid<f64>,
    /// Heights from corrected temperatures, km.
    pub height_corrected: Grid<f64>,
    /// Temperature increments relative to the fitted background, Kelvin.
    pub delta_temp: Grid<f64>,
    /// Heights from the increments, km.
    pub delta_height: Grid<f64>,
    /// 8-bit normalized increments.
    pub intensity: Grid<u8>,
    /// Per-pixel motion `[u, v]` in px/frame; zero when no previous frame
    /// was available.
    pub flow: Grid<[f64; 2]>,
    /// Whether a previous frame fed the flow channel.
    pub has_flow: bool,
    /// Lapse rate used for the height channels, K/km.
    pub lapse_rate: f64,
    /// Mean of the fitted background over the frame, Kelvin.
    pub tropopause_temp: f64,
    /// Background parameters used for the increments.
    pub atmosphere: AtmosphericParams,
}

impl DerivedFrame {
    pub fn rows(&self) -> usize {
        self.temp_raw.rows()
    }

    pub fn cols(&self) -> usize {
        self.temp_raw.cols()
    }
}

/// Stateful pipeline driver. Calibrate on the clear-sky frames of a dataset,
/// then derive channels for any frame of that dataset.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    window: WindowModel,
    background: Option<AtmosphericParams>,
}

fn frame_center(frame: &IRFrame) -> (f64, f64) {
    (
        (frame.rows() as f64 - 1.0) / 2.0,
        (frame.cols() as f64 - 1.0) / 2.0,
    )
}

impl Preprocessor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn window(&self) -> &WindowModel {
        &self.window
    }

    pub fn background(&self) -> Option<&AtmosphericParams> {
        self.background.as_ref()
    }

    /// Feeds one clear-sky frame into the calibration state.
    pub fn observe_clear_sky(&mut self, frame: &IRFrame) {
        let t = frame.kelvin();
        let sun = frame_center(frame);
        let raw_fit = fit_atmosphere(&t, sun, self.background.as_ref());
        let background = atmosphere_grid(&raw_fit.params, t.rows(), t.cols());
        self.window.push(&t.sub(&background));

        let corrected = self.window.apply(&t);
        let fit = fit_atmosphere(&corrected, sun, Some(&raw_fit.params));
        self.background = Some(fit.params);
    }

    /// Runs calibration over every clear-sky flagged entry, in order.
    pub fn calibrate(&mut self, entries: &[LoadedEntry]) {
        for entry in entries.iter().filter(|e| e.clear_sky) {
            self.observe_clear_sky(&entry.frame);
        }
    }

    /// Derives every channel for one frame.
    ///
    /// Uses the calibrated background when available; datasets without any
    /// clear-sky frame fall back to fitting the frame itself.
    pub fn derive(
        &self,
        frame: &IRFrame,
        weather: &WeatherRecord,
        prev: Option<&IRFrame>,
    ) -> Result<DerivedFrame> {
        let lapse = malr_rate(weather.air_temp_k, weather.dew_point_k, weather.pressure_pa)?;
        let (intensity, temp_raw, temp_corrected, delta_temp, tropopause, params) =
            self.normalized_intensity(frame)?;

        let height_raw = height_grid(&temp_raw, weather.air_temp_k, lapse);
        let height_corrected = height_grid(&temp_corrected, weather.air_temp_k, lapse);
        let delta_height = delta_temp.map(|&v| v.abs() / lapse);

        let (flow, has_flow) = match prev {
            Some(prev_frame) => {
                let (prev_intensity, ..) = self.normalized_intensity(prev_frame)?;
                (optical_flow(&prev_intensity, &intensity), true)
            }
            None => (Grid::fill(frame.rows(), frame.cols(), [0.0, 0.0]), false),
        };

        Ok(DerivedFrame {
            temp_raw,
            height_raw,
            temp_corrected,
            height_corrected,
            delta_temp,
            delta_height,
            intensity,
            flow,
            has_flow,
            lapse_rate: lapse,
            tropopause_temp: tropopause,
            atmosphere: params,
        })
    }

    /// Derives channels for every entry of a dataset after calibrating on its
    /// clear-sky frames.
    pub fn process(entries: &[LoadedEntry]) -> Result<Vec<DerivedFrame>> {
        let mut pre = Preprocessor::new();
        pre.calibrate(entries);
        entries
            .iter()
            .map(|e| pre.derive(&e.frame, &e.weather, e.prev.as_ref()))
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn normalized_intensity(
        &self,
        frame: &IRFrame,
    ) -> Result<(Grid<u8>, Grid<f64>, Grid<f64>, Grid<f64>, f64, AtmosphericParams)> {
        let temp_raw = frame.kelvin();
        let temp_corrected = self.window.apply(&temp_raw);
        let params = match &self.background {
            Some(p) => *p,
            None => fit_atmosphere(&temp_corrected, frame_center(frame), None).params,
        };
        params.validate().map_err(|e| {
            Error::Domain(format!("calibrated background parameters invalid: {e}"))
        })?;
        let background = atmosphere_grid(&params, temp_raw.rows(), temp_raw.cols());
        let delta_temp = temp_corrected.sub(&background);
        let intensity = normalize8(&delta_temp);
        Ok((
            intensity,
            temp_raw,
            temp_corrected,
            delta_temp,
            background.mean(),
            params,
        ))
    }
}
