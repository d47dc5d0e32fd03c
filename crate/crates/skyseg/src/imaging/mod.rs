//! Domain types and file I/O for radiometric frames, weather records, label
//! masks and dataset manifests.
//!
//! All types are immutable after load and safe to share across workers.

pub mod io;
pub mod manifest;
pub mod weather;

pub use manifest::{DatasetManifest, LoadedDataset, LoadedEntry, ManifestEntry, Split};
pub use weather::{interpolate_weather, WeatherRecord};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// One radiometric frame. Pixels are emission temperatures recorded as
/// centi-kelvin integers; [`IRFrame::kelvin`] converts exactly by `/100`.
#[derive(Debug, Clone, PartialEq)]
pub struct IRFrame {
    raw: Grid<u32>,
    /// Capture time, UTC seconds.
    pub timestamp: i64,
    /// Sun elevation above the horizon, degrees.
    pub sun_elevation: f64,
    /// Sun azimuth, degrees.
    pub sun_azimuth: f64,
}

impl IRFrame {
    /// Builds a frame, enforcing that every raw value is a positive
    /// radiometric temperature.
    pub fn new(raw: Grid<u32>, timestamp: i64, sun_elevation: f64, sun_azimuth: f64) -> Result<Self> {
        if raw.data().contains(&0) {
            return Err(Error::Domain(
                "frame contains non-positive radiometric temperatures".into(),
            ));
        }
        Ok(Self {
            raw,
            timestamp,
            sun_elevation,
            sun_azimuth,
        })
    }

    pub fn rows(&self) -> usize {
        self.raw.rows()
    }

    pub fn cols(&self) -> usize {
        self.raw.cols()
    }

    pub fn raw(&self) -> &Grid<u32> {
        &self.raw
    }

    /// Temperature grid in Kelvin (`raw / 100`, exact).
    pub fn kelvin(&self) -> Grid<f64> {
        self.raw.map(|&v| v as f64 / 100.0)
    }
}

/// Per-pixel binary labels: 0 = clear sky, 1 = cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    grid: Grid<u8>,
}

impl LabelMask {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        if grid.data().iter().any(|&v| v > 1) {
            return Err(Error::Domain("label mask contains values outside {0,1}".into()));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    /// Fraction of pixels labelled cloud.
    pub fn cloud_fraction(&self) -> f64 {
        let n = self.grid.len();
        self.grid.data().iter().map(|&v| v as usize).sum::<usize>() as f64 / n as f64
    }
}

impl From<Grid<u8>> for LabelMask {
    fn from(grid: Grid<u8>) -> Self {
        LabelMask::new(grid.map(|&v| if v > 0 { 1 } else { 0 })).expect("binarized grid")
    }
}
