//! Per-pixel feature vectors assembled from derived frame channels.
//!
//! Four families are supported:
//!
//! - `X1`: raw temperature and raw height,
//! - `X2`: window-corrected temperature and height,
//! - `X3`: background-removed temperature increment and increment height,
//! - `X4`: flow magnitude, normalized 8-bit intensity and temperature
//!   increment.
//!
//! A neighborhood option concatenates the features of the four or eight
//! closest pixels after the center pixel's own features; borders replicate
//! the nearest interior pixel. The concatenation order is fixed (center,
//! N, W, E, S, then NW, NE, SW, SE) so serialized models stay portable.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imaging::LabelMask;
use crate::preprocess::{flow_magnitude, DerivedFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureFamily {
    X1,
    X2,
    X3,
    X4,
}

impl FeatureFamily {
    pub fn base_dim(&self) -> usize {
        match self {
            FeatureFamily::X1 | FeatureFamily::X2 | FeatureFamily::X3 => 2,
            FeatureFamily::X4 => 3,
        }
    }

    /// Index (within the center pixel's block) of the channel that tracks
    /// cloud warmth; used to map unlabeled clusters onto {clear, cloud}.
    pub fn warmth_dim(&self) -> usize {
        match self {
            FeatureFamily::X1 | FeatureFamily::X2 | FeatureFamily::X3 => 0,
            FeatureFamily::X4 => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureFamily::X1 => "x1",
            FeatureFamily::X2 => "x2",
            FeatureFamily::X3 => "x3",
            FeatureFamily::X4 => "x4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x1" => Ok(FeatureFamily::X1),
            "x2" => Ok(FeatureFamily::X2),
            "x3" => Ok(FeatureFamily::X3),
            "x4" => Ok(FeatureFamily::X4),
            other => Err(Error::Config(format!(
                "unknown feature family `{other}` (expected x1|x2|x3|x4)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Neighborhood {
    Single,
    First,
    Second,
}

impl Neighborhood {
    /// Number of concatenated pixel blocks (center included).
    pub fn block_count(&self) -> usize {
        match self {
            Neighborhood::Single => 1,
            Neighborhood::First => 5,
            Neighborhood::Second => 9,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Neighborhood::Single => "single",
            Neighborhood::First => "first",
            Neighborhood::Second => "second",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Neighborhood::Single),
            "first" | "1" => Ok(Neighborhood::First),
            "second" | "2" => Ok(Neighborhood::Second),
            other => Err(Error::Config(format!(
                "unknown neighborhood `{other}` (expected single|first|second)"
            ))),
        }
    }
}

/// Neighbor offsets in concatenation order: N, W, E, S, NW, NE, SW, SE.
const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (0, 1),
    (1, 0),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSpec {
    pub family: FeatureFamily,
    pub neighborhood: Neighborhood,
    pub standardize: bool,
}

impl FeatureSpec {
    pub fn new(family: FeatureFamily, neighborhood: Neighborhood) -> Self {
        Self {
            family,
            neighborhood,
            standardize: false,
        }
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    /// Per-pixel feature dimension.
    pub fn dim(&self) -> usize {
        self.family.base_dim() * self.neighborhood.block_count()
    }

    pub fn warmth_dim(&self) -> usize {
        self.family.warmth_dim()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.family.as_str(),
            self.neighborhood.as_str(),
            self.standardize
        )
    }
}

/// Per-pixel feature vectors of one frame, row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    rows: usize,
    cols: usize,
    dim: usize,
    spec: FeatureSpec,
    data: Vec<f64>,
    pub labels: Option<Vec<u8>>,
}

impl FeatureFrame {
    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn vector(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn attach_labels(&mut self, mask: &LabelMask) -> Result<()> {
        if mask.rows() != self.rows || mask.cols() != self.cols {
            return Err(Error::Domain(format!(
                "label shape {}x{} does not match features {}x{}",
                mask.rows(),
                mask.cols(),
                self.rows,
                self.cols
            )));
        }
        self.labels = Some(mask.grid().data().to_vec());
        Ok(())
    }

    /// CSV dump, one row per pixel: `feature_0,..,feature_{d-1},label`.
    /// The label column is empty when no labels are attached.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in 0..self.n_pixels() {
            for (k, v) in self.vector(p).iter().enumerate() {
                if k > 0 {
                    write!(out, ",")?;
                }
                write!(out, "{v}")?;
            }
            match &self.labels {
                Some(labels) => writeln!(out, ",{}", labels[p])?,
                None => writeln!(out, ",")?,
            }
        }
        Ok(())
    }
}

/// Extracts the requested feature family from a derived frame.
pub fn extract(derived: &DerivedFrame, spec: &FeatureSpec) -> Result<FeatureFrame> {
    if spec.family == FeatureFamily::X4 && !derived.has_flow {
        return Err(Error::Config(
            "x4 features need optical flow, which needs the previous frame".into(),
        ));
    }
    let channels: Vec<Grid<f64>> = match spec.family {
        FeatureFamily::X1 => vec![derived.temp_raw.clone(), derived.height_raw.clone()],
        FeatureFamily::X2 => vec![
            derived.temp_corrected.clone(),
            derived.height_corrected.clone(),
        ],
        FeatureFamily::X3 => vec![derived.delta_temp.clone(), derived.delta_height.clone()],
        FeatureFamily::X4 => vec![
            flow_magnitude(&derived.flow),
            derived.intensity.map(|&v| v as f64),
            derived.delta_temp.clone(),
        ],
    };

    let rows = derived.rows();
    let cols = derived.cols();
    let base = spec.family.base_dim();
    let blocks = spec.neighborhood.block_count();
    let dim = base * blocks;
    let mut data = Vec::with_capacity(rows * cols * dim);
    for i in 0..rows as isize {
        for j in 0..cols as isize {
            for block in 0..blocks {
                let (di, dj) = if block == 0 {
                    (0, 0)
                } else {
                    NEIGHBOR_OFFSETS[block - 1]
                };
                for channel in &channels {
                    data.push(*channel.get_clamped(i + di, j + dj));
                }
            }
        }
    }
    Ok(FeatureFrame {
        rows,
        cols,
        dim,
        spec: *spec,
        data,
        labels: None,
    })
}

/// Feature vectors pooled across frames, the training unit for the models.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    /// Flat `n x dim` row-major feature matrix.
    pub data: Vec<f64>,
    /// Per-sample labels when every contributing frame carried them.
    pub labels: Option<Vec<u8>>,
}

impl SampleSet {
    pub fn from_frames(frames: &[&FeatureFrame]) -> Result<Self> {
        let dim = frames
            .first()
            .map(|f| f.dim())
            .ok_or_else(|| Error::Config("no frames to pool".into()))?;
        let mut data = Vec::new();
        let mut labels = Some(Vec::new());
        for frame in frames {
            if frame.dim() != dim {
                return Err(Error::Config(format!(
                    "feature dimension mismatch: {} vs {}",
                    frame.dim(),
                    dim
                )));
            }
            data.extend_from_slice(frame.data());
            match (&mut labels, &frame.labels) {
                (Some(all), Some(frame_labels)) => all.extend_from_slice(frame_labels),
                _ => labels = None,
            }
        }
        Ok(Self { dim, data, labels })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }
}

/// Frozen standardization statistics: `x -> (x - mean) / var`, computed on
/// training data and reused verbatim on test data. Dividing by the variance
/// (not the standard deviation) is intentional and matches the rest of the
/// toolchain; zero-variance dimensions pass through with only the mean
/// removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Standardizer {
    pub fn fit(frames: &[&FeatureFrame]) -> Result<Self> {
        let dim = frames.first().map(|f| f.dim()).ok_or_else(|| {
            Error::Config("cannot standardize an empty set of frames".into())
        })?;
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        for frame in frames {
            assert_eq!(frame.dim(), dim, "feature dimension mismatch");
            for p in 0..frame.n_pixels() {
                for (m, v) in mean.iter_mut().zip(frame.vector(p)) {
                    *m += v;
                }
            }
            n += frame.n_pixels();
        }
        if n == 0 {
            return Err(Error::Config("cannot standardize zero pixels".into()));
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut variance = vec![0.0; dim];
        for frame in frames {
            for p in 0..frame.n_pixels() {
                for ((var, m), v) in variance.iter_mut().zip(&mean).zip(frame.vector(p)) {
                    let d = v - m;
                    *var += d * d;
                }
            }
        }
        for var in &mut variance {
            *var /= n as f64;
        }
        Ok(Self { mean, variance })
    }

    pub fn transform_vec(&self, x: &mut [f64]) {
        for ((v, m), var) in x.iter_mut().zip(&self.mean).zip(&self.variance) {
            *v -= m;
            if *var > 0.0 {
                *v /= var;
            }
        }
    }

    pub fn transform(&self, frame: &mut FeatureFrame) {
        assert_eq!(frame.dim(), self.mean.len(), "feature dimension mismatch");
        let dim = self.mean.len();
        for chunk in frame.data.chunks_mut(dim) {
            self.transform_vec(chunk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize, SceneParams};

    fn derived() -> DerivedFrame {
        let data = synthesize(13, 1, 0, &SceneParams::well_separated());
        let entries = data.to_loaded_entries();
        let pre = crate::preprocess::Preprocessor::new();
        pre.derive(&entries[0].frame, &entries[0].weather, entries[0].prev.as_ref())
            .unwrap()
    }

    #[test]
    fn dimensions_per_spec() {
        let d = derived();
        let cases = [
            (FeatureFamily::X1, Neighborhood::Single, 2),
            (FeatureFamily::X2, Neighborhood::First, 10),
            (FeatureFamily::X3, Neighborhood::Second, 18),
            (FeatureFamily::X4, Neighborhood::Second, 27),
        ];
        for (family, neighborhood, dim) in cases {
            let spec = FeatureSpec::new(family, neighborhood);
            assert_eq!(spec.dim(), dim);
            let f = extract(&d, &spec).unwrap();
            assert_eq!(f.dim(), dim);
            assert_eq!(f.n_pixels(), d.rows() * d.cols());
        }
    }

    #[test]
    fn x4_requires_flow() {
        let data = synthesize(13, 1, 0, &SceneParams::well_separated());
        let entries = data.to_loaded_entries();
        let pre = crate::preprocess::Preprocessor::new();
        let no_flow = pre.derive(&entries[0].frame, &entries[0].weather, None).unwrap();
        let err = extract(&no_flow, &FeatureSpec::new(FeatureFamily::X4, Neighborhood::Single));
        assert!(err.is_err());
    }

    #[test]
    fn constant_channels_give_identical_vectors() {
        let mut d = derived();
        d.temp_raw = Grid::fill(d.rows(), d.cols(), 280.0);
        d.height_raw = Grid::fill(d.rows(), d.cols(), 1.5);
        let f = extract(&d, &FeatureSpec::new(FeatureFamily::X1, Neighborhood::Second)).unwrap();
        let first = f.vector(0).to_vec();
        for p in 1..f.n_pixels() {
            assert_eq!(f.vector(p), &first[..]);
        }
    }

    #[test]
    fn border_pixels_replicate_neighbors() {
        let d = derived();
        let f = extract(&d, &FeatureSpec::new(FeatureFamily::X1, Neighborhood::First)).unwrap();
        // Top-left corner: the N and W neighbors replicate the corner pixel.
        let v = f.vector(0);
        let center = &v[0..2];
        let north = &v[2..4];
        let west = &v[4..6];
        assert_eq!(center, north);
        assert_eq!(center, west);
        // E neighbor is pixel (0, 1).
        let east = &v[6..8];
        assert_eq!(east[0], *d.temp_raw.get(0, 1));
    }

    #[test]
    fn neighbor_order_is_fixed() {
        let d = derived();
        let f = extract(&d, &FeatureSpec::new(FeatureFamily::X3, Neighborhood::Second)).unwrap();
        let (i, j) = (5usize, 7usize);
        let v = f.vector(i * d.cols() + j);
        let expected_order = [
            (i, j),
            (i - 1, j),
            (i, j - 1),
            (i, j + 1),
            (i + 1, j),
            (i - 1, j - 1),
            (i - 1, j + 1),
            (i + 1, j - 1),
            (i + 1, j + 1),
        ];
        for (block, (bi, bj)) in expected_order.iter().enumerate() {
            assert_eq!(v[block * 2], *d.delta_temp.get(*bi, *bj));
            assert_eq!(v[block * 2 + 1], *d.delta_height.get(*bi, *bj));
        }
    }

    #[test]
    fn standardizer_moments_and_degenerate_path() {
        let d = derived();
        let mut f = extract(&d, &FeatureSpec::new(FeatureFamily::X3, Neighborhood::Single)).unwrap();
        let std = Standardizer::fit(&[&f]).unwrap();
        std.transform(&mut f);
        // Transformed mean is 0; transformed variance is 1/var of the raw
        // data (the transform divides by the variance).
        let n = f.n_pixels() as f64;
        for k in 0..f.dim() {
            let mean: f64 = (0..f.n_pixels()).map(|p| f.vector(p)[k]).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "dim {k} mean {mean}");
            let var: f64 = (0..f.n_pixels()).map(|p| f.vector(p)[k].powi(2)).sum::<f64>() / n;
            let expected = 1.0 / std.variance[k];
            assert!((var - expected).abs() / expected < 1e-9);
        }

        // Zero-variance dimension passes through with the mean removed.
        let mut constant = FeatureFrame {
            rows: 1,
            cols: 4,
            dim: 1,
            spec: FeatureSpec::new(FeatureFamily::X1, Neighborhood::Single),
            data: vec![3.5; 4],
            labels: None,
        };
        let std2 = Standardizer::fit(&[&constant]).unwrap();
        std2.transform(&mut constant);
        assert!(constant.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_has_one_row_per_pixel() {
        let data = synthesize(13, 1, 0, &SceneParams::well_separated());
        let entries = data.to_loaded_entries();
        let pre = crate::preprocess::Preprocessor::new();
        let d = pre
            .derive(&entries[0].frame, &entries[0].weather, None)
            .unwrap();
        let mut f = extract(&d, &FeatureSpec::new(FeatureFamily::X1, Neighborhood::Single)).unwrap();
        f.attach_labels(entries[0].label.as_ref().unwrap()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), f.n_pixels());
        assert_eq!(text.lines().next().unwrap().split(',').count(), f.dim() + 1);
    }
}
