//! Dataset manifest: which frames belong to which split, where their labels
//! and weather live, and which frames are flagged clear-sky.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::weather::{interpolate_weather, load_weather, WeatherRecord};
use crate::imaging::{io, IRFrame, LabelMask};

/// Maximum allowed gap between a frame and its nearest weather record.
pub const WEATHER_MATCH_TOLERANCE_S: i64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub frame: PathBuf,
    pub weather: PathBuf,
    pub label: Option<PathBuf>,
    pub split: Split,
    pub clear_sky: bool,
}

/// Parsed manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_CSV_HEADER: &str = "frame,weather,label,split,clear_sky";

/// Loads and validates a manifest CSV (`frame,weather,label,split,clear_sky`).
/// Every train entry must reference a label file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MANIFEST_CSV_HEADER => {}
        _ => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header `{MANIFEST_CSV_HEADER}`"),
            ))
        }
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, line_no, "expected 5 comma-separated fields"));
        }
        let split = match fields[3].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("split must be train|test, got `{other}`"),
                ))
            }
        };
        let clear_sky = match fields[4].trim() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("clear_sky must be true|false, got `{other}`"),
                ))
            }
        };
        let label = match fields[2].trim() {
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        if split == Split::Train && label.is_none() {
            return Err(Error::parse(path, line_no, "train entries must have a label"));
        }
        entries.push(ManifestEntry {
            frame: PathBuf::from(fields[0].trim()),
            weather: PathBuf::from(fields[1].trim()),
            label,
            split,
            clear_sky,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(path, 1, "manifest has no entries"));
    }
    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(DatasetManifest { root, entries })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut out = String::from(MANIFEST_CSV_HEADER);
    out.push('\n');
    for e in &manifest.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.frame.display(),
            e.weather.display(),
            e.label.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            e.split.as_str(),
            e.clear_sky
        );
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One fully materialized manifest entry.
#[derive(Debug, Clone)]
pub struct LoadedEntry {
    pub frame: IRFrame,
    /// Preceding frame of the same scene (for optical flow), when a
    /// `<stem>_prev` sibling file exists.
    pub prev: Option<IRFrame>,
    pub weather: WeatherRecord,
    pub label: Option<LabelMask>,
    pub split: Split,
    pub clear_sky: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub entries: Vec<LoadedEntry>,
}

impl LoadedDataset {
    pub fn train(&self) -> impl Iterator<Item = &LoadedEntry> {
        self.entries.iter().filter(|e| e.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &LoadedEntry> {
        self.entries.iter().filter(|e| e.split == Split::Test)
    }
}

impl DatasetManifest {
    /// Loads every referenced file, interpolates weather at each frame's
    /// timestamp and enforces shape agreement and the weather matching
    /// tolerance.
    pub fn load(&self) -> Result<LoadedDataset> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let frame_path = self.root.join(&entry.frame);
            let frame = io::load_frame(&frame_path)?;
            let prev_path = io::prev_frame_path(&frame_path);
            let prev = if prev_path.exists() {
                Some(io::load_frame(&prev_path)?)
            } else {
                None
            };
            let records = load_weather(&self.root.join(&entry.weather))?;
            let nearest_gap = records
                .iter()
                .map(|r| (r.timestamp - frame.timestamp).abs())
                .min()
                .unwrap_or(i64::MAX);
            if nearest_gap > WEATHER_MATCH_TOLERANCE_S {
                return Err(Error::Domain(format!(
                    "frame {} at t={} has no weather record within {WEATHER_MATCH_TOLERANCE_S} s",
                    entry.frame.display(),
                    frame.timestamp
                )));
            }
            let weather = interpolate_weather(&records, frame.timestamp)?;
            let label = match &entry.label {
                Some(p) => {
                    let mask = io::load_label(&self.root.join(p))?;
                    if mask.rows() != frame.rows() || mask.cols() != frame.cols() {
                        return Err(Error::Domain(format!(
                            "label {} shape {}x{} does not match frame {}x{}",
                            p.display(),
                            mask.rows(),
                            mask.cols(),
                            frame.rows(),
                            frame.cols()
                        )));
                    }
                    Some(mask)
                }
                None => None,
            };
            entries.push(LoadedEntry {
                frame,
                prev,
                weather,
                label,
                split: entry.split,
                clear_sky: entry.clear_sky,
            });
        }
        Ok(LoadedDataset { entries })
    }
}
