//! On-disk formats.
//!
//! Frame/label/channel files share one grid layout: line 1 is `rows cols`,
//! followed by `rows` lines of `cols` space-separated cells. Frame cells are
//! centi-kelvin integers, label cells are `{0,1}`, derived channels are
//! floats. Saving always emits the canonical single-space form, so
//! `save -> load -> save` is byte-identical.
//!
//! A frame's timestamp and Sun angles live in a sidecar next to the pixel
//! file (`frame.txt` -> `frame.meta`) holding `key=value` lines; the pixel
//! format itself stays plain. A sibling `<stem>_prev.<ext>` file, when
//! present, is the preceding frame of the same scene and feeds optical flow.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imaging::{IRFrame, LabelMask};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Parses the shared grid layout with `parse_cell` deciding the cell type.
fn load_grid_with<T>(
    path: &Path,
    parse_cell: impl Fn(&str) -> Option<T>,
) -> Result<Grid<T>> {
    let content = read_to_string(path)?;
    let mut lines = content.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected `rows cols` header"))?;
    let mut parts = header.split_whitespace();
    let rows: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "malformed header, expected `rows cols`"))?;
    let cols: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "malformed header, expected `rows cols`"))?;
    if parts.next().is_some() {
        return Err(Error::parse(path, 1, "malformed header, expected `rows cols`"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::parse(path, 1, "header declares an empty grid"));
    }

    let expected = rows * cols;
    let mut data = Vec::with_capacity(expected);
    let mut last_line = 1;
    for (idx, line) in lines {
        let line_no = idx + 1;
        for token in line.split_whitespace() {
            let v = parse_cell(token).ok_or_else(|| {
                Error::parse(path, line_no, format!("non-numeric cell `{token}`"))
            })?;
            if data.len() == expected {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {expected} cells, found more"),
                ));
            }
            data.push(v);
        }
        if !line.trim().is_empty() {
            last_line = line_no;
        }
    }
    if data.len() != expected {
        return Err(Error::parse(
            path,
            last_line,
            format!("expected {expected} cells, found {}", data.len()),
        ));
    }
    Ok(Grid::from_vec(rows, cols, data))
}

fn render_grid<T: std::fmt::Display>(grid: &Grid<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", grid.rows(), grid.cols());
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", grid.get(i, j));
        }
        out.push('\n');
    }
    out
}

/// Sidecar path for a frame file: extension replaced with `meta`.
pub fn meta_path(frame_path: &Path) -> PathBuf {
    frame_path.with_extension("meta")
}

/// Path of the preceding frame of the same scene: `<stem>_prev.<ext>`.
pub fn prev_frame_path(frame_path: &Path) -> PathBuf {
    let stem = frame_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = frame_path
        .extension()
        .map(|s| s.to_string_lossy().into_owned());
    let name = match ext {
        Some(ext) => format!("{stem}_prev.{ext}"),
        None => format!("{stem}_prev"),
    };
    frame_path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrameMeta {
    timestamp: i64,
    sun_elevation: f64,
    sun_azimuth: f64,
}

impl Default for FrameMeta {
    fn default() -> Self {
        // Tracker keeps the Sun centered; angles only matter as metadata.
        Self {
            timestamp: 0,
            sun_elevation: 45.0,
            sun_azimuth: 180.0,
        }
    }
}

fn load_meta(path: &Path) -> Result<FrameMeta> {
    let mut meta = FrameMeta::default();
    if !path.exists() {
        return Ok(meta);
    }
    let content = read_to_string(path)?;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line_no, "expected key=value"))?;
        let bad = || Error::parse(path, line_no, format!("invalid value for `{key}`"));
        match key {
            "timestamp" => meta.timestamp = value.parse().map_err(|_| bad())?,
            "sun_elevation" => meta.sun_elevation = value.parse().map_err(|_| bad())?,
            "sun_azimuth" => meta.sun_azimuth = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::parse(path, line_no, format!("unknown key `{key}`"))),
        }
    }
    Ok(meta)
}

/// Loads a radiometric frame (and its sidecar metadata when present).
pub fn load_frame(path: &Path) -> Result<IRFrame> {
    let raw = load_grid_with(path, |t| t.parse::<u32>().ok())?;
    if let Some(pos) = raw.data().iter().position(|&v| v == 0) {
        let line = pos / raw.cols() + 2;
        return Err(Error::parse(path, line, "radiometric temperature must be > 0"));
    }
    let meta = load_meta(&meta_path(path))?;
    IRFrame::new(raw, meta.timestamp, meta.sun_elevation, meta.sun_azimuth)
}

/// Saves a frame and its sidecar metadata.
pub fn save_frame(frame: &IRFrame, path: &Path) -> Result<()> {
    write_string(path, &render_grid(frame.raw()))?;
    let meta = format!(
        "timestamp={}\nsun_elevation={}\nsun_azimuth={}\n",
        frame.timestamp, frame.sun_elevation, frame.sun_azimuth
    );
    write_string(&meta_path(path), &meta)
}

pub fn load_label(path: &Path) -> Result<LabelMask> {
    let grid = load_grid_with(path, |t| t.parse::<u8>().ok())?;
    if let Some(pos) = grid.data().iter().position(|&v| v > 1) {
        let line = pos / grid.cols() + 2;
        return Err(Error::parse(path, line, "label cells must be 0 or 1"));
    }
    LabelMask::new(grid)
}

pub fn save_label(mask: &LabelMask, path: &Path) -> Result<()> {
    write_string(path, &render_grid(mask.grid()))
}

/// Derived channels reuse the grid layout with float cells.
pub fn load_channel(path: &Path) -> Result<Grid<f64>> {
    load_grid_with(path, |t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
}

pub fn save_channel(grid: &Grid<f64>, path: &Path) -> Result<()> {
    write_string(path, &render_grid(grid))
}
