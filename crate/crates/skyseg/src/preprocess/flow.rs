//! Dense per-pixel optical flow between consecutive normalized frames.
//!
//! Weighted Lucas-Kanade: at every pixel the local spatiotemporal gradients
//! are combined in a Gaussian-weighted 5x5 window and the 2x2 structure
//! tensor is solved for the displacement. Textureless regions make the
//! tensor rank-deficient; those pixels report zero motion instead of a noisy
//! solve.

use crate::grid::Grid;

/// Window half-width: 5x5 neighborhood.
const WINDOW_RADIUS: isize = 2;
/// Gaussian weighting sigma in pixels.
const WINDOW_SIGMA: f64 = 1.0;
/// Solves are rejected when the structure tensor's smaller eigenvalue falls
/// below this threshold.
const MIN_EIGENVALUE: f64 = 1e-6;

fn gaussian_window() -> [[f64; 5]; 5] {
    let mut w = [[0.0; 5]; 5];
    for (a, row) in w.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let di = a as f64 - WINDOW_RADIUS as f64;
            let dj = b as f64 - WINDOW_RADIUS as f64;
            *v = (-(di * di + dj * dj) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        }
    }
    w
}

/// Flow from `prev` to `curr`. Each cell holds `[u, v]`: `u` is motion along
/// columns (+j), `v` along rows (+i), in pixels per frame.
pub fn optical_flow(prev: &Grid<u8>, curr: &Grid<u8>) -> Grid<[f64; 2]> {
    assert!(prev.same_shape(curr), "flow inputs must share a shape");
    let rows = prev.rows() as isize;
    let cols = prev.cols() as isize;

    // Central-difference spatial gradients averaged over both frames, and the
    // temporal difference.
    let value = |g: &Grid<u8>, i: isize, j: isize| -> f64 { *g.get_clamped(i, j) as f64 };
    let mut gx = Grid::fill(prev.rows(), prev.cols(), 0.0);
    let mut gy = Grid::fill(prev.rows(), prev.cols(), 0.0);
    let mut gt = Grid::fill(prev.rows(), prev.cols(), 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let dx = 0.25
                * (value(prev, i, j + 1) - value(prev, i, j - 1) + value(curr, i, j + 1)
                    - value(curr, i, j - 1));
            let dy = 0.25
                * (value(prev, i + 1, j) - value(prev, i - 1, j) + value(curr, i + 1, j)
                    - value(curr, i - 1, j));
            gx.set(i as usize, j as usize, dx);
            gy.set(i as usize, j as usize, dy);
            gt.set(i as usize, j as usize, value(curr, i, j) - value(prev, i, j));
        }
    }

    let weights = gaussian_window();
    let mut flow = Grid::fill(prev.rows(), prev.cols(), [0.0, 0.0]);
    for i in 0..rows {
        for j in 0..cols {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            let (mut d1, mut d2) = (0.0, 0.0);
            for (wi, wrow) in weights.iter().enumerate() {
                for (wj, &w) in wrow.iter().enumerate() {
                    let ii = i + wi as isize - WINDOW_RADIUS;
                    let jj = j + wj as isize - WINDOW_RADIUS;
                    let ix = *gx.get_clamped(ii, jj);
                    let iy = *gy.get_clamped(ii, jj);
                    let it = *gt.get_clamped(ii, jj);
                    a += w * ix * ix;
                    b += w * ix * iy;
                    c += w * iy * iy;
                    d1 += w * ix * it;
                    d2 += w * iy * it;
                }
            }
            let trace = a + c;
            let det = a * c - b * b;
            let discriminant = (trace * trace - 4.0 * det).max(0.0);
            let lambda_min = 0.5 * (trace - discriminant.sqrt());
            if lambda_min < MIN_EIGENVALUE {
                continue;
            }
            let u = (-d1 * c + d2 * b) / det;
            let v = (-d2 * a + d1 * b) / det;
            if u.is_finite() && v.is_finite() {
                flow.set(i as usize, j as usize, [u, v]);
            }
        }
    }
    flow
}

/// Flow magnitude channel.
pub fn flow_magnitude(flow: &Grid<[f64; 2]>) -> Grid<f64> {
    flow.map(|[u, v]| u.hypot(*v))
}
