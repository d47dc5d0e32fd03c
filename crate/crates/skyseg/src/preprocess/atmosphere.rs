//! Background irradiance model of the clear sky and its nonlinear fit.
//!
//! The deterministic background of a frame combines two terms: atmospheric
//! scatter, an exponential in the column coordinate anchored at the Sun's
//! column, and the Sun's direct irradiance, a radially decaying bump centered
//! on the Sun's pixel:
//!
//! ```text
//! A(i, j) = s_amp * exp((j - sun_col) / s_scale)
//!         + d_amp * d_rad^2 / ((i - sun_row)^2 + (j - sun_col)^2 + d_rad^2)^(3/2)
//! ```
//!
//! Fitting minimizes the squared residual against an observed grid with a
//! damped Gauss-Newton (Levenberg-Marquardt) iteration using the analytic
//! Jacobian. The direct-term radius is optimized as `exp(rho)` so it stays
//! positive. Only improving steps are accepted, so the returned residual
//! never exceeds the residual at the initial guess.
//!
//! Removing the background from a corrected frame yields per-pixel
//! temperature increments relative to the tropopause background; the mean of
//! the fitted background over the frame serves as the tropopause reference
//! temperature.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{solve_spd, Mat};

/// Parameters of the background irradiance model.
///
/// `sun_row`/`sun_col` are the Sun's pixel coordinates: `sun_row` indexes
/// rows (i), `sun_col` indexes columns (j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtmosphericParams {
    /// Scatter amplitude, Kelvin.
    pub scatter_amplitude: f64,
    /// Scatter length scale, pixels (non-zero).
    pub scatter_scale: f64,
    /// Direct irradiance amplitude, Kelvin·pixels.
    pub direct_amplitude: f64,
    /// Direct irradiance radius, pixels (positive).
    pub direct_radius: f64,
    pub sun_row: f64,
    pub sun_col: f64,
}

impl AtmosphericParams {
    pub fn validate(&self) -> Result<()> {
        if self.scatter_scale == 0.0 {
            return Err(Error::Domain("scatter scale must be non-zero".into()));
        }
        if self.direct_radius <= 0.0 {
            return Err(Error::Domain("direct radius must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluates the background model at pixel `(i, j)`.
pub fn eval_atmosphere(p: &AtmosphericParams, i: f64, j: f64) -> f64 {
    let scatter = p.scatter_amplitude * ((j - p.sun_col) / p.scatter_scale).exp();
    let r2 = p.direct_radius * p.direct_radius;
    let q = (i - p.sun_row).powi(2) + (j - p.sun_col).powi(2) + r2;
    scatter + p.direct_amplitude * r2 / q.powf(1.5)
}

pub fn atmosphere_grid(p: &AtmosphericParams, rows: usize, cols: usize) -> Grid<f64> {
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(eval_atmosphere(p, i as f64, j as f64));
        }
    }
    Grid::from_vec(rows, cols, data)
}

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const SCALE_FLOOR: f64 = 1e-3;
const EXP_ARG_LIMIT: f64 = 40.0;

/// Result of a background fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: AtmosphericParams,
    /// Sum of squared residuals at the returned parameters.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Internal parameter vector: `[s_amp, s_scale, d_amp, rho, sun_row, sun_col]`
/// with `d_rad = exp(rho)`.
fn to_vec(p: &AtmosphericParams) -> [f64; 6] {
    [
        p.scatter_amplitude,
        p.scatter_scale,
        p.direct_amplitude,
        p.direct_radius.ln(),
        p.sun_row,
        p.sun_col,
    ]
}

fn from_vec(v: &[f64; 6]) -> AtmosphericParams {
    AtmosphericParams {
        scatter_amplitude: v[0],
        scatter_scale: v[1],
        direct_amplitude: v[2],
        direct_radius: v[3].exp(),
        sun_row: v[4],
        sun_col: v[5],
    }
}

fn clamp_vec(v: &mut [f64; 6]) {
    if v[1].abs() < SCALE_FLOOR {
        v[1] = if v[1] < 0.0 { -SCALE_FLOOR } else { SCALE_FLOOR };
    }
    v[3] = v[3].clamp(SCALE_FLOOR.ln(), 1e3f64.ln());
}

/// Model value and its six partial derivatives at pixel `(i, j)`.
fn eval_with_jacobian(v: &[f64; 6], i: f64, j: f64) -> (f64, [f64; 6]) {
    let [s_amp, s_scale, d_amp, rho, sun_row, sun_col] = *v;
    let radius = rho.exp();
    let dy = j - sun_col;
    let dx = i - sun_row;
    let arg = (dy / s_scale).clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT);
    let e = arg.exp();
    let r2 = radius * radius;
    let q = dx * dx + dy * dy + r2;
    let q32 = q.powf(1.5);
    let q52 = q32 * q;
    let value = s_amp * e + d_amp * r2 / q32;

    let d_s_amp = e;
    let d_s_scale = -s_amp * e * dy / (s_scale * s_scale);
    let d_d_amp = r2 / q32;
    let d_radius = d_amp * radius * (2.0 * q - 3.0 * r2) / q52;
    let d_rho = d_radius * radius;
    let d_sun_row = 3.0 * d_amp * r2 * dx / q52;
    let d_sun_col = -s_amp * e / s_scale + 3.0 * d_amp * r2 * dy / q52;
    (value, [d_s_amp, d_s_scale, d_d_amp, d_rho, d_sun_row, d_sun_col])
}

fn sum_squared_residual(v: &[f64; 6], t: &Grid<f64>) -> f64 {
    let mut sse = 0.0;
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let (value, _) = eval_with_jacobian(v, i as f64, j as f64);
            let r = value - t.get(i, j);
            sse += r * r;
        }
    }
    sse
}

/// Gradient of the squared-residual objective, `2 Jᵀ r`, checked against
/// finite differences by the tests.
#[cfg(test)]
fn residual_gradient(v: &[f64; 6], t: &Grid<f64>) -> [f64; 6] {
    let mut g = [0.0; 6];
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let (value, jac) = eval_with_jacobian(v, i as f64, j as f64);
            let r = value - t.get(i, j);
            for (gk, jk) in g.iter_mut().zip(&jac) {
                *gk += 2.0 * r * jk;
            }
        }
    }
    g
}

#[cfg(test)]
fn sse_at(v: &[f64; 6], t: &Grid<f64>) -> f64 {
    sum_squared_residual(v, t)
}

/// Default initial guess: scatter amplitude at the frame minimum, scale at
/// the frame width, direct amplitude sized so its peak reaches the frame
/// maximum, a 5 px radius, Sun at the supplied pixel.
fn initial_guess(t: &Grid<f64>, sun: (f64, f64)) -> AtmosphericParams {
    let min = t.min();
    let max = t.max();
    let radius = 5.0;
    AtmosphericParams {
        scatter_amplitude: min,
        scatter_scale: t.cols() as f64,
        direct_amplitude: (max - min).max(0.0) * radius,
        direct_radius: radius,
        sun_row: sun.0,
        sun_col: sun.1,
    }
}

/// Fits the background model to an observed grid (normally a clear-sky frame
/// after window correction).
///
/// `sun` is the tracker-provided Sun pixel (the tracker keeps the Sun
/// centered, so the frame center is the usual argument). `warm_start`
/// overrides the default initial guess. If the iteration cap is reached the
/// best iterate is returned with `converged = false`.
pub fn fit_atmosphere(
    t: &Grid<f64>,
    sun: (f64, f64),
    warm_start: Option<&AtmosphericParams>,
) -> FitOutcome {
    let init = warm_start.copied().unwrap_or_else(|| initial_guess(t, sun));
    let mut v = to_vec(&init);
    clamp_vec(&mut v);
    let mut sse = sum_squared_residual(&v, t);
    let n = t.len();
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        // Accumulate JᵀJ and Jᵀr.
        let mut h = Mat::zeros(6, 6);
        let mut g = [0.0; 6];
        for i in 0..t.rows() {
            for j in 0..t.cols() {
                let (value, jac) = eval_with_jacobian(&v, i as f64, j as f64);
                let r = value - t.get(i, j);
                for a in 0..6 {
                    g[a] += jac[a] * r;
                    for b in a..6 {
                        h.add_at(a, b, jac[a] * jac[b]);
                    }
                }
            }
        }
        for a in 0..6 {
            for b in 0..a {
                let val = h.at(b, a);
                h.set(a, b, val);
            }
        }

        if sse <= RESIDUAL_TOLERANCE {
            converged = true;
            break;
        }

        let mut improved = false;
        for _ in 0..12 {
            // Marquardt scaling keeps the step sane across parameter scales.
            let mut damped = h.clone();
            for a in 0..6 {
                let d = damped.at(a, a);
                damped.set(a, a, d + damping * d.max(1e-12));
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let Some(step) = solve_spd(&damped, &rhs) else {
                damping *= 10.0;
                continue;
            };
            let mut candidate = v;
            for (c, s) in candidate.iter_mut().zip(&step) {
                *c += s;
            }
            clamp_vec(&mut candidate);
            let candidate_sse = sum_squared_residual(&candidate, t);
            if candidate_sse < sse {
                let relative_drop = (sse - candidate_sse) / (1.0 + sse);
                v = candidate;
                sse = candidate_sse;
                damping = (damping / 3.0).max(1e-12);
                improved = true;
                if relative_drop < 1e-12 || sse / n as f64 <= RESIDUAL_TOLERANCE {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
        if !improved {
            // No damping level improves the fit: stationary point reached.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    FitOutcome {
        params: from_vec(&v),
        residual: sse,
        converged,
        iterations,
    }
}

/// Subtracts the fitted background: returns the temperature increments
/// `dT = T' - A`, the increment heights `|dT| / lapse`, and the tropopause
/// reference temperature (mean of the background over the frame).
pub fn remove_atmosphere(
    t_corrected: &Grid<f64>,
    params: &AtmosphericParams,
    lapse_k_per_km: f64,
) -> (Grid<f64>, Grid<f64>, f64) {
    assert!(lapse_k_per_km > 0.0);
    let background = atmosphere_grid(params, t_corrected.rows(), t_corrected.cols());
    let delta = t_corrected.sub(&background);
    let heights = delta.map(|&v| v.abs() / lapse_k_per_km);
    (delta, heights, background.mean())
}

/// Reference lapse used by the 8-bit normalization, K/km.
pub const NORMALIZATION_LAPSE_K_PER_KM: f64 = 9.8;
/// Average tropopause height at the deployment latitude, km.
pub const TROPOPAUSE_HEIGHT_KM: f64 = 11.5;
/// Site altitude above sea level, km.
pub const SITE_ALTITUDE_KM: f64 = 1.52;
/// Full feasible cloud temperature range in Kelvin used as the normalization
/// denominator: `(11.5 - 1.52) * 9.8`.
pub const NORMALIZATION_RANGE_K: f64 =
    (TROPOPAUSE_HEIGHT_KM - SITE_ALTITUDE_KM) * NORMALIZATION_LAPSE_K_PER_KM;

/// Normalizes temperature increments to 8 bits.
///
/// The frame minimum maps to 0 and the fraction of the feasible cloud
/// temperature range maps onto [0, 255], rounding half up and clamping
/// fractions above one to 255. Order-preserving by construction.
pub fn normalize8(delta_temp: &Grid<f64>) -> Grid<u8> {
    assert!(!delta_temp.is_empty(), "normalize8 needs a non-empty grid");
    let min = delta_temp.min();
    delta_temp.map(|&v| {
        let fraction = (v - min) / NORMALIZATION_RANGE_K;
        let scaled = (fraction * 255.0).round();
        scaled.min(255.0) as u8
    })
}
