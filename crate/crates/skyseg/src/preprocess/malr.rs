//! Moist adiabatic lapse rate and pixel heights.
//!
//! The lapse rate converts a pixel's emission temperature into an approximate
//! cloud height via `H = |T - T_air| / lapse`. The formula below is the
//! standard moist-adiabatic expression with the actual vapor pressure taken
//! as the Magnus saturation pressure at the dew point. The physical constants
//! are a documented fixture of this implementation.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Gravitational acceleration, m/s².
const GRAVITY: f64 = 9.8076;
/// Latent heat of vaporization of water, J/kg.
const LATENT_HEAT: f64 = 2.501e6;
/// Specific gas constant of dry air, J/(kg·K).
const R_DRY: f64 = 287.04;
/// Specific heat of dry air at constant pressure, J/(kg·K).
const CP_DRY: f64 = 1005.7;
/// Ratio of water vapor to dry air gas constants.
const EPSILON: f64 = 0.622;
/// Magnus saturation vapor pressure constants (over water).
const MAGNUS_A_PA: f64 = 610.94;
const MAGNUS_B: f64 = 17.625;
const MAGNUS_C: f64 = 243.04;

/// Dry-adiabatic lapse rate `g / c_p` in K/km; the moist rate approaches this
/// ceiling as the air dries out.
pub const DRY_LAPSE_K_PER_KM: f64 = GRAVITY / CP_DRY * 1000.0;

/// Magnus saturation vapor pressure (Pa) at temperature `t_k`.
pub fn saturation_vapor_pressure(t_k: f64) -> f64 {
    let t_c = t_k - 273.15;
    MAGNUS_A_PA * ((MAGNUS_B * t_c) / (t_c + MAGNUS_C)).exp()
}

/// Moist adiabatic lapse rate in K/km from ground-level weather.
pub fn malr_rate(air_temp_k: f64, dew_point_k: f64, pressure_pa: f64) -> Result<f64> {
    if !(air_temp_k.is_finite() && dew_point_k.is_finite() && pressure_pa.is_finite()) {
        return Err(Error::Domain("non-finite weather inputs".into()));
    }
    if air_temp_k <= 0.0 || dew_point_k <= 0.0 {
        return Err(Error::Domain("temperatures must be positive Kelvin".into()));
    }
    if dew_point_k > air_temp_k {
        return Err(Error::Domain(format!(
            "dew point {dew_point_k} K above air temperature {air_temp_k} K"
        )));
    }
    if pressure_pa <= 0.0 {
        return Err(Error::Domain("pressure must be positive".into()));
    }
    let vapor = saturation_vapor_pressure(dew_point_k);
    if vapor >= pressure_pa {
        return Err(Error::Domain(
            "vapor pressure exceeds total pressure".into(),
        ));
    }
    // Mixing ratio of water vapor to dry air.
    let r = EPSILON * vapor / (pressure_pa - vapor);
    let numerator = 1.0 + LATENT_HEAT * r / (R_DRY * air_temp_k);
    let denominator = CP_DRY + LATENT_HEAT * LATENT_HEAT * r * EPSILON / (R_DRY * air_temp_k * air_temp_k);
    let lapse = GRAVITY * numerator / denominator * 1000.0;
    debug_assert!(lapse > 0.0 && lapse <= 9.8);
    Ok(lapse)
}

/// Height of one pixel in km.
///
/// Cloud pixels are usually colder than ground air while heights are defined
/// non-negative, so the implementation takes `|T - T_air| / lapse`. The
/// absolute-difference convention is a fixed, tested constant of this crate.
pub fn pixel_height(t_pixel_k: f64, air_temp_k: f64, lapse_k_per_km: f64) -> f64 {
    assert!(lapse_k_per_km > 0.0, "lapse rate must be positive");
    ((t_pixel_k - air_temp_k) / lapse_k_per_km).abs()
}

pub fn height_grid(t: &Grid<f64>, air_temp_k: f64, lapse_k_per_km: f64) -> Grid<f64> {
    t.map(|&v| pixel_height(v, air_temp_k, lapse_k_per_km))
}
