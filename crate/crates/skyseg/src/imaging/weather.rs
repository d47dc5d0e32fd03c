//! Weather station records and time interpolation.
//!
//! The station samples every ten minutes while frames arrive much faster, so
//! loaders interpolate linearly between the two bracketing records. No
//! extrapolation: frames outside the record range are rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One weather station sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    /// UTC seconds.
    pub timestamp: i64,
    /// Air temperature at ground level, Kelvin.
    pub air_temp_k: f64,
    /// Dew point, Kelvin.
    pub dew_point_k: f64,
    /// Atmospheric pressure, Pascal.
    pub pressure_pa: f64,
    /// Relative humidity as a fraction in [0, 1].
    pub humidity: f64,
}

impl WeatherRecord {
    pub fn validate(&self) -> Result<()> {
        if self.dew_point_k > self.air_temp_k {
            return Err(Error::Domain(format!(
                "dew point {} K above air temperature {} K",
                self.dew_point_k, self.air_temp_k
            )));
        }
        if self.pressure_pa <= 0.0 {
            return Err(Error::Domain(format!(
                "non-positive pressure {} Pa",
                self.pressure_pa
            )));
        }
        if !(0.0..=1.0).contains(&self.humidity) {
            return Err(Error::Domain(format!(
                "humidity {} outside [0, 1]",
                self.humidity
            )));
        }
        Ok(())
    }
}

/// Linear interpolation of every field at time `t`. Exact at record
/// timestamps; out-of-range times are an error.
pub fn interpolate_weather(records: &[WeatherRecord], t: i64) -> Result<WeatherRecord> {
    if records.is_empty() {
        return Err(Error::Domain("no weather records".into()));
    }
    let first = records[0].timestamp;
    let last = records[records.len() - 1].timestamp;
    if t < first || t > last {
        return Err(Error::Domain(format!(
            "time {t} outside weather record range [{first}, {last}]"
        )));
    }
    // Bracketing index: largest k with records[k].timestamp <= t.
    let k = records.partition_point(|r| r.timestamp <= t) - 1;
    let a = &records[k];
    if a.timestamp == t || k + 1 == records.len() {
        return Ok(*a);
    }
    let b = &records[k + 1];
    let w = (t - a.timestamp) as f64 / (b.timestamp - a.timestamp) as f64;
    let lerp = |x: f64, y: f64| x + w * (y - x);
    Ok(WeatherRecord {
        timestamp: t,
        air_temp_k: lerp(a.air_temp_k, b.air_temp_k),
        dew_point_k: lerp(a.dew_point_k, b.dew_point_k),
        pressure_pa: lerp(a.pressure_pa, b.pressure_pa),
        humidity: lerp(a.humidity, b.humidity),
    })
}

pub const WEATHER_CSV_HEADER: &str = "timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity";

/// Loads the weather CSV (`timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity`,
/// ISO-8601 UTC timestamps), validating ordering and per-record invariants.
pub fn load_weather(path: &Path) -> Result<Vec<WeatherRecord>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == WEATHER_CSV_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header `{WEATHER_CSV_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, line_no, "expected 5 comma-separated fields"));
        }
        let timestamp = parse_iso8601(fields[0])
            .ok_or_else(|| Error::parse(path, line_no, "invalid ISO-8601 timestamp"))?;
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("invalid number `{}`", fields[i])))
        };
        let record = WeatherRecord {
            timestamp,
            air_temp_k: num(1)?,
            dew_point_k: num(2)?,
            pressure_pa: num(3)?,
            humidity: num(4)?,
        };
        record.validate()?;
        if let Some(prev) = records.last() {
            let prev: &WeatherRecord = prev;
            if record.timestamp <= prev.timestamp {
                return Err(Error::parse(path, line_no, "timestamps must be strictly increasing"));
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::parse(path, 1, "no weather records"));
    }
    Ok(records)
}

pub fn save_weather(records: &[WeatherRecord], path: &Path) -> Result<()> {
    let mut out = String::from(WEATHER_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_iso8601(r.timestamp),
            r.air_temp_k,
            r.dew_point_k,
            r.pressure_pa,
            r.humidity
        );
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses `YYYY-MM-DDTHH:MM:SSZ` to UTC seconds.
pub fn parse_iso8601(s: &str) -> Option<i64> {
    let s = s.trim();
    let bytes = s.as_bytes();
    if bytes.len() != 20 || bytes[4] != b'-' || bytes[7] != b'-' || bytes[10] != b'T'
        || bytes[13] != b':' || bytes[16] != b':' || bytes[19] != b'Z'
    {
        return None;
    }
    let year: i64 = s[0..4].parse().ok()?;
    let month: u32 = s[5..7].parse().ok()?;
    let day: u32 = s[8..10].parse().ok()?;
    let hour: i64 = s[11..13].parse().ok()?;
    let minute: i64 = s[14..16].parse().ok()?;
    let second: i64 = s[17..19].parse().ok()?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) || hour > 23 || minute > 59 || second > 59
    {
        return None;
    }
    Some(days_from_civil(year, month, day) * 86_400 + hour * 3_600 + minute * 60 + second)
}

pub fn format_iso8601(t: i64) -> String {
    let days = t.div_euclid(86_400);
    let secs = t.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
        y,
        m,
        d,
        secs / 3_600,
        (secs % 3_600) / 60,
        secs % 60
    )
}

// Civil <-> day-count conversion (proleptic Gregorian, days since 1970-01-01).
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = y - i64::from(m <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (y + i64::from(m <= 2), m, d)
}
