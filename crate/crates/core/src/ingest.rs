//! Telemetry records, per-record regressors, and interval aggregation into
//! noon-report style observations.
//!
//! Averaging the grey-box equation over an interval keeps it linear in the
//! coefficients: the interval mean power equals `a * mean(V^3) + b *
//! mean(cos(alpha) U_R^2 V)` plus averaged noise. Aggregation therefore only
//! needs the means of the two regressors and of power.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub ship_id: String,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    /// Speed through water, m/s.
    pub stw: f64,
    /// Relative wind speed, m/s.
    pub rel_wind_speed: f64,
    /// Relative wind angle in radians, 0 = head-on.
    pub rel_wind_angle: f64,
    /// Propulsion power, W.
    pub power: f64,
}

impl TelemetryRecord {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("stw", self.stw)?;
        ensure_finite("relative wind speed", self.rel_wind_speed)?;
        ensure_finite("relative wind angle", self.rel_wind_angle)?;
        ensure_finite("power", self.power)?;
        if self.stw < 0.0 {
            return Err(Error::invalid(format!("stw must be >= 0, got {}", self.stw)));
        }
        if self.rel_wind_speed < 0.0 {
            return Err(Error::invalid(format!(
                "relative wind speed must be >= 0, got {}",
                self.rel_wind_speed
            )));
        }
        if !(0.0..TAU).contains(&self.rel_wind_angle) {
            return Err(Error::invalid(format!(
                "relative wind angle must lie in [0, 2pi), got {}",
                self.rel_wind_angle
            )));
        }
        Ok(())
    }

    /// `cos(alpha) U_R^2`, the wind effect at unit speed.
    pub fn wind_effect(&self) -> f64 {
        self.rel_wind_angle.cos() * self.rel_wind_speed * self.rel_wind_speed
    }
}

/// One regression row of the grey-box model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// `V^3`
    pub x_hydro: f64,
    /// `cos(alpha) U_R^2 V`
    pub x_aero: f64,
    /// Observed power, W.
    pub y: f64,
    /// Raw samples behind the row.
    pub weight: u32,
}

pub fn featurize(rec: &TelemetryRecord) -> Result<FeatureRow> {
    rec.validate()?;
    Ok(FeatureRow {
        x_hydro: rec.stw.powi(3),
        x_aero: rec.wind_effect() * rec.stw,
        y: rec.power,
        weight: 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoonReport {
    pub ship_id: String,
    pub interval_start: i64,
    pub interval_end: i64,
    pub mean_x_hydro: f64,
    pub mean_x_aero: f64,
    pub mean_power: f64,
    pub sample_count: u32,
    pub coverage: f64,
}

impl NoonReport {
    pub fn validate(&self) -> Result<()> {
        if self.interval_end <= self.interval_start {
            return Err(Error::invalid("interval end must follow its start"));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::invalid(format!(
                "coverage must lie in (0, 1], got {}",
                self.coverage
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        ensure_finite("mean_x_hydro", self.mean_x_hydro)?;
        ensure_finite("mean_x_aero", self.mean_x_aero)?;
        ensure_finite("mean_power", self.mean_power)?;
        Ok(())
    }

    pub fn feature_row(&self) -> FeatureRow {
        FeatureRow {
            x_hydro: self.mean_x_hydro,
            x_aero: self.mean_x_aero,
            y: self.mean_power,
            weight: self.sample_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub interval_hours: f64,
    /// Intervals with a smaller fraction of expected samples are dropped.
    pub min_coverage: f64,
    /// Records slower than this (maneuvering, port) are discarded first.
    pub speed_floor: Option<f64>,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            interval_hours: 24.0,
            min_coverage: 0.8,
            speed_floor: Some(2.0),
        }
    }
}

impl AggregationConfig {
    fn interval_seconds(&self) -> Result<i64> {
        if !(self.interval_hours.is_finite() && self.interval_hours > 0.0) {
            return Err(Error::invalid("interval_hours must be positive"));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::invalid("min_coverage must lie in [0, 1]"));
        }
        let secs = (self.interval_hours * 3600.0).round() as i64;
        if secs < 1 {
            return Err(Error::invalid("interval shorter than one second"));
        }
        Ok(secs)
    }
}

/// Median spacing between consecutive timestamps, or `None` with fewer than
/// two records. Input must be sorted.
fn nominal_cadence(sorted_ts: &[i64]) -> Option<f64> {
    if sorted_ts.len() < 2 {
        return None;
    }
    let mut gaps: Vec<i64> = sorted_ts.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let n = gaps.len();
    Some(if n % 2 == 1 {
        gaps[n / 2] as f64
    } else {
        (gaps[n / 2 - 1] + gaps[n / 2]) as f64 / 2.0
    })
}

fn aggregate_ship(
    ship_id: &str,
    mut records: Vec<&TelemetryRecord>,
    config: &AggregationConfig,
    interval: i64,
) -> Result<Vec<NoonReport>> {
    records.sort_by_key(|r| r.timestamp);
    if let Some(w) = records.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(Error::invalid(format!(
            "ship {ship_id}: duplicate timestamp {}",
            w[0].timestamp
        )));
    }
    let timestamps: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
    let cadence = nominal_cadence(&timestamps);
    let anchor = timestamps[0].div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY;
    let expected = cadence.map(|c| interval as f64 / c);

    let mut bins: BTreeMap<i64, Vec<FeatureRow>> = BTreeMap::new();
    for rec in records {
        if let Some(floor) = config.speed_floor {
            if rec.stw < floor {
                continue;
            }
        }
        let row = featurize(rec).map_err(|e| {
            Error::invalid(format!("ship {ship_id} at t={}: {e}", rec.timestamp))
        })?;
        let bin = (rec.timestamp - anchor).div_euclid(interval);
        bins.entry(bin).or_default().push(row);
    }

    let mut out = Vec::with_capacity(bins.len());
    for (bin, rows) in bins {
        let n = rows.len();
        let coverage = match expected {
            Some(e) if e > 0.0 => (n as f64 / e).min(1.0),
            _ => 1.0,
        };
        if coverage < config.min_coverage {
            continue;
        }
        let inv = 1.0 / n as f64;
        let start = anchor + bin * interval;
        out.push(NoonReport {
            ship_id: ship_id.to_string(),
            interval_start: start,
            interval_end: start + interval,
            mean_x_hydro: rows.iter().map(|r| r.x_hydro).sum::<f64>() * inv,
            mean_x_aero: rows.iter().map(|r| r.x_aero).sum::<f64>() * inv,
            mean_power: rows.iter().map(|r| r.y).sum::<f64>() * inv,
            sample_count: n as u32,
            coverage,
        });
    }
    Ok(out)
}

/// Averages telemetry into fixed consecutive intervals anchored at the UTC
/// midnight preceding each ship's first record.
///
/// Coverage is the ratio of samples present to samples expected at the
/// ship's nominal cadence (median gap); intervals below
/// `config.min_coverage` are dropped. Output is ordered by ship id, then by
/// interval start, independent of input order.
pub fn aggregate(records: &[TelemetryRecord], config: &AggregationConfig) -> Result<Vec<NoonReport>> {
    let interval = config.interval_seconds()?;
    let mut by_ship: BTreeMap<&str, Vec<&TelemetryRecord>> = BTreeMap::new();
    for rec in records {
        by_ship.entry(rec.ship_id.as_str()).or_default().push(rec);
    }
    let per_ship: Vec<Result<Vec<NoonReport>>> = by_ship
        .into_par_iter()
        .map(|(ship, recs)| aggregate_ship(ship, recs, config, interval))
        .collect();
    let mut out = Vec::new();
    for reports in per_ship {
        out.extend(reports?);
    }
    Ok(out)
}
