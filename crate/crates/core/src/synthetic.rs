//! Synthetic fleets with known parameters.
//!
//! Ships are generated from the hyper-model (`a`, `b` linear in gross
//! tonnage plus Gaussian scatter, resampled into positivity) and their
//! telemetry from the grey-box power equation plus Gaussian noise. Every
//! ship draws from its own counter-based stream, so fleets are identical
//! whether generated serially or in parallel.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::truncnorm::truncated_normal;
use crate::inference::HyperParameters;
use crate::ingest::TelemetryRecord;
use crate::physics::{greybox_mean, ShipParameters, VesselCharacteristics};
use crate::rng::{stream, StreamRng};

const MAX_POSITIVITY_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedSpec {
    /// Mean speed through water, m/s.
    pub mean: f64,
    /// Record-to-record spread, m/s.
    pub sd: f64,
    /// Spread of the per-day mean speed, m/s.
    pub day_sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for SpeedSpec {
    fn default() -> Self {
        SpeedSpec {
            mean: 7.5,
            sd: 1.5,
            day_sd: 1.0,
            min: 4.0,
            max: 11.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSpec {
    /// Independent uniform angle per record.
    Uniform,
    /// One prevailing angle per day, uniform on the circle, with Gaussian
    /// record-to-record spread (radians).
    DailyRegime { spread: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindSpec {
    /// Rayleigh scale of the relative wind speed, m/s. Zero means calm.
    pub scale: f64,
    pub angle: AngleSpec,
}

impl Default for WindSpec {
    fn default() -> Self {
        WindSpec {
            scale: 6.0,
            angle: AngleSpec::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub n_ships: usize,
    pub gt_min: f64,
    pub gt_max: f64,
    pub hyper: HyperParameters,
    /// Range of the per-record noise scale, W.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub days: usize,
    pub records_per_day: usize,
    pub speed: SpeedSpec,
    pub wind: WindSpec,
    /// Epoch seconds of the first record.
    pub start_time: i64,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            n_ships: 20,
            gt_min: 50_000.0,
            gt_max: 150_000.0,
            hyper: HyperParameters {
                lambda1: 5_000.0,
                lambda2: 0.25,
                lambda3: 200.0,
                lambda4: 0.01,
                sigma_a: 3_000.0,
                sigma_b: 150.0,
            },
            sigma_min: 3.0e5,
            sigma_max: 8.0e5,
            days: 100,
            records_per_day: 96,
            speed: SpeedSpec::default(),
            wind: WindSpec::default(),
            start_time: 1_546_300_800, // 2019-01-01T00:00:00Z
            seed: 1,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_ships == 0 {
            return Err(Error::invalid("n_ships must be at least 1"));
        }
        if !(self.gt_min > 0.0 && self.gt_max >= self.gt_min) {
            return Err(Error::invalid("gross tonnage range must be positive and nonempty"));
        }
        self.hyper.validate()?;
        if !(self.sigma_min >= 0.0 && self.sigma_max >= self.sigma_min) {
            return Err(Error::invalid("noise range must be non-negative and nonempty"));
        }
        let s = &self.speed;
        if !(s.min >= 0.0 && s.max > s.min && s.sd >= 0.0 && s.day_sd >= 0.0) {
            return Err(Error::invalid("speed range must satisfy 0 <= min < max"));
        }
        if !(self.wind.scale >= 0.0) {
            return Err(Error::invalid("wind scale must be non-negative"));
        }
        if let AngleSpec::DailyRegime { spread } = self.wind.angle {
            if !(spread >= 0.0) {
                return Err(Error::invalid("angle spread must be non-negative"));
            }
        }
        self.cadence()?;
        Ok(())
    }

    /// Seconds between records.
    pub fn cadence(&self) -> Result<i64> {
        if self.records_per_day == 0 {
            return Err(Error::invalid("records_per_day must be positive"));
        }
        let c = 86_400 / self.records_per_day as i64;
        if c <= 0 {
            return Err(Error::invalid("record cadence below one second"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticShip {
    pub chars: VesselCharacteristics,
    pub truth: ShipParameters,
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_positive(
    mean: f64,
    sd: f64,
    allow_zero: bool,
    what: &str,
    rng: &mut StreamRng,
) -> Result<f64> {
    for _ in 0..MAX_POSITIVITY_RETRIES {
        let v = mean + sd * normal(rng);
        if v > 0.0 || (allow_zero && v == 0.0) {
            return Ok(v);
        }
    }
    Err(Error::invalid(format!(
        "could not draw a valid {what} in {MAX_POSITIVITY_RETRIES} tries (line value {mean}, scale {sd})"
    )))
}

fn generate_ship(spec: &FleetSpec, index: usize) -> Result<SyntheticShip> {
    let mut rng = stream(spec.seed, "fleet/ship", index as u64);
    let gt = spec.gt_min + (spec.gt_max - spec.gt_min) * rng.random::<f64>();
    let h = &spec.hyper;
    let a = draw_positive(h.a_line(gt), h.sigma_a, false, "a", &mut rng)?;
    let b = draw_positive(h.b_line(gt), h.sigma_b, true, "b", &mut rng)?;
    let sigma = spec.sigma_min + (spec.sigma_max - spec.sigma_min) * rng.random::<f64>();

    // Cruise-ship-like dimensions scaled from tonnage, for the white-box baseline.
    let size = (gt / 1.0e5).cbrt();
    let lwl = 290.0 * size * (0.03 * normal(&mut rng)).exp();
    let breadth = 36.0 * size * (0.03 * normal(&mut rng)).exp();
    let draft = 8.5 * size.sqrt() * (0.03 * normal(&mut rng)).exp();
    let wetted_surface = 0.8 * lwl * (breadth + 2.0 * draft);
    let residual_coeff = 0.35 * (0.1 * normal(&mut rng)).exp();

    Ok(SyntheticShip {
        chars: VesselCharacteristics {
            ship_id: format!("ship_{:03}", index + 1),
            gross_tonnage: gt,
            lwl: Some(lwl),
            breadth: Some(breadth),
            draft: Some(draft),
            wetted_surface: Some(wetted_surface),
            residual_coeff: Some(residual_coeff),
        },
        truth: ShipParameters { a, b, sigma },
    })
}

/// Draws ship characteristics and true parameters.
pub fn generate_fleet(spec: &FleetSpec) -> Result<Vec<SyntheticShip>> {
    spec.validate()?;
    (0..spec.n_ships)
        .into_par_iter()
        .map(|i| generate_ship(spec, i))
        .collect()
}

/// Simulates telemetry for the ship at position `index` of the fleet.
pub fn simulate_telemetry(ship: &SyntheticShip, index: usize, spec: &FleetSpec) -> Result<Vec<TelemetryRecord>> {
    spec.validate()?;
    let cadence = spec.cadence()?;
    let mut rng = stream(spec.seed, "telemetry/ship", index as u64);
    let sp = &spec.speed;
    let mut out = Vec::with_capacity(spec.days * spec.records_per_day);
    for day in 0..spec.days {
        let day_mean = sp.mean + sp.day_sd * normal(&mut rng);
        let prevailing = TAU * rng.random::<f64>();
        for k in 0..spec.records_per_day {
            let stw = if sp.sd > 0.0 {
                truncated_normal(day_mean, sp.sd, sp.min, sp.max, &mut rng)
            } else {
                day_mean.clamp(sp.min, sp.max)
            };
            let u: f64 = rng.random();
            let wind = spec.wind.scale * (-2.0 * (1.0 - u).ln()).sqrt();
            let mut angle = match spec.wind.angle {
                AngleSpec::Uniform => TAU * rng.random::<f64>(),
                AngleSpec::DailyRegime { spread } => (prevailing + spread * normal(&mut rng)).rem_euclid(TAU),
            };
            if angle >= TAU {
                angle = 0.0;
            }
            let x_hydro = stw.powi(3);
            let x_aero = angle.cos() * wind * wind * stw;
            let noise = if ship.truth.sigma > 0.0 {
                ship.truth.sigma * normal(&mut rng)
            } else {
                0.0
            };
            out.push(TelemetryRecord {
                ship_id: ship.chars.ship_id.clone(),
                timestamp: spec.start_time + (day * spec.records_per_day + k) as i64 * cadence,
                stw,
                rel_wind_speed: wind,
                rel_wind_angle: angle,
                power: greybox_mean(ship.truth.a, ship.truth.b, x_hydro, x_aero) + noise,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SyntheticFleet {
    pub ships: Vec<SyntheticShip>,
    pub telemetry: Vec<TelemetryRecord>,
}

impl SyntheticFleet {
    pub fn characteristics(&self) -> Vec<VesselCharacteristics> {
        self.ships.iter().map(|s| s.chars.clone()).collect()
    }
}

/// Fleet plus telemetry for every ship, records grouped by ship in fleet order.
pub fn simulate_fleet(spec: &FleetSpec) -> Result<SyntheticFleet> {
    let ships = generate_fleet(spec)?;
    let per_ship: Vec<Vec<TelemetryRecord>> = ships
        .par_iter()
        .enumerate()
        .map(|(i, s)| simulate_telemetry(s, i, spec))
        .collect::<Result<_>>()?;
    Ok(SyntheticFleet {
        ships,
        telemetry: per_ship.concat(),
    })
}
