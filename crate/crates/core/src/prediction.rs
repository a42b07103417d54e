//! Speed-power curves with pointwise 50% and 95% credible envelopes.
//!
//! Ship-specific envelopes come from a ship's own `(a_i, b_i)` draws.
//! Prior-based envelopes evaluate the hyper-lines at a gross tonnage for
//! every posterior draw, optionally adding a fresh hyper-noise draw so the
//! envelope covers the curve of an unseen ship rather than the fleet line.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::inference::truncnorm::truncated_normal;
use crate::inference::{ship_param_names, HyperParameters, PosteriorChains};
use crate::ingest::TelemetryRecord;
use crate::physics::{greybox_mean, greybox_power, ShipParameters};
use crate::rng::stream;
use crate::stats;

/// Probabilities of the reported bands, lowest first.
pub const ENVELOPE_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvelopeSource {
    ShipSpecific { ship_id: String },
    PriorBased { gross_tonnage: f64 },
}

impl EnvelopeSource {
    pub fn tag(&self) -> &'static str {
        match self {
            EnvelopeSource::ShipSpecific { .. } => "ship-specific",
            EnvelopeSource::PriorBased { .. } => "prior-based",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedPowerEnvelope {
    pub speeds: Vec<f64>,
    pub median: Vec<f64>,
    pub band50_lo: Vec<f64>,
    pub band50_hi: Vec<f64>,
    pub band95_lo: Vec<f64>,
    pub band95_hi: Vec<f64>,
    pub source: EnvelopeSource,
    /// `cos(alpha) U_R^2` used for every grid point, m^2/s^2.
    pub wind_effect: f64,
    /// Seed of the noise stream, when any noise was drawn.
    pub seed: Option<u64>,
    pub include_hyper_noise: bool,
    pub include_observation_noise: bool,
}

impl SpeedPowerEnvelope {
    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    /// Checks band ordering and grid monotonicity.
    pub fn check_nesting(&self) -> Result<()> {
        check_grid(&self.speeds)?;
        for j in 0..self.len() {
            let seq = [
                self.band95_lo[j],
                self.band50_lo[j],
                self.median[j],
                self.band50_hi[j],
                self.band95_hi[j],
            ];
            if seq.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::invalid(format!(
                    "bands are not nested at speed {}",
                    self.speeds[j]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    pub speed_steps: usize,
    pub seed: u64,
    pub include_hyper_noise: bool,
    /// Adds each draw's observation noise to ship-specific curves, for
    /// overlaying data rather than bounding the true curve.
    pub include_observation_noise: bool,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            speed_min: 2.0,
            speed_max: 12.0,
            speed_steps: 50,
            seed: 20190101,
            include_hyper_noise: true,
            include_observation_noise: false,
        }
    }
}

impl EnvelopeConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        speed_grid(self.speed_min, self.speed_max, self.speed_steps)
    }
}

/// `steps` evenly spaced speeds from `min` to `max` inclusive.
pub fn speed_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    ensure_finite("grid minimum", min)?;
    ensure_finite("grid maximum", max)?;
    if steps < 2 || !(max > min) || min < 0.0 {
        return Err(Error::invalid(format!(
            "speed grid needs 0 <= min < max and at least 2 steps, got [{min}, {max}] in {steps}"
        )));
    }
    let h = (max - min) / (steps - 1) as f64;
    let mut g: Vec<f64> = (0..steps).map(|k| min + h * k as f64).collect();
    g[steps - 1] = max;
    Ok(g)
}

fn check_grid(speeds: &[f64]) -> Result<()> {
    if speeds.is_empty() {
        return Err(Error::invalid("speed grid is empty"));
    }
    for &v in speeds {
        ensure_finite("speed", v)?;
        if v < 0.0 {
            return Err(Error::invalid(format!("speed must be >= 0, got {v}")));
        }
    }
    if speeds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("speed grid must be strictly increasing"));
    }
    Ok(())
}

/// `cos(alpha) U_R^2` for each record.
pub fn wind_effects(records: &[TelemetryRecord]) -> Vec<f64> {
    records.iter().map(TelemetryRecord::wind_effect).collect()
}

/// Sample median of wind effects `cos(alpha) U_R^2`.
pub fn median_wind_effect(effects: &[f64]) -> Result<f64> {
    if effects.is_empty() {
        return Err(Error::invalid("median wind effect of an empty sample"));
    }
    stats::median(effects)
}

/// Grey-box power for known parameters; the noise scale is ignored.
pub fn predict_point(params: &ShipParameters, speed: f64, wind_speed: f64, wind_angle: f64) -> Result<f64> {
    greybox_power(params.a, params.b, speed, wind_speed, wind_angle)
}

/// Grey-box power with coefficients read off the hyper-lines at `gt`.
pub fn predict_point_hyper(
    hyper: &HyperParameters,
    gt: f64,
    speed: f64,
    wind_speed: f64,
    wind_angle: f64,
) -> Result<f64> {
    greybox_power(hyper.a_line(gt), hyper.b_line(gt), speed, wind_speed, wind_angle)
}

/// Pointwise quantile bands of `curves[d][j]` (draw `d`, grid point `j`).
pub fn envelope_from_curves(
    speeds: &[f64],
    curves: &[Vec<f64>],
    source: EnvelopeSource,
    wind_effect: f64,
) -> Result<SpeedPowerEnvelope> {
    check_grid(speeds)?;
    if curves.is_empty() {
        return Err(Error::invalid("no draws to summarize"));
    }
    if let Some(c) = curves.iter().find(|c| c.len() != speeds.len()) {
        return Err(Error::DimensionMismatch {
            expected: speeds.len(),
            got: c.len(),
        });
    }
    let bands: Vec<[f64; 5]> = (0..speeds.len())
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = curves.iter().map(|c| c[j]).collect();
            let s = stats::sorted(&column)?;
            Ok(ENVELOPE_PROBS.map(|p| stats::quantile_sorted(&s, p)))
        })
        .collect::<Result<_>>()?;
    let pick = |k: usize| bands.iter().map(|b| b[k]).collect::<Vec<_>>();
    Ok(SpeedPowerEnvelope {
        speeds: speeds.to_vec(),
        band95_lo: pick(0),
        band50_lo: pick(1),
        median: pick(2),
        band50_hi: pick(3),
        band95_hi: pick(4),
        source,
        wind_effect,
        seed: None,
        include_hyper_noise: false,
        include_observation_noise: false,
    })
}

fn curve(a: f64, b: f64, speeds: &[f64], wind_effect: f64) -> Vec<f64> {
    speeds
        .iter()
        .map(|&v| greybox_mean(a, b, v.powi(3), wind_effect * v))
        .collect()
}

fn positive_normal(mean: f64, sd: f64, allow_zero: bool, rng: &mut impl Rng) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    let x = truncated_normal(mean, sd, 0.0, f64::INFINITY, rng);
    if x == 0.0 && !allow_zero {
        f64::MIN_POSITIVE
    } else {
        x
    }
}

/// Envelope for a ship known only by its gross tonnage.
pub fn predict_prior_based(
    chains: &PosteriorChains,
    gt: f64,
    speeds: &[f64],
    wind_effect: f64,
    include_hyper_noise: bool,
    seed: u64,
) -> Result<SpeedPowerEnvelope> {
    ensure_finite("gross tonnage", gt)?;
    if gt <= 0.0 {
        return Err(Error::invalid(format!("gross tonnage must be > 0, got {gt}")));
    }
    ensure_finite("wind effect", wind_effect)?;
    check_grid(speeds)?;
    let hyper = chains.hyper_draws()?;
    let curves: Vec<Vec<f64>> = hyper
        .par_iter()
        .enumerate()
        .map(|(d, h)| {
            let (mut a, mut b) = (h.a_line(gt), h.b_line(gt));
            if include_hyper_noise {
                let mut rng = stream(seed, "envelope/hyper-noise", d as u64);
                a = positive_normal(a, h.sigma_a, false, &mut rng);
                b = positive_normal(b, h.sigma_b, true, &mut rng);
            }
            curve(a, b, speeds, wind_effect)
        })
        .collect();
    let mut env = envelope_from_curves(speeds, &curves, EnvelopeSource::PriorBased { gross_tonnage: gt }, wind_effect)?;
    env.include_hyper_noise = include_hyper_noise;
    env.seed = include_hyper_noise.then_some(seed);
    Ok(env)
}

/// Envelope over one ship's own coefficient draws.
///
/// With `observation_noise` set, each draw's curve is perturbed by one
/// Gaussian draw per grid point with that draw's `sigma_i`.
pub fn predict_ship_specific(
    chains: &PosteriorChains,
    ship_id: &str,
    speeds: &[f64],
    wind_effect: f64,
    observation_noise: Option<u64>,
) -> Result<SpeedPowerEnvelope> {
    ensure_finite("wind effect", wind_effect)?;
    check_grid(speeds)?;
    let coefs = chains.ship_coefficients(ship_id)?;
    let sigmas = match observation_noise {
        Some(_) => Some(chains.draws_of(&ship_param_names(ship_id)[2])?),
        None => None,
    };
    let curves: Vec<Vec<f64>> = coefs
        .par_iter()
        .enumerate()
        .map(|(d, &(a, b))| {
            let mut c = curve(a, b, speeds, wind_effect);
            if let (Some(seed), Some(s)) = (observation_noise, &sigmas) {
                let mut rng = stream(seed, "envelope/observation-noise", d as u64);
                for p in c.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *p += s[d] * z;
                }
            }
            c
        })
        .collect();
    let mut env = envelope_from_curves(
        speeds,
        &curves,
        EnvelopeSource::ShipSpecific {
            ship_id: ship_id.to_string(),
        },
        wind_effect,
    )?;
    env.include_observation_noise = observation_noise.is_some();
    env.seed = observation_noise;
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::HYPER_NAMES;

    fn hyper_chains(h: HyperParameters, n: usize) -> PosteriorChains {
        let names: Vec<String> = HYPER_NAMES.iter().map(|s| s.to_string()).collect();
        let row = [h.lambda1, h.lambda2, h.lambda3, h.lambda4, h.sigma_a, h.sigma_b];
        let draws = (0..2 * n).flat_map(|_| row).collect();
        PosteriorChains::new(names, 2, n, draws).unwrap()
    }

    fn ship_chains(id: &str, a: &[f64], b: &[f64]) -> PosteriorChains {
        let names = ship_param_names(id).to_vec();
        let n = a.len() / 2;
        let draws = (0..a.len()).flat_map(|k| [a[k], b[k], 1.0]).collect();
        PosteriorChains::new(names, 2, n, draws).unwrap()
    }

    #[test]
    fn median_wind_effect_examples() {
        assert_eq!(median_wind_effect(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median_wind_effect(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median_wind_effect(&[-500.0, 0.0, 500.0, 500.0]).unwrap(), 250.0);
        assert!(median_wind_effect(&[]).is_err());
    }

    #[test]
    fn point_predictions() {
        let p = ShipParameters { a: 30000.0, b: 0.0, sigma: 1.0 };
        assert_eq!(predict_point(&p, 10.0, 3.0, 1.0).unwrap(), 3.0e7);
        let p = ShipParameters { a: 0.0, b: 50.0, sigma: 1.0 };
        assert_eq!(predict_point(&p, 5.0, 10.0, 0.0).unwrap(), 2.5e4);
        let p = ShipParameters { a: 30000.0, b: 50.0, sigma: 1.0 };
        assert!((predict_point(&p, 5.0, 10.0, std::f64::consts::PI).unwrap() - 3.725e6).abs() < 1e-6);
    }

    #[test]
    fn degenerate_prior_envelope_collapses() {
        let h = HyperParameters {
            lambda1: 1000.0,
            lambda2: 0.2,
            lambda3: 10.0,
            lambda4: 0.001,
            sigma_a: 0.0,
            sigma_b: 0.0,
        };
        let grid = speed_grid(2.0, 12.0, 50).unwrap();
        let env = predict_prior_based(&hyper_chains(h, 20), 80_000.0, &grid, 30.0, true, 1).unwrap();
        for (j, &v) in grid.iter().enumerate() {
            assert_eq!(env.band95_hi[j] - env.band95_lo[j], 0.0);
            let expect = h.a_line(80_000.0) * v.powi(3) + h.b_line(80_000.0) * 30.0 * v;
            assert!((env.median[j] - expect).abs() <= 1e-9 * expect);
        }
    }

    #[test]
    fn point_mass_ship_envelope_is_the_curve() {
        let chains = ship_chains("s", &[2.0; 8], &[3.0; 8]);
        let grid = [0.0, 1.0, 2.0];
        let env = predict_ship_specific(&chains, "s", &grid, 4.0, None).unwrap();
        assert_eq!(env.median, vec![0.0, 2.0 + 12.0, 16.0 + 24.0]);
        assert_eq!(env.band95_lo, env.band95_hi);
        assert!(predict_ship_specific(&chains, "t", &grid, 4.0, None).is_err());
    }

    #[test]
    fn wider_posterior_gives_wider_envelope() {
        let narrow: Vec<f64> = (0..40).map(|k| 100.0 + (k % 10) as f64).collect();
        let wide: Vec<f64> = narrow.iter().map(|a| 100.0 + 3.0 * (a - 100.0)).collect();
        let grid = speed_grid(2.0, 12.0, 11).unwrap();
        let e1 = predict_ship_specific(&ship_chains("s", &narrow, &[0.0; 40]), "s", &grid, 0.0, None).unwrap();
        let e2 = predict_ship_specific(&ship_chains("s", &wide, &[0.0; 40]), "s", &grid, 0.0, None).unwrap();
        for j in 0..grid.len() {
            assert!(e2.band95_hi[j] - e2.band95_lo[j] >= e1.band95_hi[j] - e1.band95_lo[j]);
            assert!(e2.band50_hi[j] - e2.band50_lo[j] >= e1.band50_hi[j] - e1.band50_lo[j]);
        }
    }

    #[test]
    fn grid_defaults() {
        let g = EnvelopeConfig::default().grid().unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 2.0);
        assert_eq!(g[49], 12.0);
        assert!(speed_grid(3.0, 3.0, 10).is_err());
        assert!(speed_grid(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn missing_hyper_parameters_error() {
        let chains = ship_chains("s", &[1.0; 4], &[1.0; 4]);
        assert!(predict_prior_based(&chains, 1.0, &[1.0, 2.0], 0.0, false, 0).is_err());
    }
}
