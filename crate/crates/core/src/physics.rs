//! Deterministic forward models: the two-term grey-box power equation and a
//! STEAM2-style white-box resistance estimate.
//!
//! Grey box: `P = a V^3 + b cos(alpha) U_R^2 V`, with `a` the hydrodynamic
//! and `b` the aerodynamic resistance coefficient (both kg/m).
//!
//! White box: `P = (R_F + R_R) V`, where
//! `R_F = C_F (rho/2) S V^2` with the ITTC-1957 line
//! `C_F = 0.075 / (log10(Re) - 2)^2`, and `R_R = C_R (rho/2) (B T / 10) V^2`.
//! The wetted surface `S` and residual coefficient `C_R` are inputs; this
//! crate does not estimate them from hull regressions.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselCharacteristics {
    pub ship_id: String,
    pub gross_tonnage: f64,
    /// Waterline length, m.
    pub lwl: Option<f64>,
    /// Breadth, m.
    pub breadth: Option<f64>,
    /// Draft, m.
    pub draft: Option<f64>,
    /// Wetted surface, m^2.
    pub wetted_surface: Option<f64>,
    /// Residual resistance coefficient.
    pub residual_coeff: Option<f64>,
}

impl VesselCharacteristics {
    pub fn new(ship_id: impl Into<String>, gross_tonnage: f64) -> Self {
        VesselCharacteristics {
            ship_id: ship_id.into(),
            gross_tonnage,
            lwl: None,
            breadth: None,
            draft: None,
            wetted_surface: None,
            residual_coeff: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gross_tonnage.is_finite() && self.gross_tonnage > 0.0) {
            return Err(Error::invalid(format!(
                "ship {}: gross tonnage must be positive, got {}",
                self.ship_id, self.gross_tonnage
            )));
        }
        let optional = [
            ("lwl", self.lwl),
            ("breadth", self.breadth),
            ("draft", self.draft),
            ("wetted surface", self.wetted_surface),
            ("residual coefficient", self.residual_coeff),
        ];
        for (name, value) in optional {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!(
                        "ship {}: {name} must be positive when present, got {v}",
                        self.ship_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterProperties {
    /// kg/m^3
    pub density: f64,
    /// m^2/s
    pub kinematic_viscosity: f64,
}

impl Default for WaterProperties {
    /// Seawater at roughly 15 degrees C.
    fn default() -> Self {
        WaterProperties {
            density: 1025.0,
            kinematic_viscosity: 1.188e-6,
        }
    }
}

impl WaterProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::invalid("water density must be positive"));
        }
        if !(self.kinematic_viscosity.is_finite() && self.kinematic_viscosity > 0.0) {
            return Err(Error::invalid("kinematic viscosity must be positive"));
        }
        Ok(())
    }
}

/// Per-ship grey-box coefficients and observation noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShipParameters {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl ShipParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::invalid(format!("a must be positive, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::invalid(format!("b must be non-negative, got {}", self.b)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Mean grey-box propulsion power in watts.
///
/// Linear in `(a, b)`. Negative totals (strong tailwind) are returned as is.
pub fn greybox_power(a: f64, b: f64, speed: f64, wind_speed: f64, wind_angle: f64) -> Result<f64> {
    for (name, v) in [
        ("a", a),
        ("b", b),
        ("speed", speed),
        ("wind speed", wind_speed),
        ("wind angle", wind_angle),
    ] {
        ensure_finite(name, v)?;
    }
    if speed < 0.0 {
        return Err(Error::invalid(format!("speed must be >= 0, got {speed}")));
    }
    if wind_speed < 0.0 {
        return Err(Error::invalid(format!(
            "relative wind speed must be >= 0, got {wind_speed}"
        )));
    }
    Ok(greybox_mean(a, b, speed.powi(3), wind_angle.cos() * wind_speed.powi(2) * speed))
}

/// The grey-box mean written directly on the regressors `V^3` and
/// `cos(alpha) U_R^2 V`.
#[inline]
pub fn greybox_mean(a: f64, b: f64, x_hydro: f64, x_aero: f64) -> f64 {
    a * x_hydro + b * x_aero
}

pub fn reynolds_number(speed: f64, lwl: f64, nu: f64) -> Result<f64> {
    for (name, v) in [("speed", speed), ("lwl", lwl), ("viscosity", nu)] {
        ensure_finite(name, v)?;
        if v <= 0.0 {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(speed * lwl / nu)
}

/// ITTC-1957 model-ship correlation line.
pub fn ittc_friction_coefficient(reynolds: f64) -> Result<f64> {
    ensure_finite("Reynolds number", reynolds)?;
    if reynolds <= 100.0 {
        return Err(Error::invalid(format!(
            "Reynolds number must exceed 100, got {reynolds}"
        )));
    }
    let d = reynolds.log10() - 2.0;
    Ok(0.075 / (d * d))
}

fn check_resistance_inputs(named: &[(&str, f64)], speed: f64) -> Result<()> {
    for &(name, v) in named {
        ensure_finite(name, v)?;
        if v < 0.0 {
            return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
        }
    }
    ensure_finite("speed", speed)?;
    if speed < 0.0 {
        return Err(Error::invalid(format!("speed must be >= 0, got {speed}")));
    }
    Ok(())
}

/// Frictional resistance in newtons.
pub fn frictional_resistance(cf: f64, rho: f64, surface: f64, speed: f64) -> Result<f64> {
    check_resistance_inputs(&[("C_F", cf), ("density", rho), ("wetted surface", surface)], speed)?;
    Ok(cf * (rho / 2.0) * surface * speed * speed)
}

/// Residual resistance in newtons.
pub fn residual_resistance(cr: f64, rho: f64, breadth: f64, draft: f64, speed: f64) -> Result<f64> {
    check_resistance_inputs(
        &[("C_R", cr), ("density", rho), ("breadth", breadth), ("draft", draft)],
        speed,
    )?;
    Ok(cr * (rho / 2.0) * (breadth * draft / 10.0) * speed * speed)
}

/// Crude wetted-surface stand-in, `factor * lwl * (B + 2T)`.
pub fn heuristic_wetted_surface(lwl: f64, breadth: f64, draft: f64, factor: f64) -> f64 {
    factor * lwl * (breadth + 2.0 * draft)
}

/// Resolved white-box inputs for one ship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteBoxHull {
    pub lwl: f64,
    pub breadth: f64,
    pub draft: f64,
    pub wetted_surface: f64,
    pub residual_coeff: f64,
    /// True when `wetted_surface` came from [`heuristic_wetted_surface`].
    pub heuristic_surface: bool,
}

impl WhiteBoxHull {
    /// Collects the white-box inputs of a ship. A missing wetted surface is
    /// filled by the heuristic only when `heuristic_factor` is given.
    pub fn resolve(chars: &VesselCharacteristics, heuristic_factor: Option<f64>) -> Result<Self> {
        let missing = |what| Error::WhiteBoxUnavailable {
            ship_id: chars.ship_id.clone(),
            missing: what,
        };
        let lwl = chars.lwl.ok_or_else(|| missing("lwl"))?;
        let breadth = chars.breadth.ok_or_else(|| missing("breadth"))?;
        let draft = chars.draft.ok_or_else(|| missing("draft"))?;
        let residual_coeff = chars.residual_coeff.ok_or_else(|| missing("C_R"))?;
        let (wetted_surface, heuristic_surface) = match (chars.wetted_surface, heuristic_factor) {
            (Some(s), _) => (s, false),
            (None, Some(f)) => (heuristic_wetted_surface(lwl, breadth, draft, f), true),
            (None, None) => return Err(missing("wetted surface")),
        };
        Ok(WhiteBoxHull {
            lwl,
            breadth,
            draft,
            wetted_surface,
            residual_coeff,
            heuristic_surface,
        })
    }

    pub fn power(&self, water: &WaterProperties, speed: f64) -> Result<f64> {
        let re = reynolds_number(speed, self.lwl, water.kinematic_viscosity)?;
        let cf = ittc_friction_coefficient(re)?;
        let rf = frictional_resistance(cf, water.density, self.wetted_surface, speed)?;
        let rr = residual_resistance(
            self.residual_coeff,
            water.density,
            self.breadth,
            self.draft,
            speed,
        )?;
        Ok((rf + rr) * speed)
    }
}

/// White-box propulsion power `(R_F + R_R) V` in watts. Requires the
/// characteristics to carry both `S` and `C_R`.
pub fn steam2_power(chars: &VesselCharacteristics, water: &WaterProperties, speed: f64) -> Result<f64> {
    WhiteBoxHull::resolve(chars, None)?.power(water, speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn fixture_ship() -> VesselCharacteristics {
        VesselCharacteristics {
            lwl: Some(300.0),
            breadth: Some(36.0),
            draft: Some(8.5),
            wetted_surface: Some(10_000.0),
            residual_coeff: Some(1e-3),
            ..VesselCharacteristics::new("s1", 100_000.0)
        }
    }

    #[test]
    fn greybox_examples() {
        assert_eq!(greybox_power(30_000.0, 0.0, 10.0, 7.0, 1.0).unwrap(), 3.0e7);
        assert_eq!(greybox_power(0.0, 50.0, 5.0, 10.0, 0.0).unwrap(), 2.5e4);
        let p = greybox_power(30_000.0, 50.0, 5.0, 10.0, PI).unwrap();
        assert!(rel(p, 3.725e6) < 1e-14);
    }

    #[test]
    fn greybox_rejects_bad_inputs() {
        assert!(greybox_power(1.0, 1.0, -1.0, 0.0, 0.0).is_err());
        assert!(greybox_power(1.0, 1.0, 1.0, -0.5, 0.0).is_err());
        assert!(greybox_power(1.0, 1.0, f64::NAN, 0.0, 0.0).is_err());
        assert!(greybox_power(1.0, 1.0, 1.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn headwind_beats_crosswind_beats_tailwind() {
        let p = |alpha| greybox_power(2.0e4, 800.0, 8.0, 10.0, alpha).unwrap();
        assert!(p(0.0) > p(FRAC_PI_2));
        assert!(p(FRAC_PI_2) > p(PI));
    }

    #[test]
    fn reynolds_examples() {
        assert!(rel(reynolds_number(10.0, 300.0, 1.188e-6).unwrap(), 2.525_252_525e9) < 1e-9);
        assert_eq!(reynolds_number(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(rel(reynolds_number(2.0, 150.0, 1e-6).unwrap(), 3.0e8) < 1e-14);
        assert!(reynolds_number(0.0, 1.0, 1.0).is_err());
        assert!(reynolds_number(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn ittc_examples() {
        assert!((ittc_friction_coefficient(1e9).unwrap() - 0.075 / 49.0).abs() < 1e-15);
        assert!((ittc_friction_coefficient(1e12).unwrap() - 7.5e-4).abs() < 1e-15);
        assert!(ittc_friction_coefficient(100.0).is_err());
        assert!(ittc_friction_coefficient(50.0).is_err());
    }

    #[test]
    fn resistance_examples() {
        assert!(rel(frictional_resistance(1.5e-3, 1025.0, 10_000.0, 10.0).unwrap(), 768_750.0) < 1e-14);
        assert_eq!(frictional_resistance(1.5e-3, 1025.0, 10_000.0, 0.0).unwrap(), 0.0);
        assert!(rel(frictional_resistance(2e-3, 1000.0, 1.0, 1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(residual_resistance(1e-3, 1025.0, 36.0, 8.5, 10.0).unwrap(), 1568.25) < 1e-12);
        assert_eq!(residual_resistance(1e-3, 1025.0, 36.0, 8.5, 0.0).unwrap(), 0.0);
        assert!(rel(residual_resistance(1e-2, 1000.0, 10.0, 2.0, 1.0).unwrap(), 10.0) < 1e-14);
        assert!(frictional_resistance(-1.0, 1025.0, 1.0, 1.0).is_err());
        assert!(residual_resistance(1.0, f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn steam2_requires_white_box_inputs() {
        let mut ship = fixture_ship();
        ship.wetted_surface = None;
        let err = steam2_power(&ship, &WaterProperties::default(), 10.0).unwrap_err();
        assert!(matches!(err, Error::WhiteBoxUnavailable { .. }));
        let hull = WhiteBoxHull::resolve(&ship, Some(1.0)).unwrap();
        assert!(hull.heuristic_surface);
        assert_eq!(hull.wetted_surface, 300.0 * (36.0 + 17.0));
    }

    #[test]
    fn steam2_surface_linearity_and_small_speed() {
        let water = WaterProperties::default();
        let ship = fixture_ship();
        let mut doubled = ship.clone();
        doubled.wetted_surface = Some(20_000.0);
        let v = 7.0;
        let re = reynolds_number(v, 300.0, water.kinematic_viscosity).unwrap();
        let cf = ittc_friction_coefficient(re).unwrap();
        let rf = frictional_resistance(cf, water.density, 10_000.0, v).unwrap();
        let p1 = steam2_power(&ship, &water, v).unwrap();
        let p2 = steam2_power(&doubled, &water, v).unwrap();
        assert!(rel(p2 - p1, rf * v) < 1e-12);
        let tiny = steam2_power(&ship, &water, 1e-4).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-3);
    }

    #[test]
    fn steam2_increasing_in_speed() {
        let water = WaterProperties::default();
        let ship = fixture_ship();
        let powers: Vec<f64> = (1..=15)
            .map(|v| steam2_power(&ship, &water, v as f64).unwrap())
            .collect();
        assert!(powers.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn characteristics_validation() {
        assert!(fixture_ship().validate().is_ok());
        let mut bad = fixture_ship();
        bad.gross_tonnage = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = fixture_ship();
        bad.residual_coeff = Some(-1.0);
        assert!(bad.validate().is_err());
    }
}
