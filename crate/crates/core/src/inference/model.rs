use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureRow, NoonReport};
use crate::physics::VesselCharacteristics;
use crate::stats;

/// Hyper-model: `a_i ~ N(lambda1 + lambda2 w_i, sigma_a)`,
/// `b_i ~ N(lambda3 + lambda4 w_i, sigma_b)` with `w_i` the gross tonnage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParameters {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

impl HyperParameters {
    pub fn a_line(&self, gt: f64) -> f64 {
        self.lambda1 + self.lambda2 * gt
    }

    pub fn b_line(&self, gt: f64) -> f64 {
        self.lambda3 + self.lambda4 * gt
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.sigma_a,
            self.sigma_b,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hyper-parameters must be finite"));
        }
        if self.sigma_a < 0.0 || self.sigma_b < 0.0 {
            return Err(Error::invalid("hyper-model scales must be non-negative"));
        }
        Ok(())
    }
}

/// Sufficient statistics of one ship's regression rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShipStats {
    pub n: usize,
    pub shh: f64,
    pub sha: f64,
    pub saa: f64,
    pub shy: f64,
    pub say: f64,
    pub mean_y: f64,
    pub sd_y: f64,
}

impl ShipStats {
    pub fn from_rows(rows: &[FeatureRow]) -> Self {
        let mut s = ShipStats {
            n: rows.len(),
            shh: 0.0,
            sha: 0.0,
            saa: 0.0,
            shy: 0.0,
            say: 0.0,
            mean_y: 0.0,
            sd_y: 0.0,
        };
        for r in rows {
            s.shh += r.x_hydro * r.x_hydro;
            s.sha += r.x_hydro * r.x_aero;
            s.saa += r.x_aero * r.x_aero;
            s.shy += r.x_hydro * r.y;
            s.say += r.x_aero * r.y;
        }
        let ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
        s.mean_y = stats::mean(&ys);
        s.sd_y = stats::std_dev(&ys);
        s
    }

    /// Whether the aerodynamic coefficient is identified by the data alone:
    /// a non-zero wind regressor that is not collinear with `V^3`.
    pub fn b_identifiable(&self) -> bool {
        self.saa > 0.0 && self.shh > 0.0 && 1.0 - self.sha * self.sha / (self.shh * self.saa) > 1e-8
    }

    /// Unconstrained least squares `(a, b)`; `b` is `None` when not identified,
    /// in which case `a` comes from regressing on `V^3` alone.
    pub fn least_squares(&self) -> (f64, Option<f64>) {
        if self.b_identifiable() {
            let det = self.shh * self.saa - self.sha * self.sha;
            let a = (self.saa * self.shy - self.sha * self.say) / det;
            let b = (self.shh * self.say - self.sha * self.shy) / det;
            (a, Some(b))
        } else if self.shh > 0.0 {
            (self.shy / self.shh, None)
        } else {
            (0.0, None)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShipData {
    pub chars: VesselCharacteristics,
    pub rows: Vec<FeatureRow>,
    pub stats: ShipStats,
}

impl ShipData {
    pub fn new(chars: VesselCharacteristics, rows: Vec<FeatureRow>) -> Result<Self> {
        chars.validate()?;
        if rows.is_empty() {
            return Err(Error::invalid(format!("ship {} has no observations", chars.ship_id)));
        }
        if rows
            .iter()
            .any(|r| !(r.x_hydro.is_finite() && r.x_aero.is_finite() && r.y.is_finite()))
        {
            return Err(Error::invalid(format!("ship {}: non-finite feature", chars.ship_id)));
        }
        let stats = ShipStats::from_rows(&rows);
        Ok(ShipData { chars, rows, stats })
    }

    pub fn ship_id(&self) -> &str {
        &self.chars.ship_id
    }

    /// Residual sum of squares of the grey-box mean at `(a, b)`.
    pub fn rss(&self, a: f64, b: f64) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let e = r.y - a * r.x_hydro - b * r.x_aero;
                e * e
            })
            .sum()
    }
}

/// Multipliers applied to data-driven reference scales to form the prior box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundMultipliers {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl Default for BoundMultipliers {
    fn default() -> Self {
        BoundMultipliers {
            a: 10.0,
            b: 10.0,
            sigma: 10.0,
        }
    }
}

/// Lower limit of every scale parameter, relative to its upper limit. Keeps
/// the posterior proper for noise-free data.
pub const SIGMA_FLOOR_RATIO: f64 = 1e-9;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn scale(hi: f64) -> Self {
        Interval {
            lo: hi * SIGMA_FLOOR_RATIO,
            hi,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Uniform prior support. `a_i` lives in `(0, a_max]`, `b_i` in
/// `[0, b_max]`; the hyper-line coefficients are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBounds {
    pub a_max: f64,
    pub b_max: f64,
    pub ship_sigma: Vec<Interval>,
    pub sigma_a: Interval,
    pub sigma_b: Interval,
}

impl PriorBounds {
    /// Derives a box from per-ship least-squares fits.
    ///
    /// * `a_max = mult.a * max_i |a_ols_i|`
    /// * `b_max = mult.b * max_i |b_ols_i|` over ships with identified `b`,
    ///   falling back to the `a` reference when none is identified
    /// * `sigma_i <= mult.sigma * sd(y_i)`
    /// * `sigma_a`, `sigma_b <= mult.sigma * across-ship s.d. of the OLS
    ///   coefficients` (or the coefficient box when that is degenerate)
    pub fn from_data(ships: &[ShipData], mult: &BoundMultipliers) -> Result<Self> {
        let fits: Vec<(f64, Option<f64>)> = ships.iter().map(|s| s.stats.least_squares()).collect();
        let a_ref = fits.iter().map(|f| f.0.abs()).fold(0.0, f64::max);
        if !(a_ref > 0.0 && a_ref.is_finite()) {
            return Err(Error::invalid(
                "cannot derive a prior box: no ship informs the hydrodynamic coefficient",
            ));
        }
        let b_hats: Vec<f64> = fits.iter().filter_map(|f| f.1).collect();
        let b_ref = b_hats.iter().map(|b| b.abs()).fold(0.0, f64::max);
        let b_ref = if b_ref > 0.0 { b_ref } else { a_ref };
        let a_max = mult.a * a_ref;
        let b_max = mult.b * b_ref;

        let ship_sigma = ships
            .iter()
            .map(|s| {
                let scale = if s.stats.sd_y > 0.0 {
                    s.stats.sd_y
                } else if s.stats.mean_y != 0.0 {
                    s.stats.mean_y.abs()
                } else {
                    1.0
                };
                Interval::scale(mult.sigma * scale)
            })
            .collect();

        let a_hats: Vec<f64> = fits.iter().map(|f| f.0).collect();
        let sd_a = stats::std_dev(&a_hats);
        let sd_b = stats::std_dev(&b_hats);
        let sigma_a = Interval::scale(if sd_a > 0.0 { mult.sigma * sd_a } else { a_max });
        let sigma_b = Interval::scale(if sd_b > 0.0 { mult.sigma * sd_b } else { b_max });
        Ok(PriorBounds {
            a_max,
            b_max,
            ship_sigma,
            sigma_a,
            sigma_b,
        })
    }
}

/// Fixed values for all scale parameters, used when variances are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub ship_sigma: Vec<f64>,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

/// Data and prior for a joint fit over many ships.
#[derive(Debug, Clone)]
pub struct FleetModel {
    ships: Vec<ShipData>,
    bounds: PriorBounds,
    gt_center: f64,
    fixed_scales: Option<Scales>,
}

impl FleetModel {
    pub fn new(ships: Vec<ShipData>, mult: &BoundMultipliers) -> Result<Self> {
        Self::check_ships(&ships)?;
        let bounds = PriorBounds::from_data(&ships, mult)?;
        Self::with_bounds(ships, bounds)
    }

    pub fn with_bounds(ships: Vec<ShipData>, bounds: PriorBounds) -> Result<Self> {
        Self::check_ships(&ships)?;
        if bounds.ship_sigma.len() != ships.len() {
            return Err(Error::invalid("prior box has the wrong number of ship scales"));
        }
        let nonempty = |iv: &Interval| iv.lo > 0.0 && iv.hi > iv.lo && iv.hi.is_finite();
        if !(bounds.a_max > 0.0 && bounds.b_max > 0.0)
            || !bounds.ship_sigma.iter().all(nonempty)
            || !nonempty(&bounds.sigma_a)
            || !nonempty(&bounds.sigma_b)
        {
            return Err(Error::invalid("prior box is empty"));
        }
        let gts: Vec<f64> = ships.iter().map(|s| s.chars.gross_tonnage).collect();
        Ok(FleetModel {
            gt_center: stats::mean(&gts),
            ships,
            bounds,
            fixed_scales: None,
        })
    }

    fn check_ships(ships: &[ShipData]) -> Result<()> {
        if ships.is_empty() {
            return Err(Error::invalid("fleet has no ships"));
        }
        let mut seen = HashSet::new();
        for s in ships {
            if !seen.insert(s.ship_id()) {
                return Err(Error::invalid(format!("duplicate ship id {}", s.ship_id())));
            }
        }
        Ok(())
    }

    /// Builds a fleet from noon reports, matching ships by id. Ships present
    /// in `chars` without any report are skipped.
    pub fn from_noon_reports(
        chars: &[VesselCharacteristics],
        reports: &[NoonReport],
        mult: &BoundMultipliers,
    ) -> Result<Self> {
        let mut rows: BTreeMap<&str, Vec<FeatureRow>> = BTreeMap::new();
        for r in reports {
            rows.entry(r.ship_id.as_str()).or_default().push(r.feature_row());
        }
        Self::from_rows(chars, rows, mult)
    }

    pub fn from_rows(
        chars: &[VesselCharacteristics],
        mut rows: BTreeMap<&str, Vec<FeatureRow>>,
        mult: &BoundMultipliers,
    ) -> Result<Self> {
        let known: HashSet<&str> = chars.iter().map(|c| c.ship_id.as_str()).collect();
        if let Some(id) = rows.keys().find(|id| !known.contains(*id)) {
            return Err(Error::UnknownShip(id.to_string()));
        }
        let mut ships = Vec::new();
        for c in chars {
            if let Some(r) = rows.remove(c.ship_id.as_str()) {
                ships.push(ShipData::new(c.clone(), r)?);
            }
        }
        Self::new(ships, mult)
    }

    /// Holds all scale parameters at these values when the sampler runs with
    /// frozen variances.
    pub fn with_fixed_scales(mut self, scales: Scales) -> Result<Self> {
        if scales.ship_sigma.len() != self.ships.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ships.len(),
                got: scales.ship_sigma.len(),
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !scales.ship_sigma.iter().all(|&v| positive(v))
            || !positive(scales.sigma_a)
            || !positive(scales.sigma_b)
        {
            return Err(Error::invalid("fixed scales must be positive"));
        }
        self.fixed_scales = Some(scales);
        Ok(self)
    }

    pub fn ships(&self) -> &[ShipData] {
        &self.ships
    }

    pub fn bounds(&self) -> &PriorBounds {
        &self.bounds
    }

    pub fn fixed_scales(&self) -> Option<&Scales> {
        self.fixed_scales.as_ref()
    }

    /// Fleet-mean gross tonnage, used to center the hyper-model covariate.
    pub fn gt_center(&self) -> f64 {
        self.gt_center
    }

    pub fn ship_index(&self, ship_id: &str) -> Option<usize> {
        self.ships.iter().position(|s| s.ship_id() == ship_id)
    }

    /// Length of the full parameter vector: `(a, b, sigma)` per ship followed
    /// by the six hyper-parameters.
    pub fn dim(&self) -> usize {
        3 * self.ships.len() + 6
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for s in &self.ships {
            names.extend(ship_param_names(s.ship_id()));
        }
        names.extend(HYPER_NAMES.iter().map(|s| s.to_string()));
        names
    }
}

pub const HYPER_NAMES: [&str; 6] = ["lambda1", "lambda2", "lambda3", "lambda4", "sigma_a", "sigma_b"];

pub fn ship_param_names(ship_id: &str) -> [String; 3] {
    [
        format!("a[{ship_id}]"),
        format!("b[{ship_id}]"),
        format!("sigma[{ship_id}]"),
    ]
}

fn normal_logpdf(residual: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * (residual / sd).powi(2)
}

fn check_dim(fleet: &FleetModel, theta: &[f64]) -> Result<()> {
    if theta.len() != fleet.dim() {
        return Err(Error::DimensionMismatch {
            expected: fleet.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Sum over ships of the Gaussian observation log-likelihoods, with the
/// ship-level prior box applied (`-inf` outside). This is the log posterior
/// of independent per-ship fits up to a constant.
pub fn log_likelihood(fleet: &FleetModel, theta: &[f64]) -> Result<f64> {
    check_dim(fleet, theta)?;
    let bounds = fleet.bounds();
    let mut total = 0.0;
    for (i, ship) in fleet.ships().iter().enumerate() {
        let (a, b, sigma) = (theta[3 * i], theta[3 * i + 1], theta[3 * i + 2]);
        if !(a > 0.0 && a <= bounds.a_max)
            || !(0.0..=bounds.b_max).contains(&b)
            || !bounds.ship_sigma[i].contains(sigma)
        {
            return Ok(f64::NEG_INFINITY);
        }
        total += ship
            .rows
            .iter()
            .map(|r| normal_logpdf(r.y - a * r.x_hydro - b * r.x_aero, sigma))
            .sum::<f64>();
    }
    Ok(total)
}

/// Log density of the ship coefficients around the hyper-lines, with the
/// scale box applied. Flat-prior constants are zero.
pub fn hyper_log_density(fleet: &FleetModel, theta: &[f64]) -> Result<f64> {
    check_dim(fleet, theta)?;
    let n = fleet.ships().len();
    let h = &theta[3 * n..];
    let hyper = HyperParameters {
        lambda1: h[0],
        lambda2: h[1],
        lambda3: h[2],
        lambda4: h[3],
        sigma_a: h[4],
        sigma_b: h[5],
    };
    let bounds = fleet.bounds();
    if h[..4].iter().any(|v| !v.is_finite())
        || !bounds.sigma_a.contains(hyper.sigma_a)
        || !bounds.sigma_b.contains(hyper.sigma_b)
    {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for (i, ship) in fleet.ships().iter().enumerate() {
        let w = ship.chars.gross_tonnage;
        total += normal_logpdf(theta[3 * i] - hyper.a_line(w), hyper.sigma_a);
        total += normal_logpdf(theta[3 * i + 1] - hyper.b_line(w), hyper.sigma_b);
    }
    Ok(total)
}

/// Joint log posterior of all ship parameters and hyper-parameters
/// (uncentered `lambda`), up to the flat-prior normalizing constants.
pub fn log_posterior(fleet: &FleetModel, theta: &[f64]) -> Result<f64> {
    let ll = log_likelihood(fleet, theta)?;
    if ll == f64::NEG_INFINITY {
        return Ok(ll);
    }
    Ok(ll + hyper_log_density(fleet, theta)?)
}
