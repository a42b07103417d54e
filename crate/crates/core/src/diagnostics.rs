//! Residual analytics: residual series per model, Gaussian kernel density
//! estimates, LOWESS residual-vs-speed curves and residual quantiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::inference::PosteriorChains;
use crate::ingest::FeatureRow;
use crate::physics::{greybox_mean, VesselCharacteristics, WaterProperties, WhiteBoxHull};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Steam2,
    PriorBased,
    ShipSpecific,
}

impl ModelTag {
    pub const ALL: [ModelTag; 3] = [ModelTag::Steam2, ModelTag::PriorBased, ModelTag::ShipSpecific];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Steam2 => "steam2",
            ModelTag::PriorBased => "prior-based",
            ModelTag::ShipSpecific => "ship-specific",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model tag {s:?}")))
    }
}

/// Speed implied by a regression row, `cbrt(x_hydro)`. For interval means
/// this is the cube-mean speed of the interval.
pub fn row_speed(row: &FeatureRow) -> f64 {
    row.x_hydro.cbrt()
}

#[derive(Debug, Clone, PartialEq)]
enum Evaluator {
    Greybox { a: f64, b: f64 },
    WhiteBox { hull: WhiteBoxHull, water: WaterProperties },
}

/// A power model bound to one ship.
#[derive(Debug, Clone, PartialEq)]
pub struct ShipModel {
    pub ship_id: String,
    pub tag: ModelTag,
    eval: Evaluator,
}

impl ShipModel {
    pub fn greybox(ship_id: impl Into<String>, tag: ModelTag, a: f64, b: f64) -> Self {
        ShipModel {
            ship_id: ship_id.into(),
            tag,
            eval: Evaluator::Greybox { a, b },
        }
    }

    /// White-box model; `heuristic_factor` fills a missing wetted surface.
    pub fn steam2(chars: &VesselCharacteristics, water: WaterProperties, heuristic_factor: Option<f64>) -> Result<Self> {
        water.validate()?;
        Ok(ShipModel {
            ship_id: chars.ship_id.clone(),
            tag: ModelTag::Steam2,
            eval: Evaluator::WhiteBox {
                hull: WhiteBoxHull::resolve(chars, heuristic_factor)?,
                water,
            },
        })
    }

    /// Ship-specific point model at the posterior medians of `a_i`, `b_i`.
    pub fn ship_specific(chains: &PosteriorChains, ship_id: &str) -> Result<Self> {
        let coefs = chains.ship_coefficients(ship_id)?;
        let a: Vec<f64> = coefs.iter().map(|c| c.0).collect();
        let b: Vec<f64> = coefs.iter().map(|c| c.1).collect();
        Ok(Self::greybox(ship_id, ModelTag::ShipSpecific, stats::median(&a)?, stats::median(&b)?))
    }

    /// Prior-based point model: posterior medians of the hyper-lines at the
    /// ship's gross tonnage.
    pub fn prior_based(chains: &PosteriorChains, chars: &VesselCharacteristics) -> Result<Self> {
        let gt = chars.gross_tonnage;
        let hyper = chains.hyper_draws()?;
        let a: Vec<f64> = hyper.iter().map(|h| h.a_line(gt)).collect();
        let b: Vec<f64> = hyper.iter().map(|h| h.b_line(gt)).collect();
        Ok(Self::greybox(
            chars.ship_id.clone(),
            ModelTag::PriorBased,
            stats::median(&a)?,
            stats::median(&b)?,
        ))
    }

    /// Heuristic wetted surface in use.
    pub fn is_heuristic(&self) -> bool {
        matches!(self.eval, Evaluator::WhiteBox { hull, .. } if hull.heuristic_surface)
    }

    pub fn predict(&self, row: &FeatureRow) -> Result<f64> {
        match &self.eval {
            Evaluator::Greybox { a, b } => Ok(greybox_mean(*a, *b, row.x_hydro, row.x_aero)),
            Evaluator::WhiteBox { hull, water } => {
                let v = row_speed(row);
                if v == 0.0 {
                    Ok(0.0)
                } else {
                    hull.power(water, v)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub ship_id: String,
    pub model_tag: ModelTag,
    pub speeds: Vec<f64>,
    /// Observed minus predicted power, W.
    pub residuals: Vec<f64>,
}

impl ResidualSeries {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }
}

/// Observed minus predicted power for every row of one ship.
pub fn residuals(ship_id: &str, rows: &[FeatureRow], model: &ShipModel) -> Result<ResidualSeries> {
    if model.ship_id != ship_id {
        return Err(Error::ShipMismatch {
            data: ship_id.to_string(),
            model: model.ship_id.clone(),
        });
    }
    let mut speeds = Vec::with_capacity(rows.len());
    let mut res = Vec::with_capacity(rows.len());
    for row in rows {
        let r = row.y - model.predict(row)?;
        ensure_finite("residual", r)?;
        speeds.push(row_speed(row));
        res.push(r);
    }
    Ok(ResidualSeries {
        ship_id: ship_id.to_string(),
        model_tag: model.tag,
        speeds,
        residuals: res,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub frac: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowessConfig {
    pub frac: f64,
    pub iters: usize,
    pub grid_points: usize,
}

impl Default for LowessConfig {
    fn default() -> Self {
        LowessConfig {
            frac: 0.3,
            iters: 2,
            grid_points: 100,
        }
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

/// Local weighted linear fit at `x0` over the `k` nearest points.
fn local_fit(x0: f64, xs: &[f64], ys: &[f64], robust: &[f64], k: usize, scratch: &mut Vec<f64>) -> f64 {
    match weighted_line(x0, xs, ys, robust, k, scratch, false) {
        Some(y) => y,
        // Every neighbor was discounted as an outlier: take the k nearest
        // points that still carry weight.
        None => weighted_line(x0, xs, ys, robust, k, scratch, true)
            .unwrap_or_else(|| weighted_line(x0, xs, ys, &vec![1.0; xs.len()], k, scratch, false).unwrap_or(f64::NAN)),
    }
}

fn weighted_line(
    x0: f64,
    xs: &[f64],
    ys: &[f64],
    robust: &[f64],
    k: usize,
    scratch: &mut Vec<f64>,
    weighted_only: bool,
) -> Option<f64> {
    scratch.clear();
    scratch.extend(
        xs.iter()
            .zip(robust)
            .filter(|(_, &r)| !weighted_only || r > 0.0)
            .map(|(x, _)| (x - x0).abs()),
    );
    if scratch.is_empty() {
        return None;
    }
    let k = k.min(scratch.len());
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    // Slightly wider than the k-th distance so that neighbor keeps a weight.
    let h = *kth * 1.001;

    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut weights = Vec::with_capacity(k);
    for i in 0..xs.len() {
        let d = (xs[i] - x0).abs();
        let kernel = if h > 0.0 {
            tricube(d / h)
        } else if d == 0.0 {
            1.0
        } else {
            0.0
        };
        let w = kernel * robust[i];
        if w > 0.0 {
            sw += w;
            swx += w * xs[i];
            swy += w * ys[i];
            weights.push((i, w));
        }
    }
    if sw <= 0.0 {
        return None;
    }
    let xm = swx / sw;
    let ym = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(i, w) in &weights {
        let dx = xs[i] - xm;
        sxx += w * dx * dx;
        sxy += w * dx * (ys[i] - ym);
    }
    let spread = weights.iter().map(|&(i, _)| (xs[i] - xm).abs()).fold(0.0, f64::max);
    if sxx <= 0.0 || spread <= 1e-12 * xm.abs().max(1.0) {
        Some(ym)
    } else {
        Some(ym + sxy / sxx * (x0 - xm))
    }
}

/// Robust locally weighted regression evaluated at `grid`.
///
/// Each fit uses the `ceil(frac * n)` nearest points with tricube weights;
/// `iters` rounds of bisquare reweighting downweight large residuals.
pub fn lowess_at(xs: &[f64], ys: &[f64], frac: f64, iters: usize, grid: &[f64]) -> Result<SmoothedCurve> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("lowess needs at least 2 points"));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("lowess fraction must lie in (0, 1], got {frac}")));
    }
    for (&x, &y) in xs.iter().zip(ys) {
        ensure_finite("lowess x", x)?;
        ensure_finite("lowess y", y)?;
    }
    let n = xs.len();
    let k = ((frac * n as f64).ceil() as usize).min(n);
    if k < 2 {
        return Err(Error::invalid(format!(
            "lowess fraction {frac} covers fewer than 2 of {n} points"
        )));
    }

    let mut robust = vec![1.0; n];
    for _ in 0..iters {
        let fitted: Vec<f64> = xs
            .par_iter()
            .map_init(Vec::new, |scratch, &x| local_fit(x, xs, ys, &robust, k, scratch))
            .collect();
        let abs_res: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| (y - f).abs()).collect();
        // Floor the residual scale so exact fits do not turn rounding noise
        // into outliers.
        let y_scale = ys.iter().map(|y| y.abs()).sum::<f64>() / n as f64;
        let mad = stats::median(&abs_res)?.max(1e-7 * y_scale);
        if mad <= 0.0 {
            break;
        }
        for (r, e) in robust.iter_mut().zip(&abs_res) {
            *r = bisquare(e / (6.0 * mad));
        }
    }
    let y: Vec<f64> = grid
        .par_iter()
        .map_init(Vec::new, |scratch, &x| local_fit(x, xs, ys, &robust, k, scratch))
        .collect();
    Ok(SmoothedCurve {
        x: grid.to_vec(),
        y,
        frac,
        iters,
    })
}

/// Uniform grid of `points` values over the range of `xs`; a single point
/// when the range is degenerate.
pub fn uniform_grid(xs: &[f64], points: usize) -> Result<Vec<f64>> {
    let s = stats::sorted(xs)?;
    let (lo, hi) = match (s.first(), s.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::invalid("grid over an empty sample")),
    };
    if hi == lo || points < 2 {
        return Ok(vec![lo]);
    }
    let h = (hi - lo) / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    g[points - 1] = hi;
    Ok(g)
}

/// LOWESS evaluated on a uniform grid over the observed x range.
pub fn lowess(xs: &[f64], ys: &[f64], config: &LowessConfig) -> Result<SmoothedCurve> {
    let grid = uniform_grid(xs, config.grid_points)?;
    lowess_at(xs, ys, config.frac, config.iters, &grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoid-rule integral of the curve.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    /// Fixed bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    /// Grid half-margin beyond the data, in bandwidths.
    pub margin: f64,
    /// Minimum grid size; finer grids are used when the data span many bandwidths.
    pub grid_points: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: None,
            margin: 4.0,
            grid_points: 512,
        }
    }
}

const KDE_MAX_POINTS: usize = 200_000;

/// Silverman's rule, `0.9 min(sd, IQR/1.34) n^(-1/5)`. Falls back to the
/// nonzero spread measure, and to 1 for constant samples.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let s = stats::sorted(values)?;
    if s.is_empty() {
        return Err(Error::invalid("bandwidth of an empty sample"));
    }
    let sd = stats::std_dev(&s);
    let iqr = (stats::quantile_sorted(&s, 0.75) - stats::quantile_sorted(&s, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Ok(1.0),
    };
    Ok(0.9 * spread * (s.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate on a grid spanning the data plus a
/// margin of `config.margin` bandwidths on both sides.
pub fn kde(values: &[f64], config: &KdeConfig) -> Result<DensityCurve> {
    if values.is_empty() {
        return Err(Error::invalid("kde of an empty sample"));
    }
    let h = match config.bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(values)?,
    };
    if !(config.margin > 0.0) {
        return Err(Error::invalid("kde margin must be positive"));
    }
    let s = stats::sorted(values)?;
    let lo = s[0] - config.margin * h;
    let hi = s[s.len() - 1] + config.margin * h;
    // At least four grid points per bandwidth keeps the trapezoid rule accurate.
    let needed = ((hi - lo) / (0.25 * h)).ceil() as usize + 1;
    // Odd, so a symmetric sample has a grid point at its center.
    let points = needed.max(config.grid_points).clamp(3, KDE_MAX_POINTS) | 1;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (s.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let density = x
        .par_iter()
        .map(|&g| {
            s.iter()
                .map(|&v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityCurve { x, density, bandwidth: h })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub ship_id: String,
    pub model_tag: ModelTag,
    pub prob: f64,
    pub value: f64,
}

/// Ship id used for summary rows pooling all ships of a model.
pub const ALL_SHIPS: &str = "ALL";

/// Per-series residual quantiles followed by, for each model tag, the
/// quantiles of all its residuals pooled across ships (ship id [`ALL_SHIPS`]).
pub fn residual_quantiles(series: &[ResidualSeries], probs: &[f64]) -> Result<Vec<QuantileRow>> {
    if series.is_empty() {
        return Err(Error::invalid("no residual series"));
    }
    for &p in probs {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
        }
    }
    let mut out = Vec::new();
    let mut pooled: BTreeMap<ModelTag, Vec<f64>> = BTreeMap::new();
    for s in series {
        if s.is_empty() {
            return Err(Error::invalid(format!("empty residual series for ship {}", s.ship_id)));
        }
        let sorted = stats::sorted(&s.residuals)?;
        for &p in probs {
            out.push(QuantileRow {
                ship_id: s.ship_id.clone(),
                model_tag: s.model_tag,
                prob: p,
                value: stats::quantile_sorted(&sorted, p),
            });
        }
        pooled.entry(s.model_tag).or_default().extend_from_slice(&s.residuals);
    }
    for (tag, values) in pooled {
        let sorted = stats::sorted(&values)?;
        for &p in probs {
            out.push(QuantileRow {
                ship_id: ALL_SHIPS.to_string(),
                model_tag: tag,
                prob: p,
                value: stats::quantile_sorted(&sorted, p),
            });
        }
    }
    Ok(out)
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub ship_id: String,
    pub model_tag: ModelTag,
    /// `None` when the model could not be evaluated for the ship.
    pub summary: Option<ResidualSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSummary {
    pub median: f64,
    pub p025: f64,
    pub p975: f64,
    pub rmse: f64,
}

pub fn summarize(series: &ResidualSeries) -> Result<ResidualSummary> {
    if series.is_empty() {
        return Err(Error::invalid(format!("empty residual series for ship {}", series.ship_id)));
    }
    let s = stats::sorted(&series.residuals)?;
    let mse = s.iter().map(|r| r * r).sum::<f64>() / s.len() as f64;
    Ok(ResidualSummary {
        median: stats::quantile_sorted(&s, 0.5),
        p025: stats::quantile_sorted(&s, 0.025),
        p975: stats::quantile_sorted(&s, 0.975),
        rmse: mse.sqrt(),
    })
}
