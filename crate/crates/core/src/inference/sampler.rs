//! Blocked Gibbs sampler for the fleet posterior.
//!
//! One sweep updates, in order:
//!
//! 1. every ship's `(a_i, b_i)` from its bivariate Gaussian full conditional
//!    (Gaussian likelihood times Gaussian hyper-prior), restricted to the
//!    prior box;
//! 2. every ship's `sigma_i` by slice sampling on `log sigma_i`;
//! 3. the hyper-line coefficients, whose conditional is Gaussian and, with
//!    the gross tonnage centered on the fleet mean, factorizes into
//!    independent intercept and slope draws;
//! 4. `sigma_a` and `sigma_b` by slice sampling on the log scale.
//!
//! In independent mode only steps 1 and 2 run, without the hyper-prior.
//!
//! Randomness: each chain owns one stream for initialization, one for the
//! hyper-level updates and one per ship, so per-ship updates could run in
//! any order or in parallel without changing the draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{BoundMultipliers, FleetModel, Interval, ShipData, ShipStats};
use super::posterior::{FitMode, PosteriorChains};
use super::slice::SliceSampler;
use super::truncnorm::{truncated_normal, Normal2};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::stats;

use rand::Rng;
use rand_distr::StandardNormal;

const MAX_BOX_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub bounds: BoundMultipliers,
    /// Hold all scale parameters fixed (at the fleet's fixed scales, or at
    /// least-squares plug-in estimates when none are set).
    pub freeze_variances: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            seed: 20_190_101,
            bounds: BoundMultipliers::default(),
            freeze_variances: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.chains < 2 {
            return Err(Error::invalid("at least 2 chains are required"));
        }
        if self.iterations < self.warmup + 100 {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed warmup ({}) by at least 100",
                self.iterations, self.warmup
            )));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// Gaussian hyper-prior on one ship's `(a, b)`, independent across the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShipPrior {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

/// Full conditional of `(a_i, b_i)` before truncation to the box. `None`
/// when the likelihood alone does not identify both coefficients and no
/// prior is given.
pub fn ship_block_conditional(stats: &ShipStats, sigma: f64, prior: Option<&ShipPrior>) -> Option<Normal2> {
    let inv_var = 1.0 / (sigma * sigma);
    let mut p = [
        [stats.shh * inv_var, stats.sha * inv_var],
        [stats.sha * inv_var, stats.saa * inv_var],
    ];
    let mut h = [stats.shy * inv_var, stats.say * inv_var];
    match prior {
        Some(pr) => {
            for k in 0..2 {
                let prec = 1.0 / (pr.sd[k] * pr.sd[k]);
                p[k][k] += prec;
                h[k] += prec * pr.mean[k];
            }
        }
        None if !stats.b_identifiable() => return None,
        None => {}
    }
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    if !(det > 0.0) {
        return None;
    }
    let cov = [
        [p[1][1] / det, -p[0][1] / det],
        [-p[1][0] / det, p[0][0] / det],
    ];
    let mean = [
        cov[0][0] * h[0] + cov[0][1] * h[1],
        cov[1][0] * h[0] + cov[1][1] * h[1],
    ];
    Some(Normal2 { mean, cov })
}

/// Conditional of one hyper-line given the ship coefficients, in the
/// centered parameterization `coef_i = intercept + slope * z_i + eta`,
/// `sum z_i = 0`. Intercept and slope are conditionally independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineConditional {
    pub intercept_mean: f64,
    pub intercept_sd: f64,
    pub slope_mean: f64,
    pub slope_sd: f64,
}

pub fn hyper_line_conditional(coefs: &[f64], centered_gt: &[f64], sigma: f64) -> LineConditional {
    let n = coefs.len() as f64;
    let szz: f64 = centered_gt.iter().map(|z| z * z).sum();
    let szc: f64 = centered_gt.iter().zip(coefs).map(|(z, c)| z * c).sum();
    LineConditional {
        intercept_mean: coefs.iter().sum::<f64>() / n,
        intercept_sd: sigma / n.sqrt(),
        slope_mean: szc / szz,
        slope_sd: sigma / szz.sqrt(),
    }
}

/// Samples `(a, b)` for one ship given its current state.
fn update_ship_block(
    ship: &ShipData,
    sigma: f64,
    prior: Option<&ShipPrior>,
    current: [f64; 2],
    a_max: f64,
    b_max: f64,
    rng: &mut StreamRng,
) -> [f64; 2] {
    let lo = [0.0, 0.0];
    let hi = [a_max, b_max];
    if let Some(cond) = ship_block_conditional(&ship.stats, sigma, prior) {
        return cond.sample_in_box(lo, hi, current, MAX_BOX_TRIES, rng);
    }
    // Likelihood-only update with a degenerate direction: coordinate-wise.
    let s = &ship.stats;
    let var = sigma * sigma;
    let b = current[1];
    let a = if s.shh > 0.0 {
        truncated_normal((s.shy - b * s.sha) / s.shh, (var / s.shh).sqrt(), lo[0], hi[0], rng)
    } else {
        lo[0] + (hi[0] - lo[0]) * rng.random::<f64>()
    };
    let b = if s.saa > 0.0 {
        truncated_normal((s.say - a * s.sha) / s.saa, (var / s.saa).sqrt(), lo[1], hi[1], rng)
    } else {
        lo[1] + (hi[1] - lo[1]) * rng.random::<f64>()
    };
    [a, b]
}

/// Log density of `s = log(sigma)` for a Gaussian scale with flat prior on
/// `sigma`, given `count` residuals with sum of squares `ss`.
fn log_scale_density(s: f64, count: usize, ss: f64) -> f64 {
    -(count as f64 - 1.0) * s - 0.5 * ss * (-2.0 * s).exp()
}

fn sample_scale(
    slicer: &mut SliceSampler,
    current: f64,
    range: &Interval,
    count: usize,
    ss: f64,
    rng: &mut StreamRng,
) -> f64 {
    let s0 = current.ln().clamp(range.lo.ln(), range.hi.ln());
    let s1 = slicer.step(
        s0,
        range.lo.ln(),
        range.hi.ln(),
        |s| log_scale_density(s, count, ss),
        rng,
    );
    s1.exp().clamp(range.lo, range.hi)
}

#[derive(Debug, Clone)]
struct ChainState {
    a: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
    /// Centered hyper-lines: intercepts at the fleet-mean gross tonnage.
    a_intercept: f64,
    a_slope: f64,
    b_intercept: f64,
    b_slope: f64,
    sigma_a: f64,
    sigma_b: f64,
}

/// Deterministic plug-in estimates used for initialization and for frozen
/// scales.
struct PlugIn {
    a: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
    sigma_a: f64,
    sigma_b: f64,
}

fn line_fit(coefs: &[f64], z: &[f64]) -> (f64, f64, f64) {
    let n = coefs.len();
    let szz: f64 = z.iter().map(|v| v * v).sum();
    let intercept = coefs.iter().sum::<f64>() / n as f64;
    let slope = if szz > 0.0 {
        z.iter().zip(coefs).map(|(v, c)| v * c).sum::<f64>() / szz
    } else {
        0.0
    };
    let resid: Vec<f64> = coefs
        .iter()
        .zip(z)
        .map(|(c, v)| c - intercept - slope * v)
        .collect();
    let sd = if n > 2 {
        (resid.iter().map(|r| r * r).sum::<f64>() / (n - 2) as f64).sqrt()
    } else {
        0.0
    };
    (intercept, slope, sd)
}

fn plug_in(fleet: &FleetModel, z: &[f64]) -> PlugIn {
    let bounds = fleet.bounds();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut sigma = Vec::new();
    for (i, ship) in fleet.ships().iter().enumerate() {
        let (ah, bh) = ship.stats.least_squares();
        let ah = ah.clamp(bounds.a_max * 1e-6, bounds.a_max);
        let bh = bh.unwrap_or(0.01 * bounds.b_max).clamp(bounds.b_max * 1e-6, bounds.b_max);
        let n = ship.stats.n;
        let rss = ship.rss(ah, bh);
        let sd = if n > 2 {
            (rss / (n - 2) as f64).sqrt()
        } else {
            ship.stats.sd_y
        };
        let range = bounds.ship_sigma[i];
        sigma.push(sd.clamp(range.lo, range.hi));
        a.push(ah);
        b.push(bh);
    }
    let fallback = |sd: f64, range: &Interval| {
        if sd > 0.0 {
            sd.clamp(range.lo, range.hi)
        } else {
            range.hi * 0.01
        }
    };
    let sigma_a = fallback(line_fit(&a, z).2, &bounds.sigma_a);
    let sigma_b = fallback(line_fit(&b, z).2, &bounds.sigma_b);
    PlugIn {
        a,
        b,
        sigma,
        sigma_a,
        sigma_b,
    }
}

fn initial_state(fleet: &FleetModel, z: &[f64], base: &PlugIn, frozen: bool, rng: &mut StreamRng) -> ChainState {
    let bounds = fleet.bounds();
    let mut jitter = |x: f64, lo: f64, hi: f64| {
        let e: f64 = rng.sample(StandardNormal);
        (x * (0.1 * e).exp()).clamp(lo, hi)
    };
    let a: Vec<f64> = base
        .a
        .iter()
        .map(|&v| jitter(v, bounds.a_max * 1e-6, bounds.a_max))
        .collect();
    let b: Vec<f64> = base
        .b
        .iter()
        .map(|&v| jitter(v, bounds.b_max * 1e-6, bounds.b_max))
        .collect();
    let sigma: Vec<f64> = if frozen {
        base.sigma.clone()
    } else {
        base.sigma
            .iter()
            .zip(&bounds.ship_sigma)
            .map(|(&v, r)| jitter(v, r.lo, r.hi))
            .collect()
    };
    let (a_intercept, a_slope, _) = line_fit(&a, z);
    let (b_intercept, b_slope, _) = line_fit(&b, z);
    let (sigma_a, sigma_b) = if frozen {
        (base.sigma_a, base.sigma_b)
    } else {
        (
            jitter(base.sigma_a, bounds.sigma_a.lo, bounds.sigma_a.hi),
            jitter(base.sigma_b, bounds.sigma_b.lo, bounds.sigma_b.hi),
        )
    };
    ChainState {
        a,
        b,
        sigma,
        a_intercept,
        a_slope,
        b_intercept,
        b_slope,
        sigma_a,
        sigma_b,
    }
}

struct ChainRun<'a> {
    fleet: &'a FleetModel,
    config: &'a SamplerConfig,
    mode: FitMode,
    z: Vec<f64>,
    frozen: Option<PlugIn>,
}

impl ChainRun<'_> {
    fn label(&self) -> &'static str {
        match self.mode {
            FitMode::Hierarchical => "hierarchical",
            FitMode::Independent => "independent",
        }
    }

    /// Runs one chain and returns its kept draws, row-major
    /// `[t][a_1, b_1, sigma_1, ..., lambda1..4, sigma_a, sigma_b]`.
    fn run(&self, chain: usize) -> Vec<f64> {
        let fleet = self.fleet;
        let bounds = fleet.bounds();
        let seed = self.config.seed;
        let n_ships = fleet.ships().len();
        let hierarchical = self.mode == FitMode::Hierarchical;
        let label = self.label();

        let mut init_rng = stream(seed, &format!("{label}/init"), chain as u64);
        let mut hyper_rng = stream(seed, &format!("{label}/hyper"), chain as u64);
        let ship_label = format!("{label}/chain/{chain}/ship");
        let mut ship_rngs: Vec<StreamRng> = (0..n_ships)
            .map(|i| stream(seed, &ship_label, i as u64))
            .collect();

        let base = plug_in(fleet, &self.z);
        let frozen = self.frozen.is_some();
        let mut st = initial_state(fleet, &self.z, self.frozen.as_ref().unwrap_or(&base), frozen, &mut init_rng);

        let mut ship_slicers = vec![SliceSampler::new(1.0); n_ships];
        let mut sa_slicer = SliceSampler::new(1.0);
        let mut sb_slicer = SliceSampler::new(1.0);

        let dim = fleet.dim();
        let kept = self.config.kept();
        let mut out = Vec::with_capacity(kept * dim);
        let gt_center = fleet.gt_center();

        for iter in 0..self.config.iterations {
            if iter == self.config.warmup {
                ship_slicers.iter_mut().for_each(SliceSampler::freeze);
                sa_slicer.freeze();
                sb_slicer.freeze();
            }

            for (i, ship) in fleet.ships().iter().enumerate() {
                let rng = &mut ship_rngs[i];
                let prior = hierarchical.then(|| ShipPrior {
                    mean: [
                        st.a_intercept + st.a_slope * self.z[i],
                        st.b_intercept + st.b_slope * self.z[i],
                    ],
                    sd: [st.sigma_a, st.sigma_b],
                });
                let [a, b] = update_ship_block(
                    ship,
                    st.sigma[i],
                    prior.as_ref(),
                    [st.a[i], st.b[i]],
                    bounds.a_max,
                    bounds.b_max,
                    rng,
                );
                st.a[i] = a;
                st.b[i] = b;
                if !frozen {
                    let rss = ship.rss(a, b);
                    st.sigma[i] = sample_scale(
                        &mut ship_slicers[i],
                        st.sigma[i],
                        &bounds.ship_sigma[i],
                        ship.stats.n,
                        rss,
                        rng,
                    );
                }
            }

            if hierarchical {
                let ca = hyper_line_conditional(&st.a, &self.z, st.sigma_a);
                let cb = hyper_line_conditional(&st.b, &self.z, st.sigma_b);
                let mut normal = |m: f64, s: f64| m + s * hyper_rng.sample::<f64, _>(StandardNormal);
                st.a_intercept = normal(ca.intercept_mean, ca.intercept_sd);
                st.a_slope = normal(ca.slope_mean, ca.slope_sd);
                st.b_intercept = normal(cb.intercept_mean, cb.intercept_sd);
                st.b_slope = normal(cb.slope_mean, cb.slope_sd);
                if !frozen {
                    let ss = |coefs: &[f64], ic: f64, sl: f64| -> f64 {
                        coefs
                            .iter()
                            .zip(&self.z)
                            .map(|(c, z)| (c - ic - sl * z).powi(2))
                            .sum()
                    };
                    let ss_a = ss(&st.a, st.a_intercept, st.a_slope);
                    let ss_b = ss(&st.b, st.b_intercept, st.b_slope);
                    st.sigma_a =
                        sample_scale(&mut sa_slicer, st.sigma_a, &bounds.sigma_a, n_ships, ss_a, &mut hyper_rng);
                    st.sigma_b =
                        sample_scale(&mut sb_slicer, st.sigma_b, &bounds.sigma_b, n_ships, ss_b, &mut hyper_rng);
                }
            }

            if iter >= self.config.warmup {
                for i in 0..n_ships {
                    out.extend([st.a[i], st.b[i], st.sigma[i]]);
                }
                if hierarchical {
                    out.extend([
                        st.a_intercept - st.a_slope * gt_center,
                        st.a_slope,
                        st.b_intercept - st.b_slope * gt_center,
                        st.b_slope,
                        st.sigma_a,
                        st.sigma_b,
                    ]);
                } else {
                    out.extend([f64::NAN; 6]);
                }
            }
        }
        out
    }
}

fn fit_warnings(fleet: &FleetModel, mode: FitMode) -> Vec<String> {
    let mut warnings = Vec::new();
    for ship in fleet.ships() {
        let s = &ship.stats;
        if s.shh <= 0.0 {
            warnings.push(format!(
                "ship {}: speed regressor is identically zero; a is not identified",
                ship.ship_id()
            ));
        }
        if !s.b_identifiable() {
            let effect = match mode {
                FitMode::Hierarchical => "its posterior follows the hyper-prior",
                FitMode::Independent => "its posterior is the flat prior box",
            };
            warnings.push(format!(
                "ship {}: wind regressor has no usable variation; b is non-identifiable and {effect}",
                ship.ship_id()
            ));
        }
    }
    warnings
}

fn run_chains(fleet: &FleetModel, config: &SamplerConfig, mode: FitMode) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let z: Vec<f64> = fleet
        .ships()
        .iter()
        .map(|s| s.chars.gross_tonnage - fleet.gt_center())
        .collect();
    let frozen = config.freeze_variances.then(|| {
        let mut base = plug_in(fleet, &z);
        if let Some(fixed) = fleet.fixed_scales() {
            base.sigma = fixed.ship_sigma.clone();
            base.sigma_a = fixed.sigma_a;
            base.sigma_b = fixed.sigma_b;
        }
        base
    });
    let run = ChainRun {
        fleet,
        config,
        mode,
        z,
        frozen,
    };
    Ok((0..config.chains).into_par_iter().map(|c| run.run(c)).collect())
}

/// Samples the joint posterior of all ship parameters and hyper-parameters.
///
/// Requires at least two ships with distinct gross tonnage so the flat
/// prior on the hyper-lines yields a proper posterior. Draws are
/// deterministic in `(config, fleet)`.
pub fn fit_hierarchical(fleet: &FleetModel, config: &SamplerConfig) -> Result<PosteriorChains> {
    let gts: Vec<f64> = fleet.ships().iter().map(|s| s.chars.gross_tonnage).collect();
    if stats::variance(&gts) <= 0.0 {
        return Err(Error::invalid(
            "hierarchical fit needs at least two ships with distinct gross tonnage",
        ));
    }
    let per_chain = run_chains(fleet, config, FitMode::Hierarchical)?;
    let mut post = PosteriorChains::new(fleet.param_names(), config.chains, config.kept(), per_chain.concat())?;
    post.seed = Some(config.seed);
    post.sampler_config = Some(config.clone());
    post.mode = Some(FitMode::Hierarchical);
    post.warnings = fit_warnings(fleet, FitMode::Hierarchical);
    Ok(post)
}

/// Samples each ship's `(a_i, b_i, sigma_i)` under flat priors on the
/// fleet's prior box, ignoring the hyper-model. One posterior per ship, in
/// fleet order.
pub fn fit_independent(fleet: &FleetModel, config: &SamplerConfig) -> Result<Vec<PosteriorChains>> {
    let per_chain = run_chains(fleet, config, FitMode::Independent)?;
    let dim = fleet.dim();
    let kept = config.kept();
    let all_warnings = fit_warnings(fleet, FitMode::Independent);
    let mut out = Vec::with_capacity(fleet.ships().len());
    for (i, ship) in fleet.ships().iter().enumerate() {
        let mut draws = Vec::with_capacity(config.chains * kept * 3);
        for chain in &per_chain {
            for t in 0..kept {
                draws.extend_from_slice(&chain[t * dim + 3 * i..t * dim + 3 * i + 3]);
            }
        }
        let names = super::model::ship_param_names(ship.ship_id()).to_vec();
        let mut post = PosteriorChains::new(names, config.chains, kept, draws)?;
        post.seed = Some(config.seed);
        post.sampler_config = Some(config.clone());
        post.mode = Some(FitMode::Independent);
        let tag = format!("ship {}:", ship.ship_id());
        post.warnings = all_warnings.iter().filter(|w| w.starts_with(&tag)).cloned().collect();
        out.push(post);
    }
    Ok(out)
}

/// Independent fit of a single ship of the fleet.
pub fn fit_independent_ship(fleet: &FleetModel, ship_id: &str, config: &SamplerConfig) -> Result<PosteriorChains> {
    let idx = fleet
        .ship_index(ship_id)
        .ok_or_else(|| Error::UnknownShip(ship_id.to_string()))?;
    Ok(fit_independent(fleet, config)?.swap_remove(idx))
}

/// Concatenates independent per-ship posteriors into one set of chains.
pub fn merge_independent(posts: &[PosteriorChains]) -> Result<PosteriorChains> {
    let first = posts.first().ok_or_else(|| Error::invalid("no posteriors to merge"))?;
    let (chains, iters) = (first.chains, first.iterations);
    if posts.iter().any(|p| p.chains != chains || p.iterations != iters) {
        return Err(Error::invalid("posteriors have different shapes"));
    }
    let names: Vec<String> = posts.iter().flat_map(|p| p.param_names.clone()).collect();
    let mut draws = Vec::with_capacity(chains * iters * names.len());
    for c in 0..chains {
        for t in 0..iters {
            for p in posts {
                draws.extend((0..p.n_params()).map(|k| p.get(c, t, k)));
            }
        }
    }
    let mut merged = PosteriorChains::new(names, chains, iters, draws)?;
    merged.seed = first.seed;
    merged.sampler_config = first.sampler_config.clone();
    merged.mode = first.mode;
    merged.warnings = posts.iter().flat_map(|p| p.warnings.clone()).collect();
    Ok(merged)
}
