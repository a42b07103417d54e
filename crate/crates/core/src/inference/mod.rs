//! Joint posterior of the fleet model and its MCMC sampler.
//!
//! Observation level, per ship `i` and row `j`:
//! `y_ij ~ N(a_i x_hydro_ij + b_i x_aero_ij, sigma_i)`.
//! Hyper level: `a_i ~ N(lambda1 + lambda2 w_i, sigma_a)` and
//! `b_i ~ N(lambda3 + lambda4 w_i, sigma_b)`, `w_i` the gross tonnage.
//! Priors are flat on a box; see [`PriorBounds`].

pub mod convergence;
mod model;
mod posterior;
mod sampler;
pub mod slice;
pub mod truncnorm;

pub use convergence::{ess, rhat};
pub use model::{
    hyper_log_density, log_likelihood, log_posterior, ship_param_names, BoundMultipliers, FleetModel,
    HyperParameters, Interval, PriorBounds, Scales, ShipData, ShipStats, HYPER_NAMES, SIGMA_FLOOR_RATIO,
};
pub use posterior::{ChainDiagnostics, FitMode, PosteriorChains};
pub use sampler::{
    fit_hierarchical, fit_independent, fit_independent_ship, hyper_line_conditional, merge_independent,
    ship_block_conditional, LineConditional, SamplerConfig, ShipPrior,
};
