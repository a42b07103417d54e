//! Hierarchical Bayesian grey-box propulsion power models for ship fleets.
//!
//! Each ship's propulsion power follows `P = a V^3 + b cos(alpha) U_R^2 V`
//! with ship-specific hydrodynamic (`a`) and aerodynamic (`b`) coefficients.
//! A hyper-model ties the coefficients to gross tonnage, so weakly informed
//! ships borrow strength from the fleet and ships without data can be
//! predicted from their tonnage alone. A STEAM2-style white-box resistance
//! estimate is provided as a baseline.
//!
//! Modules, roughly in pipeline order:
//!
//! * [`synthetic`]: fleets and telemetry with known ground truth
//! * [`ingest`]: telemetry features and interval (noon report) aggregation
//! * [`inference`]: posterior definition and the Gibbs/slice sampler
//! * [`prediction`]: speed-power curves and credible envelopes
//! * [`diagnostics`]: residuals, KDE, LOWESS and residual quantiles
//! * [`physics`]: the grey-box mean and the white-box baseline
//! * [`io`], [`config`], [`cli`]: file formats and the command-line tool

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod ingest;
pub mod io;
pub mod physics;
pub mod prediction;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
