//! C ABI for `fleetpower`.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`FpStatus`]; results go through out
//!   pointers, which are written only on success.
//! * On failure a message is kept per thread; read it with
//!   [`fp_last_error_message`].
//! * Fleets and posteriors are opaque handles created by `fp_*_new` /
//!   `fp_fit_*` / `fp_posterior_load_csv` and released with the matching
//!   `fp_*_free`. Freeing a null handle is a no-op.
//! * Strings are NUL-terminated UTF-8. Functions that return text copy it
//!   into a caller buffer and return the full length (excluding the NUL),
//!   so a call with a null buffer queries the size.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fleetpower::inference::{
    fit_hierarchical, fit_independent, merge_independent, BoundMultipliers, FleetModel, PosteriorChains,
    SamplerConfig,
};
use fleetpower::ingest::FeatureRow;
use fleetpower::physics::{
    greybox_power, ittc_friction_coefficient, steam2_power, VesselCharacteristics, WaterProperties,
};
use fleetpower::prediction::{predict_prior_based, predict_ship_specific, SpeedPowerEnvelope};
use fleetpower::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    InvalidInput = 1,
    NullPointer = 2,
    Parse = 3,
    Io = 4,
    UnknownShip = 5,
    WhiteBoxUnavailable = 6,
    MissingParameter = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> FpStatus {
    match e {
        Error::Parse { .. } | Error::Csv { .. } => FpStatus::Parse,
        Error::Io { .. } => FpStatus::Io,
        Error::UnknownShip(_) | Error::ShipMismatch { .. } => FpStatus::UnknownShip,
        Error::WhiteBoxUnavailable { .. } => FpStatus::WhiteBoxUnavailable,
        Error::MissingParameter(_) => FpStatus::MissingParameter,
        _ => FpStatus::InvalidInput,
    }
}

struct Fail(FpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FpStatus::Internal
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FpStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Copies `s` plus a NUL into `buf` when it fits; returns `s.len()`.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > s.len() {
        ptr::copy_nonoverlapping(s.as_ptr() as *const c_char, buf, s.len());
        *buf.add(s.len()) = 0;
    }
    s.len()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated
/// when `len` exceeds the message length). Returns the message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Grey-box mean power `a V^3 + b cos(alpha) U_R^2 V` in watts.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_greybox_power(
    a: f64,
    b: f64,
    speed: f64,
    wind_speed: f64,
    wind_angle: f64,
    out: *mut f64,
) -> FpStatus {
    guard(|| write_out(out, greybox_power(a, b, speed, wind_speed, wind_angle)?))
}

/// ITTC-1957 friction coefficient for a Reynolds number above 100.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_ittc_friction_coefficient(reynolds: f64, out: *mut f64) -> FpStatus {
    guard(|| write_out(out, ittc_friction_coefficient(reynolds)?))
}

/// Hull inputs of the white-box model.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FpHull {
    pub lwl: f64,
    pub breadth: f64,
    pub draft: f64,
    pub wetted_surface: f64,
    pub residual_coeff: f64,
}

/// White-box propulsion power in watts. Non-positive `density` or
/// `kinematic_viscosity` select the defaults (1025 kg/m^3, 1.188e-6 m^2/s).
///
/// # Safety
/// `hull` must point to a valid [`FpHull`]; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_steam2_power(
    hull: *const FpHull,
    density: f64,
    kinematic_viscosity: f64,
    speed: f64,
    out: *mut f64,
) -> FpStatus {
    guard(|| {
        let h = hull.as_ref().ok_or_else(|| null("hull"))?;
        let mut water = WaterProperties::default();
        if density > 0.0 {
            water.density = density;
        }
        if kinematic_viscosity > 0.0 {
            water.kinematic_viscosity = kinematic_viscosity;
        }
        water.validate()?;
        let chars = VesselCharacteristics {
            lwl: Some(h.lwl),
            breadth: Some(h.breadth),
            draft: Some(h.draft),
            wetted_surface: Some(h.wetted_surface),
            residual_coeff: Some(h.residual_coeff),
            ..VesselCharacteristics::new("ffi", 1.0)
        };
        chars.validate()?;
        write_out(out, steam2_power(&chars, &water, speed)?)
    })
}

/// Ships and their regression rows, collected before a fit.
pub struct FpFleet {
    ships: Vec<(VesselCharacteristics, Vec<FeatureRow>)>,
}

/// Creates an empty fleet.
#[no_mangle]
pub extern "C" fn fp_fleet_new() -> *mut FpFleet {
    Box::into_raw(Box::new(FpFleet { ships: Vec::new() }))
}

/// Releases a fleet.
///
/// # Safety
/// `fleet` must be null or a handle from [`fp_fleet_new`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_fleet_free(fleet: *mut FpFleet) {
    if !fleet.is_null() {
        drop(Box::from_raw(fleet));
    }
}

/// Adds a ship with `n` observations: per-row `V^3`, `cos(alpha) U_R^2 V`
/// and power in watts.
///
/// # Safety
/// `fleet` must be a live handle, `ship_id` a NUL-terminated string and the
/// three arrays valid for `n` reads.
#[no_mangle]
pub unsafe extern "C" fn fp_fleet_add_ship(
    fleet: *mut FpFleet,
    ship_id: *const c_char,
    gross_tonnage: f64,
    x_hydro: *const f64,
    x_aero: *const f64,
    power: *const f64,
    n: usize,
) -> FpStatus {
    guard(|| {
        let fleet = fleet.as_mut().ok_or_else(|| null("fleet"))?;
        let id = str_arg(ship_id, "ship_id")?;
        let xh = slice_arg(x_hydro, n, "x_hydro")?;
        let xa = slice_arg(x_aero, n, "x_aero")?;
        let y = slice_arg(power, n, "power")?;
        if fleet.ships.iter().any(|(c, _)| c.ship_id == id) {
            return Err(Fail(FpStatus::InvalidInput, format!("ship {id} added twice")));
        }
        let chars = VesselCharacteristics::new(id, gross_tonnage);
        chars.validate()?;
        let rows = (0..n)
            .map(|k| FeatureRow {
                x_hydro: xh[k],
                x_aero: xa[k],
                y: y[k],
                weight: 1,
            })
            .collect();
        fleet.ships.push((chars, rows));
        Ok(())
    })
}

/// Number of ships in a fleet, 0 for a null handle.
///
/// # Safety
/// `fleet` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_fleet_num_ships(fleet: *const FpFleet) -> usize {
    fleet.as_ref().map_or(0, |f| f.ships.len())
}

/// Sampler settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FpSamplerConfig {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub freeze_variances: bool,
    /// Prior box multipliers for `a`, `b` and the scales.
    pub bound_a: f64,
    pub bound_b: f64,
    pub bound_sigma: f64,
}

impl From<&FpSamplerConfig> for SamplerConfig {
    fn from(c: &FpSamplerConfig) -> Self {
        SamplerConfig {
            chains: c.chains,
            iterations: c.iterations,
            warmup: c.warmup,
            seed: c.seed,
            freeze_variances: c.freeze_variances,
            bounds: BoundMultipliers {
                a: c.bound_a,
                b: c.bound_b,
                sigma: c.bound_sigma,
            },
        }
    }
}

/// Default sampler settings: 4 chains of 2000 iterations, 1000 of them warmup.
#[no_mangle]
pub extern "C" fn fp_sampler_config_default() -> FpSamplerConfig {
    let d = SamplerConfig::default();
    FpSamplerConfig {
        chains: d.chains,
        iterations: d.iterations,
        warmup: d.warmup,
        seed: d.seed,
        freeze_variances: d.freeze_variances,
        bound_a: d.bounds.a,
        bound_b: d.bounds.b,
        bound_sigma: d.bounds.sigma,
    }
}

/// Posterior draws of a fit.
pub struct FpPosterior {
    inner: PosteriorChains,
}

fn boxed(p: PosteriorChains) -> *mut FpPosterior {
    Box::into_raw(Box::new(FpPosterior { inner: p }))
}

unsafe fn fit(
    fleet: *const FpFleet,
    config: *const FpSamplerConfig,
    out: *mut *mut FpPosterior,
    hierarchical: bool,
) -> FpStatus {
    guard(|| {
        let fleet = fleet.as_ref().ok_or_else(|| null("fleet"))?;
        let cfg: SamplerConfig = match config.as_ref() {
            Some(c) => c.into(),
            None => SamplerConfig::default(),
        };
        if out.is_null() {
            return Err(null("output pointer"));
        }
        cfg.validate()?;
        let chars: Vec<VesselCharacteristics> = fleet.ships.iter().map(|(c, _)| c.clone()).collect();
        let rows: BTreeMap<&str, Vec<FeatureRow>> = fleet
            .ships
            .iter()
            .map(|(c, r)| (c.ship_id.as_str(), r.clone()))
            .collect();
        let model = FleetModel::from_rows(&chars, rows, &cfg.bounds)?;
        let post = if hierarchical {
            fit_hierarchical(&model, &cfg)?
        } else {
            merge_independent(&fit_independent(&model, &cfg)?)?
        };
        out.write(boxed(post));
        Ok(())
    })
}

/// Fits ships jointly with the hyper-model. A null `config` uses defaults.
///
/// # Safety
/// `fleet` must be a live handle, `config` null or valid, `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_fit_hierarchical(
    fleet: *const FpFleet,
    config: *const FpSamplerConfig,
    out: *mut *mut FpPosterior,
) -> FpStatus {
    fit(fleet, config, out, true)
}

/// Fits every ship on its own; draws of all ships share one handle.
///
/// # Safety
/// As [`fp_fit_hierarchical`].
#[no_mangle]
pub unsafe extern "C" fn fp_fit_independent(
    fleet: *const FpFleet,
    config: *const FpSamplerConfig,
    out: *mut *mut FpPosterior,
) -> FpStatus {
    fit(fleet, config, out, false)
}

/// Reads a long-format posterior CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_load_csv(path: *const c_char, out: *mut *mut FpPosterior) -> FpStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let post = fleetpower::io::read_posterior(Path::new(p))?;
        write_out(out, boxed(post))
    })
}

/// Writes the posterior as a long-format CSV.
///
/// # Safety
/// `post` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_save_csv(post: *const FpPosterior, path: *const c_char) -> FpStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let p = str_arg(path, "path")?;
        fleetpower::io::write_posterior(Path::new(p), &post.inner)?;
        Ok(())
    })
}

/// Releases a posterior.
///
/// # Safety
/// `post` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_free(post: *mut FpPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// Number of parameters, 0 for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_num_params(post: *const FpPosterior) -> usize {
    post.as_ref().map_or(0, |p| p.inner.n_params())
}

/// Number of chains, 0 for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_num_chains(post: *const FpPosterior) -> usize {
    post.as_ref().map_or(0, |p| p.inner.chains)
}

/// Kept draws per chain, 0 for a null handle.
///
/// # Safety
/// `post` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_num_draws(post: *const FpPosterior) -> usize {
    post.as_ref().map_or(0, |p| p.inner.iterations)
}

/// Copies the name of parameter `index` into `buf`; returns its length, or
/// 0 when the handle is null or the index out of range.
///
/// # Safety
/// `post` must be null or a live handle; `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_param_name(
    post: *const FpPosterior,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match post.as_ref().and_then(|p| p.inner.param_names.get(index)) {
        Some(name) => copy_str(name, buf, len),
        None => 0,
    }
}

/// Copies all draws of a parameter, chains concatenated, into `out`
/// (`len` must be at least chains times draws).
///
/// # Safety
/// `post` must be a live handle, `name` a NUL-terminated string and `out`
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_draws(
    post: *const FpPosterior,
    name: *const c_char,
    out: *mut f64,
    len: usize,
) -> FpStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let name = str_arg(name, "name")?;
        let draws = post.inner.draws_of(name)?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len < draws.len() {
            return Err(Fail(
                FpStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", draws.len()),
            ));
        }
        ptr::copy_nonoverlapping(draws.as_ptr(), out, draws.len());
        Ok(())
    })
}

/// Split R-hat and effective sample size of one parameter.
///
/// # Safety
/// `post` must be a live handle, `name` a NUL-terminated string and both
/// outputs valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fp_posterior_convergence(
    post: *const FpPosterior,
    name: *const c_char,
    rhat: *mut f64,
    ess: *mut f64,
) -> FpStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let name = str_arg(name, "name")?;
        if rhat.is_null() || ess.is_null() {
            return Err(null("output pointer"));
        }
        let sub = post.inner.select(&[name.to_string()])?;
        let d = sub.diagnostics()?;
        rhat.write(d.rhat[0]);
        ess.write(d.ess[0]);
        Ok(())
    })
}

/// Output arrays of an envelope, each of the grid's length.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FpEnvelopeOut {
    pub median: *mut f64,
    pub p25: *mut f64,
    pub p75: *mut f64,
    pub p025: *mut f64,
    pub p975: *mut f64,
}

unsafe fn write_envelope(env: &SpeedPowerEnvelope, out: *const FpEnvelopeOut) -> Result<(), Fail> {
    let o = out.as_ref().ok_or_else(|| null("envelope output"))?;
    let n = env.len();
    for (dst, src) in [
        (o.median, &env.median),
        (o.p25, &env.band50_lo),
        (o.p75, &env.band50_hi),
        (o.p025, &env.band95_lo),
        (o.p975, &env.band95_hi),
    ] {
        if dst.is_null() {
            return Err(null("envelope output array"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
    }
    Ok(())
}

/// Envelope for a ship known only by gross tonnage.
///
/// # Safety
/// `post` must be a live handle, `speeds` valid for `n` reads and every
/// array of `out` valid for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn fp_predict_prior_based(
    post: *const FpPosterior,
    gross_tonnage: f64,
    speeds: *const f64,
    n: usize,
    wind_effect: f64,
    include_hyper_noise: bool,
    seed: u64,
    out: *const FpEnvelopeOut,
) -> FpStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let grid = slice_arg(speeds, n, "speeds")?;
        let env = predict_prior_based(&post.inner, gross_tonnage, grid, wind_effect, include_hyper_noise, seed)?;
        write_envelope(&env, out)
    })
}

/// Envelope over one ship's coefficient draws (parameter uncertainty only).
///
/// # Safety
/// As [`fp_predict_prior_based`]; `ship_id` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fp_predict_ship_specific(
    post: *const FpPosterior,
    ship_id: *const c_char,
    speeds: *const f64,
    n: usize,
    wind_effect: f64,
    out: *const FpEnvelopeOut,
) -> FpStatus {
    guard(|| {
        let post = post.as_ref().ok_or_else(|| null("posterior"))?;
        let id = str_arg(ship_id, "ship_id")?;
        let grid = slice_arg(speeds, n, "speeds")?;
        let env = predict_ship_specific(&post.inner, id, grid, wind_effect, None)?;
        write_envelope(&env, out)
    })
}
