//! The `fleetpower` command-line tool.
//!
//! Subcommands follow the pipeline: `generate`, `aggregate`, `fit`,
//! `predict`, `diagnose`, `compare`. Settings come from an optional TOML
//! run configuration (see [`crate::config`]); flags override it.
//!
//! A global `--seed` replaces every seed of the run with sub-seeds derived
//! from it by labeled hashing ([`crate::rng::derive_seed`]) with the labels
//! `generate`, `fit` and `predict`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::diagnostics::{
    kde, lowess, residual_quantiles, residuals, summarize, ComparisonRow, ModelTag, ResidualSeries, ShipModel,
};
use crate::error::Error;
use crate::inference::{fit_hierarchical, fit_independent, merge_independent, FleetModel, PosteriorChains};
use crate::ingest::{aggregate, featurize, FeatureRow, NoonReport};
use crate::io;
use crate::physics::VesselCharacteristics;
use crate::prediction::{median_wind_effect, predict_prior_based, predict_ship_specific, wind_effects};
use crate::rng::derive_seed;
use crate::synthetic::{simulate_fleet, FleetSpec};

#[derive(Debug, Parser)]
#[command(name = "fleetpower", version, about = "Hierarchical grey-box propulsion power models for ship fleets")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fail on rows that violate record invariants instead of skipping them.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet: telemetry, characteristics and truth CSVs.
    Generate(GenerateArgs),
    /// Aggregate telemetry into interval (noon report) records.
    Aggregate(AggregateArgs),
    /// Fit the fleet model and write posterior draws plus a diagnostics table.
    Fit(FitArgs),
    /// Write a speed-power envelope for a ship or a gross tonnage.
    Predict(PredictArgs),
    /// Write residual, KDE, LOWESS and quantile CSVs.
    Diagnose(DataArgs),
    /// Write the per-ship residual comparison table.
    Compare(DataArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Fleet specification (TOML); defaults when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory for telemetry.csv, characteristics.csv and truth.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Create the output directory if it does not exist.
    #[arg(long)]
    pub mkdir: bool,
    #[arg(long)]
    pub ships: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub records_per_day: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    /// Output noon-report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub interval_hours: Option<f64>,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    /// Drop records slower than this before aggregating, m/s.
    #[arg(long)]
    pub speed_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Output posterior CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output diagnostics table; defaults next to the posterior.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fit ships jointly with the hyper-model (default).
    #[arg(long, conflicts_with = "independent")]
    pub hierarchical: bool,
    /// Fit every ship on its own, without the hyper-model.
    #[arg(long)]
    pub independent: bool,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub freeze_variances: bool,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub characteristics: Option<PathBuf>,
    /// Interval records; preferred over telemetry when both are set.
    #[arg(long)]
    pub noon: Option<PathBuf>,
    /// Momentary telemetry, used row by row when no noon reports are given.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Prior-based envelope for this gross tonnage.
    #[arg(long, conflicts_with = "ship_id", required_unless_present = "ship_id")]
    pub gt: Option<f64>,
    /// Ship-specific envelope for this ship.
    #[arg(long)]
    pub ship_id: Option<String>,
    /// Output envelope CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Wind effect cos(alpha) U_R^2 in m^2/s^2; zero when neither this nor
    /// --telemetry is given.
    #[arg(long, conflicts_with = "telemetry")]
    pub wind_effect: Option<f64>,
    /// Use the median wind effect of this telemetry (of the ship, when
    /// --ship-id is set).
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    #[arg(long)]
    pub speed_min: Option<f64>,
    #[arg(long)]
    pub speed_max: Option<f64>,
    #[arg(long)]
    pub speed_steps: Option<usize>,
    /// Prior-based envelope of the fleet line only, without hyper-noise.
    #[arg(long)]
    pub no_hyper_noise: bool,
    /// Add observation noise to ship-specific curves.
    #[arg(long)]
    pub observation_noise: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Output directory (diagnose) or table CSV (compare).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill missing wetted surfaces with factor * lwl * (B + 2T).
    #[arg(long)]
    pub heuristic_surface: Option<f64>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 1,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Output streams of a run, so tests can capture them.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Console<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", line.as_ref());
    }

    fn warn(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.err, "warning: {}", line.as_ref());
    }
}

/// Parses arguments and runs, returning the exit code.
pub fn main_with_args<I, T>(args: I, console: &mut Console) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(console.out, "{e}");
            } else {
                let _ = write!(console.err, "{e}");
            }
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli, console)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            let _ = writeln!(console.err, "error: {}", e.message);
            e.code
        }
        Err(_) => {
            let _ = writeln!(console.err, "error: internal failure");
            3
        }
    }
}

pub fn run(cli: Cli, console: &mut Console) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // Only the first pool per process takes effect; later calls are harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => CliError::usage(e.to_string()),
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    if cli.strict {
        cfg.strict = true;
    }
    if let Some(seed) = cli.seed {
        cfg.sampler.seed = derive_seed(seed, "fit");
        cfg.envelope.seed = derive_seed(seed, "predict");
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a, &cfg, cli.seed, console),
        Command::Aggregate(a) => cmd_aggregate(a, cfg, console),
        Command::Fit(a) => cmd_fit(a, cfg, console),
        Command::Predict(a) => cmd_predict(a, cfg, console),
        Command::Diagnose(a) => cmd_diagnose(a, cfg, console),
        Command::Compare(a) => cmd_compare(a, cfg, console),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::usage(format!("no {what} given (flag or [paths] entry)")))
}

fn output_path(flag: Option<PathBuf>, cfg: &RunConfig, default_name: &str) -> CliResult<PathBuf> {
    match (flag, &cfg.paths.output_dir) {
        (Some(p), _) => Ok(p),
        (None, Some(dir)) => Ok(dir.join(default_name)),
        (None, None) => Err(CliError::usage(format!(
            "no output given for {default_name} (--out or [paths] output_dir)"
        ))),
    }
}

fn check_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn report_skipped(what: &Path, skipped: &[(u64, String)], console: &mut Console) {
    for (line, msg) in skipped {
        console.warn(format!("{}:{line}: skipped row: {msg}", what.display()));
    }
}

fn cmd_generate(a: GenerateArgs, cfg: &RunConfig, seed: Option<u64>, console: &mut Console) -> CliResult {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<FleetSpec>(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => FleetSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = derive_seed(s, "generate");
    }
    if let Some(n) = a.ships {
        spec.n_ships = n;
    }
    if let Some(n) = a.days {
        spec.days = n;
    }
    if let Some(n) = a.records_per_day {
        spec.records_per_day = n;
    }
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let dir = a
        .out_dir
        .or_else(|| cfg.paths.output_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory given (--out-dir or [paths] output_dir)"))?;
    if !dir.is_dir() {
        if a.mkdir {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        } else {
            return Err(CliError::usage(format!(
                "output directory {} does not exist (use --mkdir)",
                dir.display()
            )));
        }
    }
    let fleet = simulate_fleet(&spec)?;
    io::write_telemetry(&dir.join("telemetry.csv"), &fleet.telemetry)?;
    io::write_characteristics(&dir.join("characteristics.csv"), &fleet.characteristics())?;
    let truth: Vec<_> = fleet.ships.iter().map(|s| (s.chars.ship_id.clone(), s.truth)).collect();
    io::write_truth(&dir.join("truth.csv"), &truth)?;
    let per_ship = spec.days * spec.records_per_day;
    for s in &fleet.ships {
        console.say(format!(
            "{}: gt={:.0} a={:.6e} b={:.6e} sigma={:.6e} records={per_ship}",
            s.chars.ship_id, s.chars.gross_tonnage, s.truth.a, s.truth.b, s.truth.sigma
        ));
    }
    Ok(())
}

fn cmd_aggregate(a: AggregateArgs, mut cfg: RunConfig, console: &mut Console) -> CliResult {
    if let Some(h) = a.interval_hours {
        cfg.aggregation.interval_hours = h;
    }
    if let Some(c) = a.min_coverage {
        cfg.aggregation.min_coverage = c;
    }
    if let Some(f) = a.speed_floor {
        cfg.aggregation.speed_floor = Some(f);
    }
    let input = required(a.telemetry, &cfg.paths.telemetry, "telemetry")?;
    let out = output_path(a.out.or_else(|| cfg.paths.noon_reports.clone()), &cfg, "noon_reports.csv")?;
    check_parent(&out)?;
    let loaded = io::read_telemetry(&input, cfg.strict)?;
    report_skipped(&input, &loaded.skipped, console);
    let reports = aggregate(&loaded.records, &cfg.aggregation).map_err(|e| match e {
        Error::InvalidInput(m) if m.contains("must") => CliError::usage(m),
        other => other.into(),
    })?;
    io::write_noon_reports(&out, &reports)?;
    console.say(format!(
        "{} records -> {} interval records in {}",
        loaded.records.len(),
        reports.len(),
        out.display()
    ));
    Ok(())
}

/// Regression rows per ship from noon reports or, failing that, telemetry.
fn load_rows(inputs: &InputArgs, cfg: &RunConfig, console: &mut Console) -> CliResult<BTreeMap<String, Vec<FeatureRow>>> {
    let noon = inputs.noon.clone().or_else(|| cfg.paths.noon_reports.clone());
    let mut rows: BTreeMap<String, Vec<FeatureRow>> = BTreeMap::new();
    if let Some(path) = noon {
        let loaded = io::read_noon_reports(&path, cfg.strict)?;
        report_skipped(&path, &loaded.skipped, console);
        for r in &loaded.records {
            rows.entry(r.ship_id.clone()).or_default().push(NoonReport::feature_row(r));
        }
    } else {
        let path = required(inputs.telemetry.clone(), &cfg.paths.telemetry, "noon reports or telemetry")?;
        let loaded = io::read_telemetry(&path, cfg.strict)?;
        report_skipped(&path, &loaded.skipped, console);
        for r in &loaded.records {
            rows.entry(r.ship_id.clone()).or_default().push(featurize(r)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("no observations in the input").into());
    }
    Ok(rows)
}

fn load_characteristics(inputs: &InputArgs, cfg: &RunConfig, console: &mut Console) -> CliResult<Vec<VesselCharacteristics>> {
    let path = required(inputs.characteristics.clone(), &cfg.paths.characteristics, "characteristics")?;
    let loaded = io::read_characteristics(&path, cfg.strict)?;
    report_skipped(&path, &loaded.skipped, console);
    Ok(loaded.records)
}

fn cmd_fit(a: FitArgs, mut cfg: RunConfig, console: &mut Console) -> CliResult {
    if let Some(n) = a.chains {
        cfg.sampler.chains = n;
    }
    if let Some(n) = a.iterations {
        cfg.sampler.iterations = n;
    }
    if let Some(n) = a.warmup {
        cfg.sampler.warmup = n;
    }
    if a.freeze_variances {
        cfg.sampler.freeze_variances = true;
    }
    cfg.sampler.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let out = output_path(a.out.or_else(|| cfg.paths.posterior.clone()), &cfg, "posterior.csv")?;
    check_parent(&out)?;
    let report = match a.report {
        Some(p) => p,
        None => out.with_file_name("diagnostics.csv"),
    };
    check_parent(&report)?;

    let chars = load_characteristics(&a.inputs, &cfg, console)?;
    let rows = load_rows(&a.inputs, &cfg, console)?;
    let by_ref: BTreeMap<&str, Vec<FeatureRow>> = rows.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let fleet = FleetModel::from_rows(&chars, by_ref, &cfg.sampler.bounds)?;
    let b = fleet.bounds();
    console.say(format!(
        "prior box: a in (0, {:.6e}], b in [0, {:.6e}], sigma_a <= {:.6e}, sigma_b <= {:.6e}",
        b.a_max, b.b_max, b.sigma_a.hi, b.sigma_b.hi
    ));
    let post = if a.independent {
        merge_independent(&fit_independent(&fleet, &cfg.sampler)?)?
    } else {
        fit_hierarchical(&fleet, &cfg.sampler)?
    };
    for w in &post.warnings {
        console.warn(w);
    }
    io::write_posterior(&out, &post)?;
    write_fit_report(&report, &post, console)?;
    console.say(format!(
        "{} chains x {} draws of {} parameters -> {}",
        post.chains,
        post.iterations,
        post.n_params(),
        out.display()
    ));
    Ok(())
}

/// Threshold above which split R-hat is reported as a warning.
pub const RHAT_WARN: f64 = 1.05;

fn write_fit_report(path: &Path, post: &PosteriorChains, console: &mut Console) -> CliResult {
    let diag = post.diagnostics()?;
    let mut meta = Vec::new();
    let mut out_rows = Vec::new();
    for (k, name) in diag.param_names.iter().enumerate() {
        let (r, e) = (diag.rhat[k], diag.ess[k]);
        if !(r < RHAT_WARN) {
            let msg = format!("{name}: split R-hat {r:.4} >= {RHAT_WARN}");
            console.warn(&msg);
            meta.push(format!("warning: {msg}"));
        }
        out_rows.push([name.clone(), r.to_string(), e.to_string()]);
    }
    meta.push(format!("divergent={}", diag.divergent_count));
    let mut out = io::CsvOut::create(path, &meta, &["param", "rhat", "ess"])?;
    for r in out_rows {
        out.row(r)?;
    }
    out.finish()?;
    console.say(format!(
        "max R-hat {:.4}, min ESS {:.0}; table in {}",
        diag.max_rhat(),
        diag.min_ess(),
        path.display()
    ));
    Ok(())
}

fn posterior_path(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    match flag.or_else(|| cfg.paths.posterior.clone()) {
        Some(p) => Ok(p),
        None => match &cfg.paths.output_dir {
            Some(d) => Ok(d.join("posterior.csv")),
            None => Err(CliError::usage("no posterior given (--posterior or [paths] posterior)")),
        },
    }
}

fn cmd_predict(a: PredictArgs, mut cfg: RunConfig, console: &mut Console) -> CliResult {
    if let Some(v) = a.speed_min {
        cfg.envelope.speed_min = v;
    }
    if let Some(v) = a.speed_max {
        cfg.envelope.speed_max = v;
    }
    if let Some(v) = a.speed_steps {
        cfg.envelope.speed_steps = v;
    }
    if a.no_hyper_noise {
        cfg.envelope.include_hyper_noise = false;
    }
    if a.observation_noise {
        cfg.envelope.include_observation_noise = true;
    }
    let grid = cfg.envelope.grid().map_err(|e| CliError::usage(e.to_string()))?;
    let post_path = posterior_path(a.posterior, &cfg)?;
    let out = output_path(a.out, &cfg, "envelope.csv")?;
    check_parent(&out)?;
    let post = io::read_posterior(&post_path)?;

    let wind = match (a.wind_effect, &a.telemetry) {
        (Some(w), _) => w,
        (None, Some(path)) => {
            let loaded = io::read_telemetry(path, cfg.strict)?;
            let records: Vec<_> = match &a.ship_id {
                Some(id) => loaded.records.into_iter().filter(|r| &r.ship_id == id).collect(),
                None => loaded.records,
            };
            median_wind_effect(&wind_effects(&records))?
        }
        (None, None) => 0.0,
    };
    let env = match (&a.ship_id, a.gt) {
        (Some(id), _) => {
            let noise = cfg.envelope.include_observation_noise.then_some(cfg.envelope.seed);
            predict_ship_specific(&post, id, &grid, wind, noise)?
        }
        (None, Some(gt)) => predict_prior_based(
            &post,
            gt,
            &grid,
            wind,
            cfg.envelope.include_hyper_noise,
            cfg.envelope.seed,
        )?,
        (None, None) => return Err(CliError::usage("give --gt or --ship-id")),
    };
    env.check_nesting().map_err(|e| CliError {
        code: 3,
        message: e.to_string(),
    })?;
    io::write_envelope(&out, &env)?;
    console.say(format!(
        "{} envelope over {} speeds (wind effect {wind}) -> {}",
        env.source.tag(),
        env.len(),
        out.display()
    ));
    Ok(())
}

/// Residual series of every model for every ship with data. Models that
/// cannot be evaluated for a ship are returned as `(ship, tag, reason)`.
fn residual_table(
    a: &DataArgs,
    cfg: &RunConfig,
    console: &mut Console,
) -> CliResult<(Vec<ResidualSeries>, Vec<(String, ModelTag, String)>)> {
    let post = io::read_posterior(&posterior_path(a.posterior.clone(), cfg)?)?;
    let chars = load_characteristics(&a.inputs, cfg, console)?;
    let rows = load_rows(&a.inputs, cfg, console)?;
    let heuristic = a.heuristic_surface.or(cfg.diagnostics.heuristic_surface_factor);
    let by_id: BTreeMap<&str, &VesselCharacteristics> = chars.iter().map(|c| (c.ship_id.as_str(), c)).collect();
    let mut series = Vec::new();
    let mut unavailable = Vec::new();
    for (id, data) in &rows {
        let c = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownShip(id.clone()))?;
        let models = [
            (ModelTag::Steam2, ShipModel::steam2(c, cfg.water, heuristic)),
            (ModelTag::PriorBased, ShipModel::prior_based(&post, c)),
            (ModelTag::ShipSpecific, ShipModel::ship_specific(&post, id)),
        ];
        for (tag, model) in models {
            match model {
                Ok(m) => {
                    if m.is_heuristic() {
                        console.warn(format!("ship {id}: steam2 uses a heuristic wetted surface"));
                    }
                    series.push(residuals(id, data, &m)?);
                }
                Err(e @ (Error::WhiteBoxUnavailable { .. } | Error::UnknownShip(_) | Error::MissingParameter(_))) => {
                    console.warn(format!("ship {id}: {tag} unavailable: {e}"));
                    unavailable.push((id.clone(), tag, e.to_string()));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok((series, unavailable))
}

fn cmd_diagnose(a: DataArgs, cfg: RunConfig, console: &mut Console) -> CliResult {
    let dir = a
        .out
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory given (--out or [paths] output_dir)"))?;
    if !dir.is_dir() {
        return Err(CliError::usage(format!("output directory {} does not exist", dir.display())));
    }
    let (series, _) = residual_table(&a, &cfg, console)?;
    if series.is_empty() {
        return Err(Error::invalid("no model could be evaluated").into());
    }
    io::write_residuals(&dir.join("residuals.csv"), &series)?;
    let quantiles = residual_quantiles(&series, &cfg.diagnostics.probs).map_err(|e| match e {
        Error::InvalidInput(m) if m.contains("probability") => CliError::usage(m),
        other => other.into(),
    })?;
    io::write_quantiles(&dir.join("quantiles.csv"), &quantiles)?;
    for tag in ModelTag::ALL {
        let of_tag: Vec<&ResidualSeries> = series.iter().filter(|s| s.model_tag == tag).collect();
        if of_tag.is_empty() {
            continue;
        }
        let values: Vec<f64> = of_tag.iter().flat_map(|s| s.residuals.iter().copied()).collect();
        let speeds: Vec<f64> = of_tag.iter().flat_map(|s| s.speeds.iter().copied()).collect();
        let meta = vec![format!("model_tag={tag}")];
        let density = kde(&values, &cfg.diagnostics.kde)?;
        io::write_kde(&dir.join(format!("kde_{tag}.csv")), &meta, &density)?;
        if values.len() >= 2 {
            let curve = lowess(&speeds, &values, &cfg.diagnostics.lowess)?;
            io::write_lowess(&dir.join(format!("lowess_{tag}.csv")), &meta, &curve)?;
        }
    }
    console.say(format!("{} residual series -> {}", series.len(), dir.display()));
    Ok(())
}

fn cmd_compare(a: DataArgs, cfg: RunConfig, console: &mut Console) -> CliResult {
    let out = output_path(a.out.clone(), &cfg, "comparison.csv")?;
    check_parent(&out)?;
    let (series, unavailable) = residual_table(&a, &cfg, console)?;
    let mut rows: Vec<ComparisonRow> = series
        .iter()
        .map(|s| {
            Ok(ComparisonRow {
                ship_id: s.ship_id.clone(),
                model_tag: s.model_tag,
                summary: Some(summarize(s)?),
            })
        })
        .collect::<Result<_, Error>>()?;
    rows.extend(unavailable.into_iter().map(|(ship_id, model_tag, _)| ComparisonRow {
        ship_id,
        model_tag,
        summary: None,
    }));
    rows.sort_by(|x, y| (&x.ship_id, x.model_tag).cmp(&(&y.ship_id, y.model_tag)));
    io::write_comparison(&out, &rows)?;
    for r in &rows {
        match r.summary {
            Some(s) => console.say(format!(
                "{:<12} {:<14} median {:>12.4e}  p2.5 {:>12.4e}  p97.5 {:>12.4e}  RMSE {:>12.4e}",
                r.ship_id, r.model_tag, s.median, s.p025, s.p975, s.rmse
            )),
            None => console.say(format!("{:<12} {:<14} unavailable", r.ship_id, r.model_tag)),
        }
    }
    Ok(())
}
