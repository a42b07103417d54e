//! CSV readers and writers for every file the pipeline exchanges.
//!
//! Readers check the header exactly and report problems with the file's
//! line number. Unparseable fields and wrong field counts are always fatal;
//! rows that parse but violate a record invariant are fatal in strict mode
//! and skipped (and reported) otherwise. Lines starting with `#` carry
//! metadata and are ignored by the readers.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::diagnostics::{ComparisonRow, DensityCurve, ModelTag, QuantileRow, ResidualSeries, SmoothedCurve};
use crate::error::{Error, Result};
use crate::inference::{FitMode, PosteriorChains};
use crate::ingest::{NoonReport, TelemetryRecord};
use crate::physics::{ShipParameters, VesselCharacteristics};
use crate::prediction::{EnvelopeSource, SpeedPowerEnvelope};

pub const CHARACTERISTICS_HEADER: [&str; 7] = [
    "ship_id",
    "gross_tonnage",
    "lwl_m",
    "breadth_m",
    "draft_m",
    "wetted_surface_m2",
    "c_r",
];
pub const TELEMETRY_HEADER: [&str; 6] = [
    "ship_id",
    "timestamp_utc",
    "stw_mps",
    "rel_wind_speed_mps",
    "rel_wind_angle_rad",
    "propulsion_power_w",
];
pub const NOON_HEADER: [&str; 8] = [
    "ship_id",
    "interval_start_utc",
    "interval_end_utc",
    "mean_x_hydro",
    "mean_x_aero",
    "mean_power_w",
    "sample_count",
    "coverage",
];
pub const TRUTH_HEADER: [&str; 4] = ["ship_id", "a_true", "b_true", "sigma_true"];
pub const POSTERIOR_HEADER: [&str; 4] = ["chain", "draw", "param", "value"];
pub const ENVELOPE_HEADER: [&str; 6] = ["speed_mps", "median_w", "p25_w", "p75_w", "p025_w", "p975_w"];
pub const RESIDUALS_HEADER: [&str; 4] = ["ship_id", "model_tag", "speed_mps", "residual_w"];
pub const KDE_HEADER: [&str; 2] = ["value", "density"];
pub const LOWESS_HEADER: [&str; 2] = ["speed_mps", "residual_w_fit"];
pub const QUANTILES_HEADER: [&str; 4] = ["ship_id", "model_tag", "prob", "value_w"];
pub const COMPARISON_HEADER: [&str; 6] = ["ship_id", "model_tag", "median", "p2.5", "p97.5", "RMSE"];

/// Records read from a file plus the rows skipped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    /// `(line, message)` for every skipped row.
    pub skipped: Vec<(u64, String)>,
}

struct Fields<'a> {
    rec: &'a StringRecord,
    header: &'a [&'a str],
}

type FieldResult<T> = std::result::Result<T, String>;

impl Fields<'_> {
    fn str(&self, i: usize) -> FieldResult<&str> {
        let s = self.rec.get(i).unwrap_or("").trim();
        if s.is_empty() {
            Err(format!("column {} is empty", self.header[i]))
        } else {
            Ok(s)
        }
    }

    fn parse<T: FromStr>(&self, i: usize, what: &str) -> FieldResult<T> {
        let s = self.str(i)?;
        s.parse()
            .map_err(|_| format!("column {}: cannot parse {s:?} as {what}", self.header[i]))
    }

    fn f64(&self, i: usize) -> FieldResult<f64> {
        self.parse(i, "a number")
    }

    fn opt_f64(&self, i: usize) -> FieldResult<Option<f64>> {
        if self.rec.get(i).unwrap_or("").trim().is_empty() {
            Ok(None)
        } else {
            self.f64(i).map(Some)
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match (line, e.kind()) {
        (Some(line), csv::ErrorKind::UnequalLengths { expected_len, len, .. }) => {
            parse_error(path, line, format!("expected {expected_len} fields, found {len}"))
        }
        (Some(line), csv::ErrorKind::Utf8 { .. }) => parse_error(path, line, "invalid UTF-8"),
        _ => Error::Csv {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

fn read_rows<T>(
    path: &Path,
    header: &[&str],
    strict: bool,
    parse: impl Fn(&Fields) -> FieldResult<T>,
    validate: impl Fn(&T) -> Result<()>,
) -> Result<Loaded<T>> {
    let mut reader = ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(BufReader::new(open(path)?));
    let found = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let found_names: Vec<&str> = found.iter().map(str::trim).collect();
    if found_names != header {
        let line = found.position().map_or(1, |p| p.line());
        return Err(parse_error(
            path,
            line,
            format!("expected header {:?}, found {:?}", header.join(","), found_names.join(",")),
        ));
    }
    let mut out = Loaded {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    let mut rec = StringRecord::new();
    loop {
        match reader.read_record(&mut rec) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(path, e)),
        }
        let line = rec.position().map_or(0, |p| p.line());
        let row = parse(&Fields { rec: &rec, header }).map_err(|m| parse_error(path, line, m))?;
        match validate(&row) {
            Ok(()) => out.records.push(row),
            Err(e) if strict => return Err(parse_error(path, line, e.to_string())),
            Err(e) => out.skipped.push((line, e.to_string())),
        }
    }
    Ok(out)
}

/// Leading `#` metadata lines, without the marker.
pub fn read_metadata(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match line.strip_prefix('#') {
            Some(rest) => out.push(rest.trim().to_string()),
            None => break,
        }
    }
    Ok(out)
}

fn metadata_value<'a>(meta: &'a [String], key: &str) -> Option<&'a str> {
    meta.iter().find_map(|m| {
        let (k, v) = m.split_once('=')?;
        (k.trim() == key).then_some(v.trim())
    })
}

pub fn read_characteristics(path: &Path, strict: bool) -> Result<Loaded<VesselCharacteristics>> {
    let loaded = read_rows(
        path,
        &CHARACTERISTICS_HEADER,
        strict,
        |f| {
            Ok(VesselCharacteristics {
                ship_id: f.str(0)?.to_string(),
                gross_tonnage: f.f64(1)?,
                lwl: f.opt_f64(2)?,
                breadth: f.opt_f64(3)?,
                draft: f.opt_f64(4)?,
                wetted_surface: f.opt_f64(5)?,
                residual_coeff: f.opt_f64(6)?,
            })
        },
        VesselCharacteristics::validate,
    )?;
    let mut seen = HashSet::new();
    for c in &loaded.records {
        if !seen.insert(c.ship_id.as_str()) {
            return Err(parse_error(path, 0, format!("duplicate ship_id {:?}", c.ship_id)));
        }
    }
    Ok(loaded)
}

pub fn read_telemetry(path: &Path, strict: bool) -> Result<Loaded<TelemetryRecord>> {
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    let mut dup: Option<(String, i64)> = None;
    let loaded = read_rows(
        path,
        &TELEMETRY_HEADER,
        strict,
        |f| {
            Ok(TelemetryRecord {
                ship_id: f.str(0)?.to_string(),
                timestamp: f.parse(1, "an integer timestamp")?,
                stw: f.f64(2)?,
                rel_wind_speed: f.f64(3)?,
                rel_wind_angle: f.f64(4)?,
                power: f.f64(5)?,
            })
        },
        TelemetryRecord::validate,
    )?;
    for r in &loaded.records {
        if !seen.insert((r.ship_id.clone(), r.timestamp)) {
            dup = Some((r.ship_id.clone(), r.timestamp));
            break;
        }
    }
    if let Some((ship, ts)) = dup {
        let line = duplicate_line(path, &ship, ts)?;
        return Err(parse_error(path, line, format!("duplicate record for ship {ship:?} at {ts}")));
    }
    Ok(loaded)
}

/// Line of the second occurrence of a (ship, timestamp) pair.
fn duplicate_line(path: &Path, ship: &str, ts: i64) -> Result<u64> {
    let mut reader = ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(open(path)?));
    let mut count = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let matches = rec.get(0).map(str::trim) == Some(ship)
            && rec.get(1).and_then(|s| s.trim().parse::<i64>().ok()) == Some(ts);
        if matches {
            count += 1;
            if count == 2 {
                return Ok(rec.position().map_or(0, |p| p.line()));
            }
        }
    }
    Ok(0)
}

pub fn read_noon_reports(path: &Path, strict: bool) -> Result<Loaded<NoonReport>> {
    let loaded = read_rows(
        path,
        &NOON_HEADER,
        strict,
        |f| {
            Ok(NoonReport {
                ship_id: f.str(0)?.to_string(),
                interval_start: f.parse(1, "an integer timestamp")?,
                interval_end: f.parse(2, "an integer timestamp")?,
                mean_x_hydro: f.f64(3)?,
                mean_x_aero: f.f64(4)?,
                mean_power: f.f64(5)?,
                sample_count: f.parse(6, "a sample count")?,
                coverage: f.f64(7)?,
            })
        },
        NoonReport::validate,
    )?;
    let mut seen = HashSet::new();
    for r in &loaded.records {
        if !seen.insert((r.ship_id.as_str(), r.interval_start)) {
            return Err(parse_error(
                path,
                0,
                format!("duplicate interval for ship {:?} at {}", r.ship_id, r.interval_start),
            ));
        }
    }
    Ok(loaded)
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, ShipParameters>> {
    let loaded = read_rows(
        path,
        &TRUTH_HEADER,
        true,
        |f| {
            Ok((
                f.str(0)?.to_string(),
                ShipParameters {
                    a: f.f64(1)?,
                    b: f.f64(2)?,
                    sigma: f.f64(3)?,
                },
            ))
        },
        |_| Ok(()),
    )?;
    Ok(loaded.records.into_iter().collect())
}

/// Reads a long-format posterior file. Parameter order follows first
/// appearance; every (chain, draw, param) cell must be present exactly once.
pub fn read_posterior(path: &Path) -> Result<PosteriorChains> {
    let rows = read_rows(
        path,
        &POSTERIOR_HEADER,
        true,
        |f| {
            Ok((
                f.parse::<usize>(0, "a chain index")?,
                f.parse::<usize>(1, "a draw index")?,
                f.str(2)?.to_string(),
                f.f64(3)?,
            ))
        },
        |_| Ok(()),
    )?
    .records;
    if rows.is_empty() {
        return Err(parse_error(path, 1, "posterior file has no draws"));
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, _, name, _) in &rows {
        if !index.contains_key(name.as_str()) {
            index.insert(name.as_str(), names.len());
            names.push(name.clone());
        }
    }
    let chains = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let iterations = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let p = names.len();
    if rows.len() != chains * iterations * p {
        return Err(parse_error(
            path,
            0,
            format!(
                "{} rows do not fill {chains} chains x {iterations} draws x {p} parameters",
                rows.len()
            ),
        ));
    }
    let mut draws = vec![f64::NAN; rows.len()];
    let mut filled = vec![false; rows.len()];
    for (c, t, name, v) in &rows {
        let k = (c * iterations + t) * p + index[name.as_str()];
        if filled[k] {
            return Err(parse_error(path, 0, format!("duplicate draw {t} of {name} in chain {c}")));
        }
        filled[k] = true;
        draws[k] = *v;
    }
    let mut post = PosteriorChains::new(names, chains, iterations, draws)?;
    let meta = read_metadata(path)?;
    post.seed = metadata_value(&meta, "seed").and_then(|s| s.parse().ok());
    post.mode = match metadata_value(&meta, "mode") {
        Some("hierarchical") => Some(FitMode::Hierarchical),
        Some("independent") => Some(FitMode::Independent),
        _ => None,
    };
    post.warnings = meta
        .iter()
        .filter_map(|m| m.strip_prefix("warning:").map(|w| w.trim().to_string()))
        .collect();
    Ok(post)
}

/// Reads an envelope file written by [`write_envelope`].
pub fn read_envelope(path: &Path) -> Result<SpeedPowerEnvelope> {
    let rows = read_rows(
        path,
        &ENVELOPE_HEADER,
        true,
        |f| Ok([f.f64(0)?, f.f64(1)?, f.f64(2)?, f.f64(3)?, f.f64(4)?, f.f64(5)?]),
        |_| Ok(()),
    )?
    .records;
    let meta = read_metadata(path)?;
    let num = |key: &str| metadata_value(&meta, key).and_then(|v| v.parse::<f64>().ok());
    let source = match (metadata_value(&meta, "ship_id"), num("gross_tonnage")) {
        (Some(id), _) => EnvelopeSource::ShipSpecific { ship_id: id.to_string() },
        (None, Some(gt)) => EnvelopeSource::PriorBased { gross_tonnage: gt },
        (None, None) => return Err(parse_error(path, 1, "envelope metadata names neither a ship nor a gross tonnage")),
    };
    let flag = |key: &str| metadata_value(&meta, key) == Some("true");
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    Ok(SpeedPowerEnvelope {
        speeds: col(0),
        median: col(1),
        band50_lo: col(2),
        band50_hi: col(3),
        band95_lo: col(4),
        band95_hi: col(5),
        source,
        wind_effect: num("wind_effect").unwrap_or(0.0),
        seed: metadata_value(&meta, "seed").and_then(|s| s.parse().ok()),
        include_hyper_noise: flag("include_hyper_noise"),
        include_observation_noise: flag("include_observation_noise"),
    })
}

/// Output file with optional `#` metadata lines ahead of the CSV body.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, metadata: &[String], header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = BufWriter::new(file);
        for m in metadata {
            writeln!(buf, "# {m}").map_err(|e| Error::io(path, e))?;
        }
        let mut writer = WriterBuilder::new().from_writer(buf);
        writer.write_record(header).map_err(|e| csv_error(path, e))?;
        Ok(CsvOut {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_characteristics(path: &Path, ships: &[VesselCharacteristics]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &CHARACTERISTICS_HEADER)?;
    for c in ships {
        out.row([
            c.ship_id.clone(),
            c.gross_tonnage.to_string(),
            opt(c.lwl),
            opt(c.breadth),
            opt(c.draft),
            opt(c.wetted_surface),
            opt(c.residual_coeff),
        ])?;
    }
    out.finish()
}

pub fn write_telemetry(path: &Path, records: &[TelemetryRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &TELEMETRY_HEADER)?;
    for r in records {
        out.row([
            r.ship_id.clone(),
            r.timestamp.to_string(),
            r.stw.to_string(),
            r.rel_wind_speed.to_string(),
            r.rel_wind_angle.to_string(),
            r.power.to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_noon_reports(path: &Path, reports: &[NoonReport]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &NOON_HEADER)?;
    for r in reports {
        out.row([
            r.ship_id.clone(),
            r.interval_start.to_string(),
            r.interval_end.to_string(),
            r.mean_x_hydro.to_string(),
            r.mean_x_aero.to_string(),
            r.mean_power.to_string(),
            r.sample_count.to_string(),
            r.coverage.to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_truth(path: &Path, truth: &[(String, ShipParameters)]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &TRUTH_HEADER)?;
    for (id, p) in truth {
        out.row([id.clone(), p.a.to_string(), p.b.to_string(), p.sigma.to_string()])?;
    }
    out.finish()
}

pub fn write_posterior(path: &Path, post: &PosteriorChains) -> Result<()> {
    let mut meta = Vec::new();
    if let Some(seed) = post.seed {
        meta.push(format!("seed={seed}"));
    }
    if let Some(mode) = post.mode {
        let m = match mode {
            FitMode::Hierarchical => "hierarchical",
            FitMode::Independent => "independent",
        };
        meta.push(format!("mode={m}"));
    }
    meta.extend(post.warnings.iter().map(|w| format!("warning: {w}")));
    let mut out = CsvOut::create(path, &meta, &POSTERIOR_HEADER)?;
    for c in 0..post.chains {
        for t in 0..post.iterations {
            for (p, name) in post.param_names.iter().enumerate() {
                out.row([c.to_string(), t.to_string(), name.clone(), post.get(c, t, p).to_string()])?;
            }
        }
    }
    out.finish()
}

pub fn envelope_metadata(env: &SpeedPowerEnvelope) -> Vec<String> {
    let mut meta = vec![format!("source={}", env.source.tag())];
    match &env.source {
        EnvelopeSource::ShipSpecific { ship_id } => meta.push(format!("ship_id={ship_id}")),
        EnvelopeSource::PriorBased { gross_tonnage } => meta.push(format!("gross_tonnage={gross_tonnage}")),
    }
    meta.push(format!("wind_effect={}", env.wind_effect));
    meta.push(format!("include_hyper_noise={}", env.include_hyper_noise));
    meta.push(format!("include_observation_noise={}", env.include_observation_noise));
    if let Some(seed) = env.seed {
        meta.push(format!("seed={seed}"));
    }
    meta
}

pub fn write_envelope(path: &Path, env: &SpeedPowerEnvelope) -> Result<()> {
    let mut out = CsvOut::create(path, &envelope_metadata(env), &ENVELOPE_HEADER)?;
    for j in 0..env.len() {
        out.row([
            env.speeds[j],
            env.median[j],
            env.band50_lo[j],
            env.band50_hi[j],
            env.band95_lo[j],
            env.band95_hi[j],
        ]
        .map(|v| v.to_string()))?;
    }
    out.finish()
}

pub fn write_residuals(path: &Path, series: &[ResidualSeries]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &RESIDUALS_HEADER)?;
    for s in series {
        for (v, r) in s.speeds.iter().zip(&s.residuals) {
            out.row([s.ship_id.clone(), s.model_tag.to_string(), v.to_string(), r.to_string()])?;
        }
    }
    out.finish()
}

pub fn read_residuals(path: &Path) -> Result<Vec<ResidualSeries>> {
    let rows = read_rows(
        path,
        &RESIDUALS_HEADER,
        true,
        |f| {
            let tag: ModelTag = f.str(1)?.parse().map_err(|e: Error| e.to_string())?;
            Ok((f.str(0)?.to_string(), tag, f.f64(2)?, f.f64(3)?))
        },
        |_| Ok(()),
    )?
    .records;
    let mut out: Vec<ResidualSeries> = Vec::new();
    for (id, tag, v, r) in rows {
        match out.last_mut() {
            Some(s) if s.ship_id == id && s.model_tag == tag => {
                s.speeds.push(v);
                s.residuals.push(r);
            }
            _ => out.push(ResidualSeries {
                ship_id: id,
                model_tag: tag,
                speeds: vec![v],
                residuals: vec![r],
            }),
        }
    }
    Ok(out)
}

pub fn write_kde(path: &Path, metadata: &[String], curve: &DensityCurve) -> Result<()> {
    let mut meta = metadata.to_vec();
    meta.push(format!("bandwidth={}", curve.bandwidth));
    let mut out = CsvOut::create(path, &meta, &KDE_HEADER)?;
    for (x, d) in curve.x.iter().zip(&curve.density) {
        out.row([x.to_string(), d.to_string()])?;
    }
    out.finish()
}

pub fn write_lowess(path: &Path, metadata: &[String], curve: &SmoothedCurve) -> Result<()> {
    let mut meta = metadata.to_vec();
    meta.push(format!("frac={}", curve.frac));
    meta.push(format!("iters={}", curve.iters));
    let mut out = CsvOut::create(path, &meta, &LOWESS_HEADER)?;
    for (x, y) in curve.x.iter().zip(&curve.y) {
        out.row([x.to_string(), y.to_string()])?;
    }
    out.finish()
}

pub fn write_quantiles(path: &Path, rows: &[QuantileRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &QUANTILES_HEADER)?;
    for r in rows {
        out.row([r.ship_id.clone(), r.model_tag.to_string(), r.prob.to_string(), r.value.to_string()])?;
    }
    out.finish()
}

/// Comparison table; unavailable models get `unavailable` in every value column.
pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &[], &COMPARISON_HEADER)?;
    for r in rows {
        let values = match r.summary {
            Some(s) => [s.median, s.p025, s.p975, s.rmse].map(|v| v.to_string()),
            None => ["unavailable"; 4].map(String::from),
        };
        let [a, b, c, d] = values;
        out.row([r.ship_id.clone(), r.model_tag.to_string(), a, b, c, d])?;
    }
    out.finish()
}
