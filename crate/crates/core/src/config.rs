//! Run configuration, read from a TOML file. Command-line flags override
//! file values, which override the defaults.
//!
//! ```toml
//! [paths]
//! telemetry = "data/telemetry.csv"
//! characteristics = "data/characteristics.csv"
//! output_dir = "out"
//!
//! [sampler]
//! chains = 4
//! iterations = 2000
//! warmup = 1000
//!
//! [aggregation]
//! min_coverage = 0.8
//!
//! [envelope]
//! speed_min = 2.0
//! speed_max = 12.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{KdeConfig, LowessConfig};
use crate::error::{Error, Result};
use crate::inference::SamplerConfig;
use crate::ingest::AggregationConfig;
use crate::physics::WaterProperties;
use crate::prediction::EnvelopeConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub telemetry: Option<PathBuf>,
    pub noon_reports: Option<PathBuf>,
    pub characteristics: Option<PathBuf>,
    pub posterior: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub lowess: LowessConfig,
    pub kde: KdeConfig,
    pub probs: Vec<f64>,
    /// Fills missing wetted surfaces with `factor * lwl * (B + 2T)` for the
    /// white-box baseline. Off when absent.
    pub heuristic_surface_factor: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            lowess: LowessConfig::default(),
            kde: KdeConfig::default(),
            probs: vec![0.025, 0.25, 0.5, 0.75, 0.975],
            heuristic_surface_factor: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub sampler: SamplerConfig,
    pub aggregation: AggregationConfig,
    pub water: WaterProperties,
    pub envelope: EnvelopeConfig,
    pub diagnostics: DiagnosticsConfig,
    /// Treat rows violating record invariants as fatal instead of skipping them.
    pub strict: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Paths {
    fn resolve_relative(&mut self, base: &Path) {
        for p in [
            &mut self.telemetry,
            &mut self.noon_reports,
            &mut self.characteristics,
            &mut self.posterior,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml("[sampler]\nchains = 6\n[envelope]\nspeed_steps = 20\n").unwrap();
        assert_eq!(cfg.sampler.chains, 6);
        assert_eq!(cfg.sampler.iterations, 2000);
        assert_eq!(cfg.envelope.speed_steps, 20);
        assert_eq!(cfg.envelope.speed_min, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[sampler]\nchain = 6\n"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.paths.telemetry = Some("t.csv".into());
        cfg.diagnostics.heuristic_surface_factor = Some(0.9);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[paths]\ntelemetry = \"t.csv\"\noutput_dir = \"/abs\"\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.paths.telemetry, Some(dir.path().join("t.csv")));
        assert_eq!(cfg.paths.output_dir, Some(PathBuf::from("/abs")));
    }
}
