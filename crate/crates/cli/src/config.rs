use std::fmt;
use std::path::{Path, PathBuf};

use fin_core::space::SpaceSpec;
use fin_core::stats::log_grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exponents,
    Volume,
    Subordinator,
    Heatkernel,
    Exit,
    Report,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Exponents => "exponents",
            Self::Volume => "volume",
            Self::Subordinator => "subordinator",
            Self::Heatkernel => "heatkernel",
            Self::Exit => "exit",
            Self::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceConfig {
    Path {
        n_cells: usize,
        #[serde(default = "unit_length")]
        length: f64,
    },
    Gasket {
        level: usize,
    },
}

fn unit_length() -> f64 {
    1.0
}

impl SpaceConfig {
    pub fn spec(&self) -> SpaceSpec {
        match *self {
            Self::Path { n_cells, length } => SpaceSpec::path(n_cells, length),
            Self::Gasket { level } => SpaceSpec::gasket(level),
        }
    }
}

/// Log-spaced grid of `points` values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        log_grid(self.min, self.max, self.points)
    }

    fn check(&self, key: &str) -> Result<(), ConfigError> {
        if !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "`{key}` needs 0 < min < max, got min {} max {}",
                self.min, self.max
            )));
        }
        if self.points < 2 {
            return Err(ConfigError::Invalid(format!("`{key}.points` must be at least 2")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, alias = "ensemble", skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_grid: Option<GridSpec>,
    /// Fit window `[lo, hi]` on the time axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    /// Metric distances from the marked vertex (heatkernel, exit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    /// Probability window for exit-tail fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_range: Option<(f64, f64)>,
    /// Monte Carlo sample count (subordinator).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Bundle to summarize (report).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing required field `{field}` for experiment {experiment}")]
    Missing { field: &'static str, experiment: Experiment },
    #[error("{0}")]
    Invalid(String),
}

/// Reads a config document without validating it, so command-line
/// overrides can be applied first.
pub fn read_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&doc)?)
}

impl ExperimentConfig {
    fn require<T>(&self, field: &'static str, value: &Option<T>) -> Result<(), ConfigError> {
        if value.is_none() {
            return Err(ConfigError::Missing {
                field,
                experiment: self.experiment,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use Experiment::*;
        let e = self.experiment;
        if e != Report {
            self.require("seed", &self.seed)?;
            self.require("alpha", &self.alpha)?;
        }
        if matches!(e, Exponents | Volume | Heatkernel | Exit) {
            self.require("space", &self.space)?;
        }
        if matches!(e, Volume | Heatkernel | Exit) {
            self.require("ensemble_size", &self.ensemble_size)?;
        }
        if matches!(e, Heatkernel | Exit) {
            self.require("time_grid", &self.time_grid)?;
        }
        if e == Exit {
            self.require("distances", &self.distances)?;
        }
        if e == Report {
            self.require("source", &self.source)?;
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(ConfigError::Invalid(format!("`alpha` = {a} is outside the range (0, 1)")));
            }
        }
        if let Some(space) = &self.space {
            match *space {
                SpaceConfig::Path { n_cells, length } => {
                    if n_cells < 2 || !(length > 0.0 && length.is_finite()) {
                        return Err(ConfigError::Invalid(format!(
                            "`space` path needs n_cells >= 2 and length > 0, got {n_cells}, {length}"
                        )));
                    }
                }
                SpaceConfig::Gasket { level } => {
                    if level > 7 {
                        return Err(ConfigError::Invalid(format!("`space.level` = {level} exceeds 7")));
                    }
                }
            }
        }
        if self.ensemble_size == Some(0) {
            return Err(ConfigError::Invalid("`ensemble_size` must be positive".into()));
        }
        if e == Volume && self.ensemble_size.is_some_and(|n| n < 100) {
            return Err(ConfigError::Invalid("`ensemble_size` must be at least 100 for volume scans".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("`workers` must be positive".into()));
        }
        if self.samples == Some(0) {
            return Err(ConfigError::Invalid("`samples` must be positive".into()));
        }
        if let Some(g) = &self.time_grid {
            g.check("time_grid")?;
        }
        if let Some(g) = &self.radius_grid {
            g.check("radius_grid")?;
        }
        for (key, w) in [("fit_window", self.fit_window), ("p_range", self.p_range)] {
            if let Some((lo, hi)) = w {
                if !(lo >= 0.0 && hi > lo) {
                    return Err(ConfigError::Invalid(format!("`{key}` needs 0 <= lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if let Some(d) = &self.distances {
            if d.is_empty() || d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(ConfigError::Invalid("`distances` must be a non-empty list of positive values".into()));
            }
            if e == Exit && d.len() < 3 {
                return Err(ConfigError::Invalid("`distances` needs at least 3 values for the exponent fit".into()));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_config_str(doc: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_heatkernel_config_is_valid() {
        let cfg = parse_config_str(
            r#"{"experiment": "heatkernel", "space": {"kind": "path", "n_cells": 1024},
                "alpha": 0.5, "ensemble": 100, "seed": 7,
                "time_grid": {"min": 1e-5, "max": 1e-3, "points": 11}}"#,
        )
        .unwrap();
        assert_eq!(cfg.ensemble_size, Some(100));
        assert_eq!(cfg.space.unwrap().spec(), SpaceSpec::path(1024, 1.0));
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let err = parse_config_str(r#"{"experiment": "exponents", "space": {"kind": "gasket", "level": 3}, "alpha": 1.2, "seed": 1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config_str(r#"{"experiment": "exponents", "alpa": 0.5, "seed": 1}"#).unwrap_err();
        assert!(err.to_string().contains("alpa"), "{err}");
        let err = parse_config_str(r#"{"experiment": "exponents", "space": {"kind": "path", "cells": 4}, "alpha": 0.5, "seed": 1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("cells"), "{err}");
    }

    #[test]
    fn missing_seed_is_named() {
        let err = parse_config_str(r#"{"experiment": "subordinator", "alpha": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("`seed`"), "{err}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = parse_config_str(r#"{"experiment": "subordinator", "alpha": "half", "seed": 1}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }
}
