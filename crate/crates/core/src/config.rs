//! Run configuration: a single JSON document with optional `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::data::{ResponseDecl, Schema};
use crate::posterior::PredictionMode;
use crate::search::SearchConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("override `{0}`: `{1}` is not an object")]
    OverridePath(String, String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: Schema,
    pub response: ResponseDecl,
    /// Separate test file; when absent, `split` partitions `path`.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    #[default]
    Default,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// ART predictor CSV.
    pub predictors: PathBuf,
    #[serde(default)]
    pub grid: GridChoice,
    /// Overrides the grid's noise variances.
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub ideal: bool,
}

fn default_replicates() -> usize {
    10
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prediction_mode: PredictionMode,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Applies `a.b.c=value` to a JSON document; `value` is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::OverridePath(assignment.to_string(), parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

impl RunConfig {
    /// Parses without checking value ranges; see [`RunConfig::validate`].
    pub fn from_value(doc: Value) -> Result<Self, ConfigError> {
        Ok(serde_json::from_value(doc)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("search: {e}")))?;
        if let Some(split) = &self.split {
            if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
                return Err(ConfigError::Invalid("split.train_fraction must be in (0, 1)".into()));
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.replicates == 0 {
                return Err(ConfigError::Invalid("simulation.replicates must be at least 1".into()));
            }
            if let Some(v) = &sim.variances {
                if v.is_empty() || v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(ConfigError::Invalid("simulation.variances must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Reads a config file, applies overrides and resolves relative paths
    /// against the file's directory. Call [`RunConfig::validate`] afterwards.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut doc: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg = RunConfig::from_value(doc)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.data {
            fix(&mut d.path);
            if let Some(t) = &mut d.test_path {
                fix(t);
            }
        }
        if let Some(s) = &mut self.simulation {
            fix(&mut s.predictors);
        }
    }
}
