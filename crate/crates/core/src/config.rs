//! Run configuration: one TOML document with a section per component.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::PropagationConfig;
use crate::agent::AgentConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::reward::ControllerConfig;
use crate::timeseries::SeriesSchema;
use crate::vae::VaeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Benchmark CSV; a synthetic series is generated when absent.
    pub path: Option<PathBuf>,
    pub schema: SeriesSchema,
    /// Used in artifact names; defaults to the file stem or "synthetic".
    pub name: Option<String>,
    pub synthetic_length: usize,
    pub anomaly_rate: f64,
    pub n_steps: usize,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            schema: SeriesSchema::Auto,
            name: None,
            synthetic_length: 5_000,
            anomaly_rate: 0.01,
            n_steps: 25,
            train_fraction: 0.8,
        }
    }
}

impl DataConfig {
    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        self.path
            .as_deref()
            .and_then(Path::file_stem)
            .map_or_else(|| "synthetic".into(), |s| s.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Labels come from the dataset's ground truth.
    Simulated,
    /// Labels come from a person through the labeling service.
    Human,
    /// The environment sees every ground-truth label; no queries.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActiveConfig {
    pub query_rate: f64,
    pub oracle: OracleMode,
    pub label_timeout_secs: f64,
    pub propagate: bool,
    pub neighbors: usize,
    pub bandwidth: Option<f64>,
    pub confidence: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        let p = PropagationConfig::default();
        ActiveConfig {
            query_rate: 0.05,
            oracle: OracleMode::Simulated,
            label_timeout_secs: 300.0,
            propagate: true,
            neighbors: p.neighbors,
            bandwidth: p.bandwidth,
            confidence: p.confidence,
            tol: p.tol,
            max_iters: p.max_iters,
        }
    }
}

impl ActiveConfig {
    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            neighbors: self.neighbors,
            bandwidth: self.bandwidth,
            confidence: self.confidence,
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Episodes between Q-network checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            episodes: 150,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            checkpoint_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub vae: VaeConfig,
    pub env: EnvConfig,
    pub reward: ControllerConfig,
    pub agent: AgentConfig,
    pub active: ActiveConfig,
    pub run: RunSection,
}

/// Per-component seeds derived from the master seed by fixed offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub data: u64,
    pub q_network: u64,
    pub vae: u64,
    pub training: u64,
    pub forest: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Seeds {
            master,
            data: master.wrapping_add(1),
            q_network: master.wrapping_add(2),
            vae: master.wrapping_add(3),
            training: master.wrapping_add(4),
            forest: master.wrapping_add(5),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.run.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        let d = &self.data;
        if d.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&d.anomaly_rate) {
            return Err(Error::Config("anomaly_rate must lie in [0, 1)".into()));
        }
        let a = &self.active;
        if !(0.0..=1.0).contains(&a.query_rate) {
            return Err(Error::Config("query_rate must lie in [0, 1]".into()));
        }
        if !(a.confidence > 0.5 && a.confidence <= 1.0) {
            return Err(Error::Config("confidence must lie in (0.5, 1]".into()));
        }
        if a.neighbors == 0 || !(a.tol > 0.0) || !(a.label_timeout_secs > 0.0) {
            return Err(Error::Config("neighbors, tol and label_timeout_secs must be positive".into()));
        }
        if self.vae.latent_dim == 0 || self.vae.hidden == 0 || self.vae.batch_size == 0 {
            return Err(Error::Config("vae sizes must be positive".into()));
        }
        let r = &self.reward;
        if !(r.lambda_min <= r.lambda0 && r.lambda0 <= r.lambda_max) {
            return Err(Error::Config("lambda0 must lie within [lambda_min, lambda_max]".into()));
        }
        Ok(())
    }

    /// Applies a `section.key=value` override. The value is read as a TOML
    /// value when it parses as one and as a string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("override `{assignment}` is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
            return Err(Error::Argument(format!("override key `{key}` must be section.key")));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let section = doc
            .get_mut(path[0])
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| Error::Argument(format!("unknown config section `{}`", path[0])))?;
        section.insert(path[1].to_string(), value);
        let updated: RunConfig = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}
