use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulators::{ModelSpec, MODEL_NAMES};
use crate::snpe::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Lmd,
    Nlog,
    C2st,
    Mmd,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Lmd => "lmd",
            MetricKind::Nlog => "nlog",
            MetricKind::C2st => "c2st",
            MetricKind::Mmd => "mmd",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, MetricKind::C2st | MetricKind::Mmd)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Lmd, MetricKind::Nlog, MetricKind::C2st, MetricKind::Mmd]
}

fn default_posterior_samples() -> usize {
    1000
}

fn default_smc_population() -> usize {
    crate::smcabc::DEFAULT_POPULATION
}

/// One experiment, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    /// Method name used in comparison output.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Reference posterior CSV (with its `.json` sidecar) for C2ST and MMD.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Posterior draws per evaluation.
    #[serde(default = "default_posterior_samples")]
    pub posterior_samples: usize,
    /// Run seeds concurrently.
    #[serde(default)]
    pub seed_parallel: bool,
    #[serde(default = "default_smc_population")]
    pub smc_population: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

/// The fields that determine results; seeds, output location and scheduling
/// are left out so that every seed of one experiment shares a directory.
#[derive(Serialize)]
struct HashView<'a> {
    model: &'a str,
    label: &'a Option<String>,
    metrics: &'a [MetricKind],
    reference: &'a Option<PathBuf>,
    posterior_samples: usize,
    smc_population: usize,
    train: &'a TrainConfig,
}

impl ExperimentConfig {
    pub fn new(model: &str, train: TrainConfig) -> Self {
        ExperimentConfig {
            model: model.to_string(),
            label: None,
            metrics: default_metrics(),
            seeds: Vec::new(),
            reference: None,
            out: None,
            posterior_samples: default_posterior_samples(),
            seed_parallel: false,
            smc_population: default_smc_population(),
            train,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_fields()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate_fields(&self) -> Result<()> {
        if !MODEL_NAMES.contains(&self.model.as_str()) {
            return Err(Error::Config(format!("unknown model {:?}; expected one of {}", self.model, MODEL_NAMES.join(", "))));
        }
        if self.posterior_samples < 2 {
            return Err(Error::Config("posterior_samples must be >= 2".into()));
        }
        if self.smc_population < 2 {
            return Err(Error::Config("smc_population must be >= 2".into()));
        }
        self.train.validate()
    }

    /// Full validation, including the seed list.
    pub fn validate(&self) -> Result<()> {
        self.validate_fields()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::by_name(&self.model)
    }

    /// First 16 hex digits of the SHA-256 of the result-determining fields.
    pub fn hash(&self) -> String {
        let view = HashView {
            model: &self.model,
            label: &self.label,
            metrics: &self.metrics,
            reference: &self.reference,
            posterior_samples: self.posterior_samples,
            smc_population: self.smc_population,
            train: &self.train,
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("snpe-{}", self.hash()))
    }
}
