use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal::DiscoveryParams;
use crate::data::PartitionSizes;
use crate::error::{Error, Result};
use crate::eval::{DetectionParams, GmmParams, OutlierParams, StabilityConfig};
use crate::explain::{ExplainParams, Mode};
use crate::models::{BlackBoxKind, BlackBoxParams, RegressorParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub outliers: OutlierParams,
    pub gmm: GmmParams,
    pub detection: DetectionParams,
    pub stability: StabilityConfig,
}

/// Everything that determines a run. Fields marked as run-local do not enter
/// the configuration hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Name used in output tables; defaults to the dataset file stem.
    pub name: Option<String>,
    /// Defaults to the last column of the file.
    pub label_column: Option<String>,
    pub partition: PartitionSizes,
    pub seed: u64,
    pub black_box: BlackBoxKind,
    pub black_box_params: BlackBoxParams,
    pub modes: Vec<Mode>,
    /// Feature budgets to evaluate; the largest is used for the summary table.
    pub k: Vec<usize>,
    /// Explain only the first `n` rows of the explanation partition.
    pub n_instances: Option<usize>,
    pub explain: ExplainParams,
    pub discovery: DiscoveryParams,
    /// Regressors of the neighborhood generator.
    pub regressor: RegressorParams,
    pub metrics: MetricParams,
    /// Run-local.
    pub output_dir: PathBuf,
    /// Run-local; defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Run-local; worker threads, defaulting to available parallelism.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            name: None,
            label_column: None,
            partition: PartitionSizes::Default,
            seed: 0,
            black_box: BlackBoxKind::RandomForest,
            black_box_params: BlackBoxParams::default(),
            modes: Mode::ALL.to_vec(),
            k: vec![4],
            n_instances: None,
            explain: ExplainParams::default(),
            discovery: DiscoveryParams::default(),
            regressor: RegressorParams::default(),
            metrics: MetricParams::default(),
            output_dir: PathBuf::from("run"),
            cache_dir: None,
            threads: None,
        }
    }
}

impl RunConfig {
    /// Read a TOML or JSON file (chosen by extension). A relative dataset path
    /// is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("no dataset given".into()));
        }
        if !self.dataset.is_file() {
            return Err(Error::Config(format!(
                "dataset '{}' does not exist",
                self.dataset.display()
            )));
        }
        if self.modes.is_empty() {
            return Err(Error::Config(
                "at least one explainer mode is required".into(),
            ));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::Config(
                "k values must be a non-empty list of positive integers".into(),
            ));
        }
        if self.explain.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if let Some(s) = self.explain.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma must be positive, got {s}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated feature budgets.
    pub fn k_values(&self) -> Vec<usize> {
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        k
    }

    /// SHA-256 over the result-determining fields in canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            for local in ["output_dir", "cache_dir", "threads"] {
                o.remove(local);
            }
        }
        Ok(hex(&Sha256::digest(serde_json::to_vec(&v)?)))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(value)?)))
}
