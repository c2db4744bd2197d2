use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use redd_core::redd::TrainConfig;
use redd_core::topic::DEFAULT_BUCKET_EDGES;
use redd_core::triage::{LabelPolicy, DEFAULT_CUTOFF, DEFAULT_K};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub listen: String,
    /// Edges for new calibration sessions unless the request names its own.
    pub bucket_edges: Vec<f64>,
    /// TOML train config used by retrains that do not send one.
    pub train_config: Option<PathBuf>,
    /// Reviewer token → reviewer id. Empty means any non-empty token is accepted
    /// and used as the reviewer id.
    pub tokens: BTreeMap<String, String>,
    pub calibration_sample_size: usize,
    pub seed: u64,
    pub cutoff: usize,
    pub k: usize,
    pub min_pages: usize,
    pub histogram_bin: usize,
    /// Sample pages shown per queue row.
    pub sample_pages: usize,
    /// Longest wait for the decision log or a calibration session before a
    /// retryable error.
    pub write_timeout_ms: u64,
    pub label_policy: LabelPolicy,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            listen: "127.0.0.1:8080".into(),
            bucket_edges: DEFAULT_BUCKET_EDGES.to_vec(),
            train_config: None,
            tokens: BTreeMap::new(),
            calibration_sample_size: 20,
            seed: 0,
            cutoff: DEFAULT_CUTOFF,
            k: DEFAULT_K,
            min_pages: 1,
            histogram_bin: 10,
            sample_pages: 3,
            write_timeout_ms: 5_000,
            label_policy: LabelPolicy::default(),
        }
    }
}

impl ServiceConfig {
    pub fn with_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            ..ServiceConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))?;
        let mut cfg: ServiceConfig = toml::from_str(&text)
            .map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            if cfg.data_dir.is_relative() {
                cfg.data_dir = base.join(&cfg.data_dir);
            }
            if let Some(p) = cfg.train_config.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: &str| Err(ServiceError::Invalid(m.into()));
        if self.cutoff == 0 {
            return bad("cutoff must be at least 1");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.min_pages == 0 || self.histogram_bin == 0 || self.calibration_sample_size == 0 {
            return bad("min_pages, histogram_bin and calibration_sample_size must be positive");
        }
        if self.bucket_edges.len() < 2 {
            return bad("bucket_edges needs at least two edges");
        }
        if let Some(p) = &self.train_config {
            if !p.is_file() {
                return Err(ServiceError::Invalid(format!(
                    "train_config {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write_timeout(&self) -> Duration {
        Duration::from_millis(self.write_timeout_ms)
    }

    pub fn default_train_config(&self) -> Result<TrainConfig, ServiceError> {
        match &self.train_config {
            None => Ok(TrainConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Invalid(format!("{}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| ServiceError::Invalid(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Reviewer id for a token, or `None` when the token is not accepted.
    pub fn reviewer_for(&self, token: &str) -> Option<String> {
        if token.is_empty() {
            return None;
        }
        if self.tokens.is_empty() {
            return Some(token.to_string());
        }
        self.tokens.get(token).cloned()
    }
}
