//! TOML run configuration: backends, OCR settings, type-table overrides and defaults.
//!
//! ```toml
//! cache_dir = "cache"
//! aggregation = "micro"
//!
//! [[backends]]
//! name = "gpt-4o"
//! adapter = "chat-completions"
//! endpoint_url = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//! max_concurrent = 4
//! requests_per_minute = 60
//!
//! [ocr]
//! tesseract_command = "tesseract"
//!
//! [normalization]
//! subprocess = "activity"
//! ```
//!
//! Secrets never live here; backends name the environment variable holding their key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::AggregationMode;
use crate::ocr::OcrConfig;
use crate::pipeline::{Adapter, BackendConfig};
use crate::schema::TypeNormalizationTable;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown backend '{0}'")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Response cache root; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub aggregation: AggregationMode,
    pub backends: Vec<BackendConfig>,
    pub ocr: OcrConfig,
    /// Extra `type = family` entries for relaxed matching.
    pub normalization: BTreeMap<String, String>,
    /// Directory of canned replies for the built-in `mock` backend.
    pub mock_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            cache_dir: None,
            aggregation: AggregationMode::Micro,
            backends: Vec::new(),
            ocr: OcrConfig::default(),
            normalization: BTreeMap::new(),
            mock_dir: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.backends {
            b.validate().map_err(ConfigError::Invalid)?;
            if !seen.insert(b.name.as_str()) {
                return Err(ConfigError::Invalid(format!("backend '{}' is defined twice", b.name)));
            }
        }
        if !(0.0..=1.0).contains(&self.ocr.bbox_margin) {
            return Err(ConfigError::Invalid("ocr.bbox_margin must lie in [0, 1]".into()));
        }
        self.type_table()?;
        Ok(())
    }

    pub fn type_table(&self) -> Result<TypeNormalizationTable, ConfigError> {
        TypeNormalizationTable::default()
            .with_overrides(self.normalization.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(ConfigError::Invalid)
    }

    /// Looks a backend up by name. `mock` always resolves: to a configured backend of that
    /// name if present, otherwise to a replay backend over `mock_dir`.
    pub fn backend(&self, name: &str) -> Result<BackendConfig, ConfigError> {
        if let Some(b) = self.backends.iter().find(|b| b.name == name) {
            return Ok(b.clone());
        }
        if name == "mock" {
            return Ok(BackendConfig {
                name: "mock".into(),
                adapter: Adapter::Mock,
                mock_dir: self.mock_dir.clone(),
                ..BackendConfig::default()
            });
        }
        Err(ConfigError::UnknownBackend(name.to_string()))
    }
}
