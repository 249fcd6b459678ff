//! Run configuration file.
//!
//! ```toml
//! seed = 7
//! concurrency = 4
//!
//! [templates]
//! preamble = true
//!
//! [endpoints.teacher]
//! base_url = "https://api.example.com/v1"
//! model_name = "gpt-4"
//! api_key_env = "OPENAI_API_KEY"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ctxqa_core::gateway::{Endpoint, EndpointConfig, Gateway};
use ctxqa_core::prompt::RenderOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOverrides {
    pub preamble: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    #[serde(default)]
    pub templates: TemplateOverrides,
}

/// A parsed config plus the hash of its source bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: Option<PathBuf>,
    pub config: RunConfig,
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(LoadedConfig { path: None, config: RunConfig::default(), hash: sha256_hex(b"") });
        };
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed config {}: {e}", path.display())))?;
        for (name, endpoint) in &config.endpoints {
            endpoint
                .validate()
                .map_err(|e| CliError::Data(format!("endpoints.{name}: {e}")))?;
        }
        Ok(LoadedConfig { path: Some(path.to_path_buf()), config, hash: sha256_hex(text.as_bytes()) })
    }

    pub fn endpoint_config(&self, name: &str) -> Result<&EndpointConfig, CliError> {
        self.config.endpoints.get(name).ok_or_else(|| {
            let origin = self
                .path
                .as_ref()
                .map_or_else(|| "no --config given".to_string(), |p| p.display().to_string());
            CliError::Data(format!("missing config key endpoints.{name} ({origin})"))
        })
    }

    pub fn endpoint(&self, name: &str) -> Result<Endpoint, CliError> {
        let config = self.endpoint_config(name)?.clone();
        Ok(std::sync::Arc::new(Gateway::http(config)?))
    }

    /// Flag wins over file, file wins over the default.
    pub fn render(&self, no_preamble: bool) -> RenderOptions {
        let preamble = !no_preamble && self.config.templates.preamble.unwrap_or(true);
        RenderOptions { preamble }
    }

    pub fn concurrency(&self, flag: Option<usize>) -> usize {
        flag.or(self.config.concurrency).unwrap_or(4).max(1)
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.config.seed)
            .ok_or_else(|| CliError::Data("no seed: pass --seed or set `seed` in the config".into()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
