use std::path::Path;

use serde::{Deserialize, Serialize};

use recall_core::config::{load_document, ConfigError};
use recall_core::Config;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    /// Origins allowed to call the API from a browser. Empty disables CORS.
    pub cors_origins: Vec<String>,
    /// When set, every request except `/healthz` needs `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
}

/// The core settings plus an `[api]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    #[serde(flatten)]
    pub core: Config,
    pub api: ApiConfig,
}

impl ServerConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = load_document(path)?;
        cfg.core.validate()?;
        Ok(cfg)
    }
}
