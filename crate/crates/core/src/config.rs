//! Service configuration, read from TOML (or JSON when the file ends in `.json`).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{CompletionBackend, GenerationError, HttpBackend, MockBackend, Provider, ProviderConfig};
use crate::prompt::{PromptComposer, PromptError, TemplateSet, DEFAULT_HISTORY_TURNS};
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    #[serde(flatten)]
    pub settings: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub history_turns: usize,
    /// Directory of replacement templates; missing files use the bundled ones.
    pub template_dir: Option<PathBuf>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            history_turns: DEFAULT_HISTORY_TURNS,
            template_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub retrieval: RetrievalConfig,
    pub prompt: PromptConfig,
    pub provider: ProviderSection,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] GenerationError),
}

/// Reads a config document into `T`, by extension: `.json` or TOML.
pub fn load_document<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let cfg: Config = load_document(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.retrieval;
        if r.neighbor_k == 0 || r.top_n == 0 || r.starter_max == 0 {
            return Err(ConfigError::Invalid(
                "retrieval.neighbor_k, retrieval.top_n and retrieval.starter_max must be at least 1".into(),
            ));
        }
        if r.starter_max > crate::prompt::MAX_STARTERS {
            return Err(ConfigError::Invalid(format!(
                "retrieval.starter_max must be at most {}",
                crate::prompt::MAX_STARTERS
            )));
        }
        self.provider.settings.validate()?;
        Ok(())
    }

    pub fn build_composer(&self) -> Result<PromptComposer, ConfigError> {
        let templates = match &self.prompt.template_dir {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(PromptComposer::new(templates, self.prompt.history_turns))
    }

    pub fn build_provider(&self) -> Result<Provider, ConfigError> {
        let backend: Arc<dyn CompletionBackend> = match self.provider.kind {
            ProviderKind::Mock => Arc::new(MockBackend),
            ProviderKind::Http => Arc::new(
                HttpBackend::new(&self.provider.settings)
                    .map_err(|e| ConfigError::Invalid(format!("http provider: {e}")))?,
            ),
        };
        Ok(Provider::new(backend, self.provider.settings.clone())?)
    }
}
