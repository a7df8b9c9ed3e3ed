//! Application configuration with strict precedence: command-line
//! flags override environment variables, which override the config
//! file, which overrides built-in defaults.

use std::path::{Path, PathBuf};

use pagepyramid_core::fusion::FusionConfig;
use serde::{Deserialize, Serialize};

use crate::clients::{
    ClientMode, LiveConfig, ServiceClients, DEFAULT_BACKOFF_MS, DEFAULT_MAX_RETRIES,
};

/// Environment variable names recognized by [`AppConfig::apply_env`].
pub const ENV_KEYS: [&str; 7] = [
    "ENDPOINT_URL",
    "API_KEY",
    "MODEL_EXTRACT",
    "MODEL_EMBED",
    "MODEL_GENERATE",
    "CLIENT_MODE",
    "CACHE_DIR",
];

pub const DEFAULT_DIM: usize = 1536;
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("InvalidConfig: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub client_mode: ClientMode,
    pub endpoint_url: Option<String>,
    pub api_key: Option<String>,
    pub model_extract: String,
    pub model_embed: String,
    pub model_generate: String,
    pub dim: usize,
    pub cache_dir: Option<PathBuf>,
    pub bind_addr: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub fusion: FusionConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            client_mode: ClientMode::Mock,
            endpoint_url: None,
            api_key: None,
            model_extract: "vision-default".into(),
            model_embed: "embed-default".into(),
            model_generate: "chat-default".into(),
            dim: DEFAULT_DIM,
            cache_dir: None,
            bind_addr: DEFAULT_BIND_ADDR.into(),
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_ms: DEFAULT_BACKOFF_MS,
            fusion: FusionConfig::default(),
        }
    }
}

impl AppConfig {
    /// Parses a JSON config file. Unknown keys are rejected so typos
    /// fail loudly instead of silently using defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
    }

    /// Starts from defaults, then overlays the file if given.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        match file {
            Some(path) => Self::from_file(path),
            None => Ok(Self::default()),
        }
    }

    /// Overlays recognized environment variables via the supplied
    /// lookup, so tests can inject instead of mutating the process.
    pub fn apply_env<F>(&mut self, lookup: F) -> Result<(), ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(v) = lookup("ENDPOINT_URL") {
            self.endpoint_url = Some(v);
        }
        if let Some(v) = lookup("API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = lookup("MODEL_EXTRACT") {
            self.model_extract = v;
        }
        if let Some(v) = lookup("MODEL_EMBED") {
            self.model_embed = v;
        }
        if let Some(v) = lookup("MODEL_GENERATE") {
            self.model_generate = v;
        }
        if let Some(v) = lookup("CLIENT_MODE") {
            self.client_mode = v
                .parse()
                .map_err(|e: String| ConfigError::Invalid(format!("CLIENT_MODE: {e}")))?;
        }
        if let Some(v) = lookup("CACHE_DIR") {
            self.cache_dir = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn apply_process_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env(|key| std::env::var(key).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 {
            return Err(ConfigError::Invalid("dim must be positive".into()));
        }
        if self.client_mode == ClientMode::Live && self.endpoint_url.is_none() {
            return Err(ConfigError::Invalid(
                "live mode needs an endpoint URL (flag, ENDPOINT_URL, or config file)".into(),
            ));
        }
        self.fusion
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Builds service clients matching this configuration.
    pub fn build_clients(&self) -> Result<ServiceClients, ConfigError> {
        self.validate()?;
        let clients = match self.client_mode {
            ClientMode::Mock => ServiceClients::mock(self.dim),
            ClientMode::Live => {
                let mut live =
                    LiveConfig::new(self.endpoint_url.clone().expect("validated endpoint"));
                live.api_key = self.api_key.clone().unwrap_or_default();
                live.model_extract = self.model_extract.clone();
                live.model_embed = self.model_embed.clone();
                live.model_generate = self.model_generate.clone();
                live.max_retries = self.max_retries;
                live.backoff_ms = self.backoff_ms;
                ServiceClients::live(self.dim, live)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
        };
        match &self.cache_dir {
            Some(dir) => clients.with_cache_dir(dir).map_err(ConfigError::Io),
            None => Ok(clients),
        }
    }
}
