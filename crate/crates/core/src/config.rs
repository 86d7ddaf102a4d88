//! Application configuration (one JSON file) and the runtime it builds.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, FixedClock, SystemClock};
use crate::corpus::SourceDescriptor;
use crate::gateway::{Gateway, HeuristicBackend, HttpBackend, HttpBackendConfig, ScriptedBackend};
use crate::ingest::{Fetcher, FixtureFetcher, HttpFetcher};
use crate::web::{DisabledWebSearch, FixtureWebSearch, HttpWebSearch, HttpWebSearchConfig, WebSearch};

pub const CONFIG_ENV: &str = "GRANTFORGE_CONFIG";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FetcherConfig {
    Fixture { root: PathBuf },
    Http {
        #[serde(default = "default_fetch_timeout")]
        timeout_secs: u64,
    },
}

fn default_fetch_timeout() -> u64 {
    20
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GatewayConfig {
    Scripted { script: PathBuf },
    Heuristic,
    Http(HttpBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WebSearchConfig {
    Fixture { path: PathBuf },
    Http(HttpWebSearchConfig),
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_tick")]
    pub tick_secs: u64,
}

fn default_tick() -> u64 {
    3600
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { enabled: false, tick_secs: default_tick() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Snapshot prefix; files are `<prefix>.records.jsonl`, `<prefix>.meta.json`
    /// and `<prefix>.sources.json`.
    pub snapshot: PathBuf,
    pub sources: PathBuf,
    pub fetcher: FetcherConfig,
    pub gateway: GatewayConfig,
    #[serde(default = "disabled")]
    pub web_search: WebSearchConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    #[serde(default = "default_limit")]
    pub result_limit: usize,
    /// Freezes "today" for reproducible runs.
    #[serde(default)]
    pub fixed_date: Option<NaiveDate>,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn disabled() -> WebSearchConfig {
    WebSearchConfig::Disabled
}

fn default_ttl() -> u64 {
    7200
}

fn default_limit() -> usize {
    crate::agent::DEFAULT_RESULT_LIMIT
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("no config file given and {CONFIG_ENV} is not set")]
    Missing,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io { path: path.to_path_buf(), source }
}

impl AppConfig {
    /// Reads `path`, or the file named by `GRANTFORGE_CONFIG`. Relative paths
    /// inside resolve against the config file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from).ok_or(ConfigError::Missing)?,
        };
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        let mut cfg: AppConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.clone(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.snapshot);
        fix(&mut self.sources);
        if let FetcherConfig::Fixture { root } = &mut self.fetcher {
            fix(root);
        }
        if let GatewayConfig::Scripted { script } = &mut self.gateway {
            fix(script);
        }
        if let WebSearchConfig::Fixture { path } = &mut self.web_search {
            fix(path);
        }
    }

    pub fn sources_state_path(&self) -> PathBuf {
        let mut p = self.snapshot.clone().into_os_string();
        p.push(".sources.json");
        PathBuf::from(p)
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        match self.fixed_date {
            Some(d) => Arc::new(FixedClock::on(d)),
            None => Arc::new(SystemClock),
        }
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        Ok(match &self.gateway {
            GatewayConfig::Scripted { script } => Gateway::new(ScriptedBackend::load(script).map_err(io(script))?),
            GatewayConfig::Heuristic => Gateway::new(HeuristicBackend),
            GatewayConfig::Http(c) => Gateway::new(HttpBackend::new(c.clone())),
        })
    }

    pub fn build_fetcher(&self, clock: Arc<dyn Clock>) -> Result<Arc<dyn Fetcher>, ConfigError> {
        Ok(match &self.fetcher {
            FetcherConfig::Fixture { root } => Arc::new(FixtureFetcher::open_with_clock(root, clock).map_err(io(root))?),
            FetcherConfig::Http { timeout_secs } => Arc::new(HttpFetcher::new(Duration::from_secs((*timeout_secs).max(1)))),
        })
    }

    pub fn build_web_search(&self) -> Result<Arc<dyn WebSearch>, ConfigError> {
        Ok(match &self.web_search {
            WebSearchConfig::Fixture { path } => Arc::new(FixtureWebSearch::load(path).map_err(io(path))?),
            WebSearchConfig::Http(c) => Arc::new(HttpWebSearch::new(c.clone())),
            WebSearchConfig::Disabled => Arc::new(DisabledWebSearch),
        })
    }

    /// Source list with refresh state merged in from `<snapshot>.sources.json`
    /// when that file exists.
    pub fn load_sources(&self) -> Result<Vec<SourceDescriptor>, ConfigError> {
        let mut sources: Vec<SourceDescriptor> = read_json(&self.sources)?;
        for s in &sources {
            s.check().map_err(|e| ConfigError::Invalid(format!("source {}: {e}", s.source_id)))?;
        }
        let state_path = self.sources_state_path();
        if state_path.exists() {
            let saved: Vec<SourceDescriptor> = read_json(&state_path)?;
            for s in &mut sources {
                if let Some(prev) = saved.iter().find(|p| p.source_id == s.source_id) {
                    s.last_refreshed = prev.last_refreshed;
                }
            }
        }
        Ok(sources)
    }

    pub fn save_sources(&self, sources: &[SourceDescriptor]) -> Result<(), ConfigError> {
        let path = self.sources_state_path();
        let text = serde_json::to_string_pretty(sources).expect("sources serialize");
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text + "\n").map_err(io(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io(&path))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
}
