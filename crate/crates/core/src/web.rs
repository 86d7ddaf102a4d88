//! The agent's second tool: web search for postings newer than the last
//! index refresh, or for topics the index does not cover.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::card::{clip, Provenance, ResultCard};
use crate::corpus::{parse_date, parse_http_url};
use crate::index::tokenize;

pub const WEB_AGENCY_LABEL: &str = "(web)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebResult {
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    pub url: String,
    #[serde(default)]
    pub published_at: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("web search query is empty")]
    EmptyQuery,
    #[error("web search unavailable: {0}")]
    Unavailable(String),
}

pub trait WebSearch: Send + Sync {
    /// At most `limit` results in provider order.
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebResult>, SearchError>;
}

/// Fixture and cache key for a query: index tokens joined by single spaces.
pub fn normalize_query(query: &str) -> String {
    tokenize(query).join(" ")
}

/// Deterministic lookup table of normalized query -> results.
#[derive(Debug, Clone, Default)]
pub struct FixtureWebSearch {
    table: BTreeMap<String, Vec<WebResult>>,
}

impl FixtureWebSearch {
    pub fn from_map(raw: BTreeMap<String, Vec<WebResult>>) -> Self {
        let mut table: BTreeMap<String, Vec<WebResult>> = BTreeMap::new();
        for (query, results) in raw {
            let results: Vec<WebResult> = results.into_iter().filter(|r| parse_http_url(&r.url).is_some()).collect();
            table.entry(normalize_query(&query)).or_default().extend(results);
        }
        Self { table }
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let raw = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        Ok(Self::from_map(raw))
    }
}

impl WebSearch for FixtureWebSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebResult>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut results = self.table.get(&normalize_query(query)).cloned().unwrap_or_default();
        results.truncate(limit);
        Ok(results)
    }
}

/// Always unavailable; used when no provider is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct DisabledWebSearch;

impl WebSearch for DisabledWebSearch {
    fn search(&self, _query: &str, _limit: usize) -> Result<Vec<WebResult>, SearchError> {
        Err(SearchError::Unavailable("no web search provider configured".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpWebSearchConfig {
    /// Search endpoint of a SearxNG-compatible JSON API (`?q=...&format=json`).
    pub endpoint: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    10
}

#[derive(Deserialize)]
struct ProviderReply {
    #[serde(default)]
    results: Vec<ProviderResult>,
}

#[derive(Deserialize)]
struct ProviderResult {
    #[serde(default)]
    title: String,
    #[serde(default)]
    content: String,
    url: String,
    #[serde(default, rename = "publishedDate")]
    published_date: Option<String>,
}

pub struct HttpWebSearch {
    config: HttpWebSearchConfig,
    agent: ureq::Agent,
}

impl HttpWebSearch {
    pub fn new(config: HttpWebSearchConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self { config, agent }
    }
}

impl WebSearch for HttpWebSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebResult>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut call = self.agent.get(&self.config.endpoint).query("q", query).query("format", "json");
        if let Some(token) = &self.config.auth_token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let reply: ProviderReply = call
            .call()
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| SearchError::Unavailable(e.to_string()))?;
        Ok(reply
            .results
            .into_iter()
            .filter(|r| parse_http_url(&r.url).is_some())
            .map(|r| WebResult {
                title: r.title,
                snippet: r.content,
                url: r.url,
                published_at: r.published_date.as_deref().and_then(parse_date),
            })
            .take(limit)
            .collect())
    }
}

fn deadline_re() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| {
        Regex::new(r"(?i)\b(?:deadline|due|closes|closing date|close date|apply by|applications? due)\b[^0-9]{0,20}(\d{4}-\d{2}-\d{2})\b")
            .expect("valid regex")
    })
}

/// Only an explicit ISO date introduced by a deadline cue in the snippet
/// becomes a deadline; the publication date never does.
pub fn snippet_deadline(snippet: &str) -> Option<NaiveDate> {
    deadline_re()
        .captures_iter(snippet)
        .find_map(|c| NaiveDate::parse_from_str(&c[1], "%Y-%m-%d").ok())
}

pub fn to_result_card(w: &WebResult) -> ResultCard {
    ResultCard {
        id: None,
        title: w.title.trim().to_string(),
        agency: WEB_AGENCY_LABEL.to_string(),
        deadline: snippet_deadline(&w.snippet),
        url: w.url.trim().to_string(),
        provenance: Provenance::Web,
        score: 0.0,
        snippet: clip(w.snippet.trim(), 240),
    }
}
