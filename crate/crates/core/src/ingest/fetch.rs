use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use percent_encoding::{percent_decode_str, utf8_percent_encode, NON_ALPHANUMERIC};
use serde::Serialize;

use crate::clock::{Clock, SystemClock};
use crate::corpus::normalize_url;
use crate::html;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PageFetch {
    pub url: String,
    /// Empty unless `ok`.
    pub body: String,
    pub retrieved_at: DateTime<Utc>,
    pub ok: bool,
}

impl PageFetch {
    pub fn success(url: impl Into<String>, body: impl Into<String>, retrieved_at: DateTime<Utc>) -> Self {
        Self { url: url.into(), body: body.into(), retrieved_at, ok: true }
    }

    pub fn failure(url: impl Into<String>, retrieved_at: DateTime<Utc>) -> Self {
        Self { url: url.into(), body: String::new(), retrieved_at, ok: false }
    }
}

/// The fetcher as a whole cannot serve requests. Single-page failures are
/// reported through [`PageFetch::ok`] instead.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("fetcher unavailable: {0}")]
pub struct FetcherUnavailable(pub String);

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<PageFetch, FetcherUnavailable>;

    /// Outgoing links of a fetched page, absolute, in document order.
    fn links(&self, page: &PageFetch) -> Vec<String> {
        html::links(&page.body, &page.url)
    }
}

/// File name used for a URL in a fixture directory.
pub fn fixture_file_name(url: &str) -> String {
    utf8_percent_encode(url, NON_ALPHANUMERIC).to_string()
}

pub const LINKS_FILE: &str = "links.json";

/// Serves pages from a fixture tree: one subdirectory per source, one file
/// per URL (percent-encoded file name) and an optional `links.json`
/// adjacency map (`url -> [url]`) that overrides HTML link discovery.
pub struct FixtureFetcher {
    root: PathBuf,
    pages: BTreeMap<String, PathBuf>,
    adjacency: BTreeMap<String, Vec<String>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for FixtureFetcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FixtureFetcher").field("root", &self.root).field("pages", &self.pages.len()).finish()
    }
}

impl FixtureFetcher {
    pub fn open(root: &Path) -> std::io::Result<Self> {
        Self::open_with_clock(root, Arc::new(SystemClock))
    }

    pub fn open_with_clock(root: &Path, clock: Arc<dyn Clock>) -> std::io::Result<Self> {
        let mut pages = BTreeMap::new();
        let mut adjacency = BTreeMap::new();
        let mut dirs = vec![root.to_path_buf()];
        while let Some(dir) = dirs.pop() {
            for entry in std::fs::read_dir(&dir)? {
                let path = entry?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                if name.starts_with('.') {
                    continue;
                }
                if path.is_dir() {
                    dirs.push(path);
                } else if name == LINKS_FILE {
                    let text = std::fs::read_to_string(&path)?;
                    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&text).map_err(|e| {
                        std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
                    })?;
                    adjacency.extend(map);
                } else {
                    let url = percent_decode_str(&name).decode_utf8_lossy().into_owned();
                    pages.insert(url, path);
                }
            }
        }
        Ok(Self { root: root.to_path_buf(), pages, adjacency, clock })
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.pages.keys().map(String::as_str)
    }

    fn lookup<'a, T>(map: &'a BTreeMap<String, T>, url: &str) -> Option<&'a T> {
        map.get(url).or_else(|| {
            let wanted = normalize_url(url);
            map.iter().find(|(k, _)| normalize_url(k) == wanted).map(|(_, v)| v)
        })
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &str) -> Result<PageFetch, FetcherUnavailable> {
        if !self.root.is_dir() {
            return Err(FetcherUnavailable(format!("fixture directory {} is gone", self.root.display())));
        }
        let now = self.clock.now();
        Ok(match Self::lookup(&self.pages, url).map(std::fs::read_to_string) {
            Some(Ok(body)) => PageFetch::success(url, body, now),
            _ => PageFetch::failure(url, now),
        })
    }

    fn links(&self, page: &PageFetch) -> Vec<String> {
        match Self::lookup(&self.adjacency, &page.url) {
            Some(links) => links.clone(),
            None => html::links(&page.body, &page.url),
        }
    }
}

/// Plain HTTP GET with a per-request timeout. No JavaScript, no robots
/// handling.
pub struct HttpFetcher {
    agent: ureq::Agent,
    clock: Arc<dyn Clock>,
}

const MAX_BODY_BYTES: u64 = 8 * 1024 * 1024;

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent("grantforge-ingest/0.1")
            .build()
            .into();
        Self { agent, clock: Arc::new(SystemClock) }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<PageFetch, FetcherUnavailable> {
        let now = self.clock.now();
        let body = self
            .agent
            .get(url)
            .call()
            .and_then(|mut r| r.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_string());
        Ok(match body {
            Ok(body) => PageFetch::success(url, body, now),
            Err(e) => {
                tracing::debug!(%url, error = %e, "fetch failed");
                PageFetch::failure(url, now)
            }
        })
    }
}
