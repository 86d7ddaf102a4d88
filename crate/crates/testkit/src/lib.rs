//! Shared test support: an independent brute-force BM25 scorer, fixture
//! environments and an SSE frame reader. Nothing here depends on the
//! crates under test.

use std::path::{Path, PathBuf};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const TITLE_WEIGHT: f64 = 3.0;
pub const DESCRIPTION_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDoc {
    pub id: String,
    pub title: String,
    pub description: String,
}

/// Lowercased maximal runs of alphanumeric characters, at least two long.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<char> = Vec::new();
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if cur.len() >= 2 {
                out.push(cur.iter().collect::<String>().to_lowercase());
            }
            cur.clear();
        }
    }
    out
}

fn field_score(term: &str, field: &[Vec<String>], doc: usize) -> f64 {
    let n = field.len() as f64;
    let df = field.iter().filter(|toks| toks.iter().any(|t| t == term)).count() as f64;
    let total: usize = field.iter().map(Vec::len).sum();
    let avgdl = total as f64 / n;
    let tf = field[doc].iter().filter(|t| *t == term).count() as f64;
    if tf == 0.0 {
        return 0.0;
    }
    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
    let dl = field[doc].len() as f64;
    let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
    idf * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm))
}

/// Every document scored against every distinct query term, zero scores
/// dropped, sorted by (score desc, id asc).
pub fn bm25_rank(docs: &[OracleDoc], query: &str) -> Vec<(String, f64)> {
    let titles: Vec<Vec<String>> = docs.iter().map(|d| oracle_tokens(&d.title)).collect();
    let descs: Vec<Vec<String>> = docs.iter().map(|d| oracle_tokens(&d.description)).collect();
    let mut terms: Vec<String> = Vec::new();
    for t in oracle_tokens(query) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    let mut scored: Vec<(String, f64)> = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let mut s = 0.0;
        for t in &terms {
            s += TITLE_WEIGHT * field_score(t, &titles, i) + DESCRIPTION_WEIGHT * field_score(t, &descs, i);
        }
        if s > 0.0 {
            scored.push((d.id.clone(), s));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
    scored
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().expect("fixtures directory")
}

pub fn ground_truth() -> serde_json::Value {
    let text = std::fs::read_to_string(fixtures_dir().join("ground_truth.json")).expect("ground truth");
    serde_json::from_str(&text).expect("ground truth json")
}

/// A private copy of the fixture config whose snapshot lives in a temp dir.
pub struct FixtureEnv {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
}

impl FixtureEnv {
    pub fn new() -> Self {
        Self::with(|_| {})
    }

    /// Applies `edit` to the config JSON before writing it.
    pub fn with(edit: impl FnOnce(&mut serde_json::Value)) -> Self {
        let fixtures = fixtures_dir();
        let text = std::fs::read_to_string(fixtures.join("config.json")).expect("fixture config");
        let mut cfg: serde_json::Value = serde_json::from_str(&text).expect("config json");
        let dir = tempfile::tempdir().expect("temp dir");
        let abs = |rel: &str| fixtures.join(rel).to_string_lossy().into_owned();
        cfg["snapshot"] = dir.path().join("index").to_string_lossy().into_owned().into();
        cfg["sources"] = abs("sources.json").into();
        cfg["fetcher"]["root"] = abs("pages").into();
        cfg["gateway"]["script"] = abs("gateway_script.json").into();
        cfg["web_search"]["path"] = abs("web_search.json").into();
        edit(&mut cfg);
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, serde_json::to_string_pretty(&cfg).expect("json")).expect("write config");
        Self { dir, config_path }
    }

    pub fn snapshot_prefix(&self) -> PathBuf {
        self.dir.path().join("index")
    }

    pub fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.dir.path().join(name)).unwrap_or_default()
    }
}

impl Default for FixtureEnv {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SseFrame {
    pub event: String,
    pub data: String,
}

/// Incremental `text/event-stream` parser: feed bytes, collect complete frames.
#[derive(Debug, Default)]
pub struct SseReader {
    buf: String,
}

impl SseReader {
    pub fn push(&mut self, chunk: &[u8]) -> Vec<SseFrame> {
        self.buf.push_str(&String::from_utf8_lossy(chunk));
        let mut frames = Vec::new();
        while let Some(end) = self.buf.find("\n\n") {
            let block: String = self.buf.drain(..end + 2).collect();
            let mut event = String::from("message");
            let mut data: Vec<&str> = Vec::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = v.trim_start().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push(v.strip_prefix(' ').unwrap_or(v));
                }
            }
            if !data.is_empty() || event != "message" {
                frames.push(SseFrame { event, data: data.join("\n") });
            }
        }
        frames
    }
}
