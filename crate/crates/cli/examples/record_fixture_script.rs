//! Regenerates `fixtures/gateway_script.json` by running the fixture ingest
//! and the proposal keyword request against the rule-based backend, then
//! recording every request/reply pair.
//!
//! `cargo run -p grantforge-cli --example record_fixture_script`

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::Mutex;

use grantforge_core::config::AppConfig;
use grantforge_core::gateway::{
    extract_keywords, rank_urls_heuristically, script_key, Backend, CompletionRequest, Gateway, GatewayError,
    HeuristicBackend, Purpose, GRANT_URL_HINTS,
};
use grantforge_core::ingest::run_due_sources;
use grantforge_core::UnifiedIndex;

struct Recorder {
    keywords_for: (String, String),
    log: Mutex<BTreeMap<String, String>>,
}

impl Backend for Recorder {
    fn id(&self) -> &str {
        "recorder"
    }

    fn complete_text(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let reply = match req.purpose {
            Purpose::ExtractKeywords if req.context_documents.first() == Some(&self.keywords_for.0) => self.keywords_for.1.clone(),
            // a model that lists only the URLs that look like calls for proposals
            Purpose::RankUrls => {
                let urls: Vec<String> = req.prompt.lines().filter(|l| l.starts_with("http")).map(String::from).collect();
                let ranked = rank_urls_heuristically(&urls);
                let hinted = ranked.into_iter().filter(|u| {
                    let path = url_path(u);
                    GRANT_URL_HINTS.iter().any(|h| path.contains(h)) && !path.ends_with('/')
                });
                hinted.collect::<Vec<_>>().join("\n")
            }
            Purpose::Summarize | Purpose::Plan => return Err(GatewayError::Unsupported { backend: "recorder".into(), purpose: req.purpose }),
            _ => HeuristicBackend.complete_text(req)?,
        };
        self.log.lock().insert(script_key(req), reply.clone());
        Ok(reply)
    }
}

fn url_path(u: &str) -> String {
    u.split_once("://").map_or(u, |(_, rest)| rest).split_once('/').map_or("", |(_, p)| p).to_lowercase()
}

fn main() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let cfg = AppConfig::load(Some(&fixtures.join("config.json"))).expect("fixture config");
    let proposal = std::fs::read_to_string(fixtures.join("proposal.txt")).expect("proposal");
    let keywords = std::fs::read_to_string(fixtures.join("proposal_keywords.txt")).expect("keywords");
    let recorder = Arc::new(Recorder { keywords_for: (proposal.clone(), keywords), log: Mutex::default() });
    let gateway = Gateway::from_arc(recorder.clone());

    let clock = cfg.clock();
    let fetcher = cfg.build_fetcher(clock.clone()).expect("fixture fetcher");
    let mut sources = cfg.load_sources().expect("sources");
    for s in &mut sources {
        s.last_refreshed = None;
    }
    let index = UnifiedIndex::new();
    for run in run_due_sources(&mut sources, fetcher.as_ref(), &gateway, &index, clock.now(), true) {
        eprintln!("{}", run.line());
    }
    let kw = extract_keywords(&proposal, &gateway).expect("keywords");
    eprintln!("proposal keywords: {kw:?}");

    let log = recorder.log.lock();
    let out = fixtures.join("gateway_script.json");
    std::fs::write(&out, serde_json::to_string_pretty(&*log).expect("json") + "\n").expect("write script");
    eprintln!("{} replies written to {}", log.len(), out.display());
}
