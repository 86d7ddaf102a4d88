use std::collections::{BTreeSet, HashSet};

use url::Url;

use super::fetch::{Fetcher, FetcherUnavailable};
use crate::corpus::normalize_url;
use crate::gateway::{rank_urls_heuristically, CompletionRequest, Gateway, Purpose};

pub const CRAWL_DEPTH: usize = 2;
pub const MAX_CANDIDATE_URLS: usize = 200;
pub const MAX_SELECTED_PAGES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("root page {0} could not be fetched")]
    RootFailed(String),
    #[error(transparent)]
    Unavailable(#[from] FetcherUnavailable),
}

fn host_of(url: &str) -> Option<String> {
    Url::parse(url).ok()?.host_str().map(str::to_ascii_lowercase)
}

/// Same-domain URLs reachable from `root` within [`CRAWL_DEPTH`] link hops,
/// root first, then breadth-first with each level sorted lexicographically.
/// Pages at the last level are listed but not fetched.
pub fn enumerate_candidate_urls(root: &str, fetcher: &dyn Fetcher) -> Result<Vec<String>, FetchError> {
    let root_page = fetcher.fetch(root)?;
    if !root_page.ok {
        return Err(FetchError::RootFailed(root.to_string()));
    }
    let host = host_of(root);
    let mut seen: HashSet<String> = HashSet::from([normalize_url(root)]);
    let mut out = vec![root.to_string()];
    let mut frontier = vec![root_page];

    for depth in 1..=CRAWL_DEPTH {
        let mut level = BTreeSet::new();
        for page in &frontier {
            for link in fetcher.links(page) {
                if host_of(&link) == host && seen.insert(normalize_url(&link)) {
                    level.insert(link);
                }
            }
        }
        let room = MAX_CANDIDATE_URLS - out.len();
        let level: Vec<String> = level.into_iter().take(room).collect();
        out.extend(level.iter().cloned());
        if out.len() >= MAX_CANDIDATE_URLS || depth == CRAWL_DEPTH {
            break;
        }
        frontier = Vec::with_capacity(level.len());
        for url in &level {
            let page = fetcher.fetch(url)?;
            if page.ok {
                frontier.push(page);
            }
        }
    }
    Ok(out)
}

const RANK_PROMPT: &str = "\
The URLs below were found on a foundation website. Rank the ten URLs most likely to describe \
a grant or funding opportunity, most likely first. Reply with one URL per line, copied exactly \
from the list, and nothing else.\n\nURLs:";

pub fn ranking_request(urls: &[String]) -> CompletionRequest {
    let mut prompt = RANK_PROMPT.to_string();
    for u in urls {
        prompt.push('\n');
        prompt.push_str(u);
    }
    CompletionRequest::new(Purpose::RankUrls, prompt).with_max_reply_tokens(1024)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageSelection {
    pub urls: Vec<String>,
    /// The model reply was unusable and the keyword heuristic decided.
    pub used_fallback: bool,
}

/// Up to ten of `urls`, in the order the model ranked them.
pub fn select_grant_pages(urls: &[String], gateway: &Gateway) -> Vec<String> {
    select_grant_pages_traced(urls, gateway).urls
}

pub fn select_grant_pages_traced(urls: &[String], gateway: &Gateway) -> PageSelection {
    if urls.is_empty() {
        return PageSelection { urls: Vec::new(), used_fallback: false };
    }
    let ranked = gateway.complete(&ranking_request(urls)).ok().and_then(|reply| {
        let list = reply.list()?;
        let mut picked: Vec<String> = Vec::new();
        for candidate in list {
            let wanted = normalize_url(candidate);
            if let Some(original) = urls.iter().find(|u| *u == candidate || normalize_url(u) == wanted) {
                if !picked.contains(original) {
                    picked.push(original.clone());
                }
            }
        }
        (!picked.is_empty()).then_some(picked)
    });
    let (mut urls, used_fallback) = match ranked {
        Some(picked) => (picked, false),
        None => (rank_urls_heuristically(urls), true),
    };
    urls.truncate(MAX_SELECTED_PAGES);
    PageSelection { urls, used_fallback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use crate::ingest::fetch::PageFetch;
    use chrono::Utc;
    use std::collections::BTreeMap;

    struct Graph(BTreeMap<String, Vec<String>>);

    impl Fetcher for Graph {
        fn fetch(&self, url: &str) -> Result<PageFetch, FetcherUnavailable> {
            Ok(if self.0.contains_key(url) { PageFetch::success(url, "x", Utc::now()) } else { PageFetch::failure(url, Utc::now()) })
        }
        fn links(&self, page: &PageFetch) -> Vec<String> {
            self.0.get(&page.url).cloned().unwrap_or_default()
        }
    }

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn root_without_links() {
        let g = Graph(BTreeMap::from([("https://f.org/".to_string(), vec![])]));
        assert_eq!(enumerate_candidate_urls("https://f.org/", &g).unwrap(), ["https://f.org/"]);
    }

    #[test]
    fn root_failure() {
        let g = Graph(BTreeMap::new());
        assert_eq!(enumerate_candidate_urls("https://f.org/", &g), Err(FetchError::RootFailed("https://f.org/".into())));
    }

    #[test]
    fn breadth_first_same_domain_depth_two() {
        let g = Graph(BTreeMap::from([
            ("https://f.org/".to_string(), strings(&["https://f.org/b", "https://f.org/a", "https://other.org/x", "https://f.org/#top"])),
            ("https://f.org/a".to_string(), strings(&["https://f.org/a/deep", "https://f.org/"])),
            ("https://f.org/b".to_string(), strings(&["https://f.org/a/deeper", "https://f.org/a/deep"])),
            ("https://f.org/a/deep".to_string(), strings(&["https://f.org/a/deep/three"])),
        ]));
        assert_eq!(
            enumerate_candidate_urls("https://f.org/", &g).unwrap(),
            ["https://f.org/", "https://f.org/a", "https://f.org/b", "https://f.org/a/deep", "https://f.org/a/deeper"]
        );
    }

    #[test]
    fn candidate_cap() {
        let links: Vec<String> = (0..500).map(|i| format!("https://f.org/p{i:03}")).collect();
        let g = Graph(BTreeMap::from([("https://f.org/".to_string(), links)]));
        assert_eq!(enumerate_candidate_urls("https://f.org/", &g).unwrap().len(), MAX_CANDIDATE_URLS);
    }

    #[test]
    fn model_ranking_is_followed_and_truncated() {
        let four = strings(&["https://f.org/a", "https://f.org/b", "https://f.org/c", "https://f.org/d"]);
        let gw = Gateway::new(ScriptedBackend::default().with_reply(
            &ranking_request(&four),
            "https://f.org/c\nhttps://f.org/a\nhttps://f.org/d\nhttps://f.org/b",
        ));
        assert_eq!(select_grant_pages(&four, &gw), strings(&["https://f.org/c", "https://f.org/a", "https://f.org/d", "https://f.org/b"]));

        let many: Vec<String> = (0..25).map(|i| format!("https://f.org/p{i:02}")).collect();
        let reply: Vec<String> = many.iter().rev().cloned().collect();
        let gw = Gateway::new(ScriptedBackend::default().with_reply(&ranking_request(&many), reply.join("\n")));
        let out = select_grant_pages_traced(&many, &gw);
        assert!(!out.used_fallback);
        assert_eq!(out.urls, reply[..10]);
    }

    #[test]
    fn garbage_reply_falls_back_to_heuristic() {
        let urls = strings(&["https://f.org/about", "https://f.org/grants/open", "https://f.org/contact"]);
        let gw = Gateway::new(ScriptedBackend::default().with_reply(&ranking_request(&urls), "I cannot help with that."));
        let out = select_grant_pages_traced(&urls, &gw);
        assert!(out.used_fallback);
        assert_eq!(out.urls[0], "https://f.org/grants/open");

        let invented = Gateway::new(ScriptedBackend::default().with_reply(&ranking_request(&urls), "https://elsewhere.org/grants"));
        assert_eq!(select_grant_pages(&urls, &invented)[0], "https://f.org/grants/open");
    }
}
