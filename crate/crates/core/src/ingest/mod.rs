//! Aggregation pipeline: fetch pages for a source, have the gateway extract
//! canonical fields, validate, and upsert into the unified index.
//!
//! Portal and fixture sources list their opportunity pages directly (or
//! link them from the root page). Foundation sources are crawled from the
//! domain root and the gateway picks the ten URLs most likely to describe a
//! grant. Per-page failures only add warnings; a run aborts only when the
//! fetcher itself is unavailable.

mod crawl;
mod extract;
mod fetch;
mod scheduler;

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::corpus::{normalize_url, validate, SourceConfigError, SourceDescriptor, SourceKind};
use crate::gateway::Gateway;
use crate::index::{UnifiedIndex, UpsertOutcome};

pub use crawl::{
    enumerate_candidate_urls, ranking_request, select_grant_pages, select_grant_pages_traced, FetchError, PageSelection,
    CRAWL_DEPTH, MAX_CANDIDATE_URLS, MAX_SELECTED_PAGES,
};
pub use extract::{extract_record, extraction_request, ExtractError, SCHEMA_FIELDS};
pub use fetch::{fixture_file_name, Fetcher, FetcherUnavailable, FixtureFetcher, HttpFetcher, PageFetch, LINKS_FILE};
pub use scheduler::{run_due_sources, Scheduler, SourceRun, SourceRunOutcome, DEFAULT_TICK};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub source_id: String,
    pub pages_seen: usize,
    pub records_extracted: usize,
    pub records_rejected: usize,
    pub records_new: usize,
    pub records_updated: usize,
    pub records_unchanged: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn new(source_id: &str) -> Self {
        Self { source_id: source_id.to_string(), ..Self::default() }
    }

    /// `source=<id> pages:N extracted:N rejected:N new:N updated:N unchanged:N warnings:N`
    pub fn summary_line(&self) -> String {
        format!(
            "source={} pages:{} extracted:{} rejected:{} new:{} updated:{} unchanged:{} warnings:{}",
            self.source_id,
            self.pages_seen,
            self.records_extracted,
            self.records_rejected,
            self.records_new,
            self.records_updated,
            self.records_unchanged,
            self.warnings.len()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("source {source_id}: {error}")]
    Fetcher { source_id: String, error: FetcherUnavailable },
    #[error(transparent)]
    InvalidSource(#[from] SourceConfigError),
}

/// Due when never refreshed or when at least `refresh_interval_days` whole
/// days have passed.
pub fn due_for_refresh(source: &SourceDescriptor, now: DateTime<Utc>) -> bool {
    match source.last_refreshed {
        None => true,
        Some(last) => (now - last).num_days() >= i64::from(source.refresh_interval_days),
    }
}

fn same_domain_links(root: &str, fetcher: &dyn Fetcher, report: &mut IngestReport) -> Result<Vec<String>, FetcherUnavailable> {
    let page = fetcher.fetch(root)?;
    if !page.ok {
        report.warnings.push(format!("root page {root} could not be fetched; source skipped this cycle"));
        return Ok(Vec::new());
    }
    let host = url::Url::parse(root).ok().and_then(|u| u.host_str().map(str::to_ascii_lowercase));
    let root_norm = normalize_url(root);
    let mut out: Vec<String> = Vec::new();
    for link in fetcher.links(&page) {
        let link_host = url::Url::parse(&link).ok().and_then(|u| u.host_str().map(str::to_ascii_lowercase));
        let norm = normalize_url(&link);
        if link_host == host && norm != root_norm && !out.iter().any(|u| normalize_url(u) == norm) {
            out.push(link);
        }
    }
    Ok(out)
}

/// Runs one source end to end. `last_refreshed` is set to `now` unless the
/// source had to be skipped because its root page failed.
pub fn run_source(
    source: &mut SourceDescriptor,
    fetcher: &dyn Fetcher,
    gateway: &Gateway,
    index: &UnifiedIndex,
    now: DateTime<Utc>,
) -> Result<IngestReport, PipelineError> {
    source.check()?;
    let mut report = IngestReport::new(&source.source_id);
    let unavailable = |error| PipelineError::Fetcher { source_id: source.source_id.clone(), error };

    let pages: Vec<String> = match source.kind {
        SourceKind::Foundation => match enumerate_candidate_urls(&source.root, fetcher) {
            Ok(candidates) => {
                let selection = select_grant_pages_traced(&candidates, gateway);
                if selection.used_fallback {
                    report.warnings.push("url ranking reply unusable; keyword heuristic used".to_string());
                }
                selection.urls
            }
            Err(FetchError::RootFailed(url)) => {
                report.warnings.push(format!("root page {url} could not be fetched; source skipped this cycle"));
                return Ok(report);
            }
            Err(FetchError::Unavailable(e)) => return Err(unavailable(e)),
        },
        SourceKind::FederalPortal | SourceKind::Fixture if !source.pages.is_empty() => source.pages.clone(),
        SourceKind::FederalPortal | SourceKind::Fixture => {
            let links = same_domain_links(&source.root, fetcher, &mut report).map_err(unavailable)?;
            if links.is_empty() && !report.warnings.is_empty() {
                return Ok(report);
            }
            links
        }
    };

    for url in &pages {
        let page = fetcher.fetch(url).map_err(unavailable)?;
        report.pages_seen += 1;
        if !page.ok {
            report.warnings.push(format!("{url}: fetch failed"));
            continue;
        }
        let draft = match extract_record(&page, source, gateway) {
            Ok(d) => d,
            Err(e) => {
                report.records_rejected += 1;
                report.warnings.push(format!("{url}: rejected, {e}"));
                continue;
            }
        };
        let opp = match validate(&draft, source, page.retrieved_at) {
            Ok(o) => o,
            Err(e) => {
                report.records_rejected += 1;
                report.warnings.push(format!("{url}: rejected, {e}"));
                continue;
            }
        };
        report.records_extracted += 1;
        report.warnings.extend(opp.warnings.iter().map(|w| format!("{url}: {w}")));
        match index.upsert(opp) {
            UpsertOutcome::Inserted => report.records_new += 1,
            UpsertOutcome::Updated => report.records_updated += 1,
            UpsertOutcome::Unchanged => report.records_unchanged += 1,
        }
    }

    source.last_refreshed = Some(now);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HeuristicBackend, ScriptedBackend};
    use chrono::{Duration, TimeZone};
    use std::collections::BTreeMap;

    struct Pages(BTreeMap<String, String>);

    impl Fetcher for Pages {
        fn fetch(&self, url: &str) -> Result<PageFetch, FetcherUnavailable> {
            let at = Utc.with_ymd_and_hms(2026, 1, 10, 0, 0, 0).unwrap();
            Ok(match self.0.get(url) {
                Some(body) => PageFetch::success(url, body.clone(), at),
                None => PageFetch::failure(url, at),
            })
        }
    }

    struct Offline;

    impl Fetcher for Offline {
        fn fetch(&self, _: &str) -> Result<PageFetch, FetcherUnavailable> {
            Err(FetcherUnavailable("offline".into()))
        }
    }

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 1, 10, 0, 0, 0).unwrap()
    }

    fn portal(n: usize, untitled: Option<usize>) -> (SourceDescriptor, Pages) {
        let mut src = SourceDescriptor::new("nsf", SourceKind::Fixture, "https://www.nsf.gov", "NSF");
        let mut pages = BTreeMap::new();
        for i in 0..n {
            let url = format!("https://www.nsf.gov/funding/p{i}");
            let body = if Some(i) == untitled {
                "<p>Deadline: 2026-05-01</p>".to_string()
            } else {
                format!("<h1>Program {i}</h1><p>Deadline: 2026-05-0{}</p>", i + 1)
            };
            src.pages.push(url.clone());
            pages.insert(url, body);
        }
        (src, Pages(pages))
    }

    #[test]
    fn first_run_then_idempotent_rerun() {
        let (mut src, pages) = portal(5, None);
        let idx = UnifiedIndex::new();
        let gw = Gateway::new(HeuristicBackend);
        let r1 = run_source(&mut src, &pages, &gw, &idx, now()).unwrap();
        assert_eq!((r1.records_extracted, r1.records_new, r1.records_updated, r1.records_unchanged), (5, 5, 0, 0));
        assert_eq!(src.last_refreshed, Some(now()));
        let r2 = run_source(&mut src, &pages, &gw, &idx, now()).unwrap();
        assert_eq!((r2.records_new, r2.records_updated, r2.records_unchanged), (0, 0, 5));
    }

    #[test]
    fn missing_title_is_rejected() {
        let (mut src, pages) = portal(5, Some(2));
        let idx = UnifiedIndex::new();
        let r = run_source(&mut src, &pages, &Gateway::new(HeuristicBackend), &idx, now()).unwrap();
        assert_eq!((r.pages_seen, r.records_extracted, r.records_rejected), (5, 4, 1));
        assert_eq!(r.records_extracted, r.records_new + r.records_updated + r.records_unchanged);
    }

    #[test]
    fn no_script_rejects_pages_but_completes() {
        let (mut src, pages) = portal(3, None);
        let idx = UnifiedIndex::new();
        let r = run_source(&mut src, &pages, &Gateway::new(ScriptedBackend::default()), &idx, now()).unwrap();
        assert_eq!((r.pages_seen, r.records_extracted, r.records_rejected), (3, 0, 3));
        assert!(r.warnings.iter().all(|w| w.contains("no scripted reply")));
    }

    #[test]
    fn fetch_failures_are_warnings() {
        let (mut src, pages) = portal(2, None);
        src.pages.push("https://www.nsf.gov/funding/gone".into());
        let r = run_source(&mut src, &pages, &Gateway::new(HeuristicBackend), &UnifiedIndex::new(), now()).unwrap();
        assert_eq!((r.pages_seen, r.records_extracted, r.records_rejected), (3, 2, 0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn offline_fetcher_aborts() {
        let (mut src, _) = portal(2, None);
        let err = run_source(&mut src, &Offline, &Gateway::new(HeuristicBackend), &UnifiedIndex::new(), now()).unwrap_err();
        assert!(matches!(err, PipelineError::Fetcher { .. }));
        assert_eq!(src.last_refreshed, None);
    }

    #[test]
    fn foundation_root_failure_skips_source() {
        let mut src = SourceDescriptor::new("f", SourceKind::Foundation, "https://f.org/", "Foundation");
        let r = run_source(&mut src, &Pages(BTreeMap::new()), &Gateway::new(HeuristicBackend), &UnifiedIndex::new(), now()).unwrap();
        assert_eq!(r.pages_seen, 0);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(src.last_refreshed, None);
    }

    #[test]
    fn portal_without_page_list_follows_root_links() {
        let mut src = SourceDescriptor::new("doe", SourceKind::FederalPortal, "https://doe.gov/", "DOE");
        let pages = Pages(BTreeMap::from([
            ("https://doe.gov/".into(), "<a href='/foa/1'>1</a><a href='/foa/2'>2</a><a href='/'>home</a><a href='https://x.org/'>x</a>".into()),
            ("https://doe.gov/foa/1".into(), "<h1>Grid Storage</h1>".into()),
            ("https://doe.gov/foa/2".into(), "<h1>Fusion Materials</h1>".into()),
        ]));
        let r = run_source(&mut src, &pages, &Gateway::new(HeuristicBackend), &UnifiedIndex::new(), now()).unwrap();
        assert_eq!((r.pages_seen, r.records_new), (2, 2));
    }

    #[test]
    fn refresh_cadence() {
        let mut src = SourceDescriptor::new("nsf", SourceKind::Fixture, "https://www.nsf.gov", "NSF");
        assert!(due_for_refresh(&src, now()));
        src.last_refreshed = Some(now() - Duration::days(15));
        assert!(due_for_refresh(&src, now()));
        src.last_refreshed = Some(now() - Duration::days(14));
        assert!(due_for_refresh(&src, now()));
        src.last_refreshed = Some(now() - Duration::days(13) - Duration::hours(23));
        assert!(!due_for_refresh(&src, now()));
        src.last_refreshed = Some(now() - Duration::days(1));
        assert!(!due_for_refresh(&src, now()));
    }
}
