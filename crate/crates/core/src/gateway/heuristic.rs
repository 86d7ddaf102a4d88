use std::sync::OnceLock;

use regex::Regex;
use url::Url;

use super::{fallback_keywords, parse_url_list, Backend, CompletionRequest, GatewayError, Purpose};
use crate::html;

/// Path fragments that mark a URL as likely to describe a funding call.
pub const GRANT_URL_HINTS: [&str; 5] = ["grant", "funding", "award", "apply", "rfp"];

/// Rule-based stand-in for a model. Handles field extraction from HTML,
/// URL ranking and keyword extraction; summaries and planning are
/// `Unsupported` so callers use their own templates.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicBackend;

/// URLs whose path or query mentions one of [`GRANT_URL_HINTS`] first, then
/// shallower paths, then lexicographic.
pub fn rank_urls_heuristically(urls: &[String]) -> Vec<String> {
    let mut keyed: Vec<(bool, usize, &String)> = urls
        .iter()
        .map(|u| {
            let (path, depth) = match Url::parse(u) {
                Ok(p) => {
                    let depth = p.path_segments().map_or(0, |s| s.filter(|x| !x.is_empty()).count());
                    (format!("{}?{}", p.path(), p.query().unwrap_or("")).to_lowercase(), depth)
                }
                Err(_) => (u.to_lowercase(), usize::MAX),
            };
            let hinted = GRANT_URL_HINTS.iter().any(|h| path.contains(h));
            (!hinted, depth, u)
        })
        .collect();
    keyed.sort();
    keyed.dedup_by(|a, b| a.2 == b.2);
    keyed.into_iter().map(|(_, _, u)| u.clone()).collect()
}

fn labeled(text: &str, labels: &Regex) -> Option<String> {
    text.lines().find_map(|l| labels.captures(l.trim()).map(|c| c[1].trim().to_string()))
}

fn deadline_re() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| {
        Regex::new(
            r"(?i)^(?:full\s+|application\s+|proposal\s+|submission\s+)?(?:deadline|due date|closing date|close date|applications due|proposals due)s?\s*[:\-\x{2013}]\s*(.+)$",
        )
        .expect("valid regex")
    })
}

fn amount_re() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| {
        Regex::new(r"(?i)^(?:award amount|funding amount|award size|award ceiling|amount|funding)\s*[:\-\x{2013}]\s*(.+)$")
            .expect("valid regex")
    })
}

/// Field extraction by pattern: `<h1>`/`<title>`, meta description or first
/// paragraph, and `Deadline:` / `Award amount:` style labels.
pub fn extract_fields_heuristically(body: &str) -> Vec<(String, String)> {
    let text = html::to_text(body);
    let mut out = Vec::new();
    let title = html::title(body).or_else(|| {
        (!body.contains('<')).then(|| text.lines().next().map(str::to_string)).flatten()
    });
    if let Some(t) = title.filter(|t| !t.is_empty()) {
        out.push(("title".to_string(), t));
    }
    let description = html::meta(body, "description").or_else(|| html::first_paragraph(body));
    if let Some(d) = description.filter(|d| !d.is_empty()) {
        out.push(("description".to_string(), d));
    }
    if let Some(d) = labeled(&text, deadline_re()) {
        out.push(("end_date".to_string(), d));
    }
    if let Some(a) = labeled(&text, amount_re()) {
        out.push(("funding_amount".to_string(), a));
    }
    if let Some(a) = html::meta(body, "agency").filter(|a| !a.is_empty()) {
        out.push(("agency".to_string(), a));
    }
    out
}

impl Backend for HeuristicBackend {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn complete_text(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let lines: Vec<String> = match req.purpose {
            Purpose::ExtractFields => {
                let body = req.context_documents.first().map(String::as_str).unwrap_or_default();
                extract_fields_heuristically(body).into_iter().map(|(k, v)| format!("{k}: {v}")).collect()
            }
            Purpose::RankUrls => rank_urls_heuristically(&parse_url_list(&req.prompt).unwrap_or_default()),
            Purpose::ExtractKeywords => fallback_keywords(&req.context_documents.join("\n"), 8),
            Purpose::Summarize | Purpose::Plan => {
                return Err(GatewayError::Unsupported { backend: self.id().to_string(), purpose: req.purpose })
            }
        };
        Ok(lines.join("\n"))
    }
}
