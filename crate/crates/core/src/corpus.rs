//! The canonical opportunity record and the rules that turn loosely extracted
//! field maps into it.
//!
//! Only `title` and `url` are load-bearing. Every other field degrades: a value
//! that cannot be parsed is dropped and a note is appended to
//! [`Opportunity::warnings`], so one sloppy agency page never costs a record.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

/// Flat map of optional string fields as produced by extraction.
pub type FieldMap = BTreeMap<String, String>;

pub const DEFAULT_REFRESH_INTERVAL_DAYS: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FederalPortal,
    Foundation,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opportunity {
    pub id: String,
    pub title: String,
    pub description: String,
    pub url: String,
    pub agency: String,
    pub source_kind: SourceKind,
    pub end_date: Option<NaiveDate>,
    pub funding_amount: Option<u64>,
    pub fetched_at: DateTime<Utc>,
    pub warnings: Vec<String>,
}

impl Opportunity {
    /// Compares everything except `fetched_at`. Re-fetching an untouched page
    /// must not count as a change.
    pub fn same_content(&self, other: &Opportunity) -> bool {
        self.id == other.id
            && self.title == other.title
            && self.description == other.description
            && self.url == other.url
            && self.agency == other.agency
            && self.source_kind == other.source_kind
            && self.end_date == other.end_date
            && self.funding_amount == other.funding_amount
            && self.warnings == other.warnings
    }

    /// Re-extracts the field map that [`validate`] accepts.
    pub fn to_field_map(&self) -> FieldMap {
        let mut map = FieldMap::new();
        map.insert("title".into(), self.title.clone());
        map.insert("description".into(), self.description.clone());
        map.insert("url".into(), self.url.clone());
        map.insert("agency".into(), self.agency.clone());
        if let Some(d) = self.end_date {
            map.insert("end_date".into(), d.format("%Y-%m-%d").to_string());
        }
        if let Some(a) = self.funding_amount {
            map.insert("funding_amount".into(), a.to_string());
        }
        if !self.warnings.is_empty() {
            map.insert("warnings".into(), self.warnings.join("\n"));
        }
        map
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("opportunity serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub kind: SourceKind,
    pub root: String,
    pub agency_label: String,
    #[serde(default)]
    pub last_refreshed: Option<DateTime<Utc>>,
    #[serde(default = "default_interval")]
    pub refresh_interval_days: u32,
    /// Opportunity pages for portal and fixture sources. When empty the
    /// pipeline takes the root page's same-domain links instead.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pages: Vec<String>,
}

fn default_interval() -> u32 {
    DEFAULT_REFRESH_INTERVAL_DAYS
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SourceConfigError {
    #[error("source {0}: refresh_interval_days must be at least 1")]
    ZeroInterval(String),
    #[error("source {0}: foundation root must be a domain-level http(s) URL, got {1:?}")]
    FoundationRoot(String, String),
    #[error("source {0}: empty source_id or agency_label")]
    MissingLabel(String),
}

impl SourceDescriptor {
    pub fn new(source_id: impl Into<String>, kind: SourceKind, root: impl Into<String>, agency_label: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            kind,
            root: root.into(),
            agency_label: agency_label.into(),
            last_refreshed: None,
            refresh_interval_days: DEFAULT_REFRESH_INTERVAL_DAYS,
            pages: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<(), SourceConfigError> {
        if self.source_id.trim().is_empty() || self.agency_label.trim().is_empty() {
            return Err(SourceConfigError::MissingLabel(self.source_id.clone()));
        }
        if self.refresh_interval_days < 1 {
            return Err(SourceConfigError::ZeroInterval(self.source_id.clone()));
        }
        if self.kind == SourceKind::Foundation {
            let domain_level = parse_http_url(&self.root)
                .map(|u| matches!(u.path(), "" | "/") && u.query().is_none())
                .unwrap_or(false);
            if !domain_level {
                return Err(SourceConfigError::FoundationRoot(self.source_id.clone(), self.root.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpportunityStatus {
    Open,
    Expired,
    Undated,
}

impl fmt::Display for OpportunityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Open => "open",
            Self::Expired => "expired",
            Self::Undated => "undated",
        })
    }
}

/// An opportunity is still open on its deadline day.
pub fn status_of(opp: &Opportunity, now: NaiveDate) -> OpportunityStatus {
    match opp.end_date {
        None => OpportunityStatus::Undated,
        Some(end) if end < now => OpportunityStatus::Expired,
        Some(_) => OpportunityStatus::Open,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("record has no usable title")]
    MissingTitle,
    #[error("record url {0:?} is not an absolute http(s) URL")]
    InvalidUrl(String),
}

/// Builds a canonical record from a loosely extracted field map.
///
/// `agency` falls back to the source's label. A `warnings` entry in the map
/// (newline separated) is carried forward, which keeps
/// `validate(opp.to_field_map())` a fixed point.
pub fn validate(
    draft: &FieldMap,
    source: &SourceDescriptor,
    fetched_at: DateTime<Utc>,
) -> Result<Opportunity, ValidationError> {
    let field = |k: &str| draft.get(k).map(|v| v.trim()).filter(|v| !v.is_empty());

    let title = field("title").map(collapse_whitespace).ok_or(ValidationError::MissingTitle)?;
    let url = field("url").ok_or_else(|| ValidationError::InvalidUrl(String::new()))?;
    if parse_http_url(url).is_none() {
        return Err(ValidationError::InvalidUrl(url.to_string()));
    }

    let mut warnings: Vec<String> = field("warnings")
        .map(|w| w.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    let mut note = |w: &str| {
        if !warnings.iter().any(|x| x == w) {
            warnings.push(w.to_string());
        }
    };

    let end_date = field("end_date").and_then(|raw| {
        let parsed = parse_date(raw);
        if parsed.is_none() {
            note("end_date unparseable");
        }
        parsed
    });
    let funding_amount = field("funding_amount").and_then(|raw| {
        let parsed = parse_amount(raw);
        if parsed.is_none() {
            note("funding_amount unparseable");
        }
        parsed
    });

    let description = field("description").map(collapse_whitespace).unwrap_or_default();
    let agency = field("agency")
        .map(collapse_whitespace)
        .unwrap_or_else(|| source.agency_label.trim().to_string());

    Ok(Opportunity {
        id: dedup_key(&title, url),
        title,
        description,
        url: url.to_string(),
        agency,
        source_kind: source.kind,
        end_date,
        funding_amount,
        fetched_at,
        warnings,
    })
}

/// Stable record identity: the first 128 bits of SHA-256 over the normalized
/// title and URL, hex encoded.
pub fn dedup_key(title: &str, url: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_title(title).as_bytes());
    hasher.update(b"\n");
    hasher.update(normalize_url(url).as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

pub fn normalize_title(title: &str) -> String {
    collapse_whitespace(&title.to_lowercase())
}

/// Lowercases the scheme, drops any fragment, then strips trailing slashes.
pub fn normalize_url(url: &str) -> String {
    let url = url.trim();
    let url = url.split('#').next().unwrap_or_default();
    let url = match url.find("://") {
        Some(i) => format!("{}{}", url[..i].to_ascii_lowercase(), &url[i..]),
        None => url.to_string(),
    };
    url.trim_end_matches('/').to_string()
}

pub fn parse_http_url(raw: &str) -> Option<Url> {
    let url = Url::parse(raw.trim()).ok()?;
    (matches!(url.scheme(), "http" | "https") && url.host_str().is_some_and(|h| !h.is_empty())).then_some(url)
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Accepts ISO-8601 (date or date-time), `Month DD, YYYY` and `MM/DD/YYYY`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc).date_naive());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
        return Some(dt.date());
    }
    let spaced = collapse_whitespace(raw);
    for fmt in ["%B %d, %Y", "%B %d %Y", "%m/%d/%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(&spaced, fmt) {
            return Some(d);
        }
    }
    None
}

/// Dollar amounts such as `$250,000` or `50000`; for ranges
/// (`$100,000 - $500,000`, `100000 to 200000`) the lower bound wins.
pub fn parse_amount(raw: &str) -> Option<u64> {
    static AMOUNT: OnceLock<Regex> = OnceLock::new();
    let re = AMOUNT.get_or_init(|| {
        Regex::new(r"(?i)^\$?\s*([0-9][0-9,]*)(?:\s*(?:-|\x{2013}|\x{2014}|to)\s*\$?\s*[0-9][0-9,]*)?$").expect("valid regex")
    });
    let caps = re.captures(raw.trim())?;
    let digits: String = caps[1].chars().filter(|c| *c != ',').collect();
    digits.parse().ok()
}
