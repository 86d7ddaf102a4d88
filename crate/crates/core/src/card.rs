use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_url;
use crate::index::Hit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Index,
    Web,
}

/// A ranked, user-facing result. Index cards carry the record id so the
/// client can fetch the full record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCard {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub title: String,
    pub agency: String,
    pub deadline: Option<NaiveDate>,
    pub url: String,
    pub provenance: Provenance,
    pub score: f64,
    #[serde(default)]
    pub snippet: String,
}

const SNIPPET_CHARS: usize = 240;

pub(crate) fn clip(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let mut out: String = text.chars().take(max).collect();
    if let Some(cut) = out.rfind(' ') {
        out.truncate(cut);
    }
    out.push('…');
    out
}

impl ResultCard {
    pub fn from_hit(hit: &Hit) -> Self {
        let opp = &hit.opportunity;
        Self {
            id: Some(opp.id.clone()),
            title: opp.title.clone(),
            agency: opp.agency.clone(),
            deadline: opp.end_date,
            url: opp.url.clone(),
            provenance: Provenance::Index,
            score: hit.score,
            snippet: clip(&opp.description, SNIPPET_CHARS),
        }
    }

    pub fn normalized_url(&self) -> String {
        normalize_url(&self.url)
    }
}
