//! Embedded keyword index over canonical opportunity records.
//!
//! Ranking is field-weighted BM25: each field (title, description) is scored
//! as its own BM25 document against per-field document frequencies and
//! average lengths, then combined as `3.0 * title + 1.0 * description`.
//!
//! ```text
//! idf(t)      = ln((N - df + 0.5) / (df + 0.5) + 1)
//! bm25(t, f)  = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_f / avglen_f))
//! ```
//!
//! Corpus statistics always cover the whole index. Filters only decide which
//! documents are candidates, so narrowing a search never changes a score.
//!
//! The index is many-readers/one-writer behind a single lock; postings and
//! the stored record for a document change together under the write side.

mod snapshot;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::corpus::Opportunity;

pub use snapshot::{LoadReport, SnapshotError, SnapshotMeta, SNAPSHOT_FORMAT_VERSION};
pub use tokenize::tokenize;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const TITLE_WEIGHT: f64 = 3.0;
pub const DESCRIPTION_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDoc {
    pub id: String,
    pub title_tokens: Vec<String>,
    pub desc_tokens: Vec<String>,
    pub end_date: Option<NaiveDate>,
    pub agency: String,
    pub url: String,
    pub stored: Opportunity,
}

impl IndexedDoc {
    pub fn from_record(opp: Opportunity) -> Self {
        Self {
            id: opp.id.clone(),
            title_tokens: tokenize(&opp.title),
            desc_tokens: tokenize(&opp.description),
            end_date: opp.end_date,
            agency: opp.agency.clone(),
            url: opp.url.clone(),
            stored: opp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFilters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_end_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_end_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agencies: Option<BTreeSet<String>>,
    #[serde(default = "yes")]
    pub include_undated: bool,
}

fn yes() -> bool {
    true
}

impl Default for SearchFilters {
    fn default() -> Self {
        Self::none()
    }
}

impl SearchFilters {
    pub fn none() -> Self {
        Self { min_end_date: None, max_end_date: None, agencies: None, include_undated: true }
    }

    pub fn is_empty(&self) -> bool {
        self.min_end_date.is_none() && self.max_end_date.is_none() && self.agencies.is_none() && self.include_undated
    }

    /// A filter whose date bounds cross can never match anything.
    pub fn is_consistent(&self) -> bool {
        match (self.min_end_date, self.max_end_date) {
            (Some(lo), Some(hi)) => lo <= hi,
            _ => true,
        }
    }

    pub fn admits(&self, doc: &IndexedDoc) -> bool {
        if let Some(agencies) = &self.agencies {
            if !agencies.iter().any(|a| a.eq_ignore_ascii_case(&doc.agency)) {
                return false;
            }
        }
        match doc.end_date {
            None => self.include_undated,
            Some(end) => {
                self.min_end_date.is_none_or(|lo| end >= lo) && self.max_end_date.is_none_or(|hi| end <= hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
    pub opportunity: Opportunity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub per_agency_counts: BTreeMap<String, usize>,
    pub last_modified: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertOutcome {
    Inserted,
    Updated,
    Unchanged,
}

/// term -> (doc id -> term frequency)
type Postings = HashMap<String, BTreeMap<String, u32>>;

#[derive(Default)]
struct IndexState {
    docs: BTreeMap<String, IndexedDoc>,
    title_postings: Postings,
    desc_postings: Postings,
    title_len_total: usize,
    desc_len_total: usize,
    last_modified: Option<DateTime<Utc>>,
    generation: u64,
}

#[derive(Default)]
pub struct UnifiedIndex {
    state: RwLock<IndexState>,
}

impl std::fmt::Debug for UnifiedIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = self.state.read();
        f.debug_struct("UnifiedIndex")
            .field("doc_count", &state.docs.len())
            .field("generation", &state.generation)
            .finish()
    }
}

fn add_postings(postings: &mut Postings, id: &str, tokens: &[String]) {
    for token in tokens {
        *postings.entry(token.clone()).or_default().entry(id.to_string()).or_insert(0) += 1;
    }
}

fn remove_postings(postings: &mut Postings, id: &str, tokens: &[String]) {
    for token in tokens {
        if let Some(list) = postings.get_mut(token) {
            list.remove(id);
            if list.is_empty() {
                postings.remove(token);
            }
        }
    }
}

impl IndexState {
    fn insert_doc(&mut self, doc: IndexedDoc) {
        add_postings(&mut self.title_postings, &doc.id, &doc.title_tokens);
        add_postings(&mut self.desc_postings, &doc.id, &doc.desc_tokens);
        self.title_len_total += doc.title_tokens.len();
        self.desc_len_total += doc.desc_tokens.len();
        self.docs.insert(doc.id.clone(), doc);
    }

    fn remove_doc(&mut self, id: &str) -> Option<IndexedDoc> {
        let doc = self.docs.remove(id)?;
        remove_postings(&mut self.title_postings, id, &doc.title_tokens);
        remove_postings(&mut self.desc_postings, id, &doc.desc_tokens);
        self.title_len_total -= doc.title_tokens.len();
        self.desc_len_total -= doc.desc_tokens.len();
        Some(doc)
    }

    fn touch(&mut self, now: DateTime<Utc>) {
        self.generation += 1;
        self.last_modified = Some(self.last_modified.map_or(now, |prev| prev.max(now)));
    }

    fn from_records(records: impl IntoIterator<Item = Opportunity>) -> Self {
        let mut state = Self::default();
        for opp in records {
            if state.docs.contains_key(&opp.id) {
                state.remove_doc(&opp.id.clone());
            }
            state.insert_doc(IndexedDoc::from_record(opp));
        }
        state
    }
}

/// One field's BM25 contribution for a single term.
fn field_score(tf: u32, df: usize, n: usize, len: usize, avg_len: f64) -> f64 {
    if tf == 0 || avg_len == 0.0 {
        return 0.0;
    }
    let n = n as f64;
    let df = df as f64;
    let tf = f64::from(tf);
    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
    idf * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * len as f64 / avg_len))
}

impl UnifiedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = Opportunity>) -> Self {
        let mut state = IndexState::from_records(records);
        if let Some(latest) = state.docs.values().map(|d| d.stored.fetched_at).max() {
            state.touch(latest);
        }
        Self { state: RwLock::new(state) }
    }

    pub fn upsert(&self, opp: Opportunity) -> UpsertOutcome {
        let mut state = self.state.write();
        let outcome = match state.docs.get(&opp.id) {
            None => UpsertOutcome::Inserted,
            Some(existing) if existing.stored.same_content(&opp) => return UpsertOutcome::Unchanged,
            Some(_) => UpsertOutcome::Updated,
        };
        let at = opp.fetched_at;
        state.remove_doc(&opp.id);
        state.insert_doc(IndexedDoc::from_record(opp));
        state.touch(at);
        outcome
    }

    pub fn remove(&self, id: &str) -> bool {
        let mut state = self.state.write();
        let existed = state.remove_doc(id).is_some();
        if existed {
            state.touch(Utc::now());
        }
        existed
    }

    pub fn get(&self, id: &str) -> Option<Opportunity> {
        self.state.read().docs.get(id).map(|d| d.stored.clone())
    }

    pub fn contains_url(&self, url: &str) -> bool {
        self.state.read().docs.values().any(|d| d.url == url)
    }

    pub fn len(&self) -> usize {
        self.state.read().docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bumped on every mutation; lets callers tell whether a save is due.
    pub fn generation(&self) -> u64 {
        self.state.read().generation
    }

    /// Stored records in id order.
    pub fn records(&self) -> Vec<Opportunity> {
        self.state.read().docs.values().map(|d| d.stored.clone()).collect()
    }

    pub fn agencies(&self) -> BTreeSet<String> {
        self.state.read().docs.values().map(|d| d.agency.clone()).collect()
    }

    /// Title terms ordered by document frequency (desc), then alphabetically.
    pub fn top_title_terms(&self, limit: usize) -> Vec<String> {
        let state = self.state.read();
        let mut terms: Vec<(&String, usize)> = state.title_postings.iter().map(|(t, p)| (t, p.len())).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        terms.into_iter().take(limit).map(|(t, _)| t.clone()).collect()
    }

    pub fn stats(&self) -> IndexStats {
        let state = self.state.read();
        let mut per_agency_counts = BTreeMap::new();
        for doc in state.docs.values() {
            *per_agency_counts.entry(doc.agency.clone()).or_insert(0) += 1;
        }
        IndexStats { doc_count: state.docs.len(), per_agency_counts, last_modified: state.last_modified }
    }

    /// Ranked keyword search. Repeated query terms count once.
    pub fn search(&self, query: &str, filters: &SearchFilters, limit: usize) -> Vec<Hit> {
        let limit = limit.max(1);
        let mut terms = Vec::new();
        for t in tokenize(query) {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }

        let state = self.state.read();
        let n = state.docs.len();
        if n == 0 || terms.is_empty() || !filters.is_consistent() {
            return Vec::new();
        }
        let avg_title = state.title_len_total as f64 / n as f64;
        let avg_desc = state.desc_len_total as f64 / n as f64;

        let mut candidates = BTreeSet::new();
        for t in &terms {
            for postings in [&state.title_postings, &state.desc_postings] {
                if let Some(list) = postings.get(t) {
                    candidates.extend(list.keys());
                }
            }
        }

        let lookup = |postings: &Postings, term: &str, id: &str| -> (u32, usize) {
            postings.get(term).map_or((0, 0), |list| (list.get(id).copied().unwrap_or(0), list.len()))
        };

        let mut hits: Vec<Hit> = candidates
            .into_iter()
            .filter_map(|id| {
                let doc = &state.docs[id];
                if !filters.admits(doc) {
                    return None;
                }
                let mut title_score = 0.0;
                let mut desc_score = 0.0;
                for t in &terms {
                    let (tf, df) = lookup(&state.title_postings, t, id);
                    title_score += field_score(tf, df, n, doc.title_tokens.len(), avg_title);
                    let (tf, df) = lookup(&state.desc_postings, t, id);
                    desc_score += field_score(tf, df, n, doc.desc_tokens.len(), avg_desc);
                }
                let score = TITLE_WEIGHT * title_score + DESCRIPTION_WEIGHT * desc_score;
                (score > 0.0).then(|| Hit { id: id.clone(), score, opportunity: doc.stored.clone() })
            })
            .collect();

        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(limit);
        hits
    }
}
