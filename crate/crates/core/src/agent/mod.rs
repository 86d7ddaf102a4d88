//! ReAct loop over two tools, `search_index` and `web_search`.
//!
//! Every turn searches the index first. The web is consulted only when the
//! index returns fewer than [`SPARSITY_K`] hits or the message asks for recent
//! postings. Each step is emitted to a sink as an [`AgentEvent`] in order.

mod events;
mod interpret;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::card::{Provenance, ResultCard};
use crate::clock::Clock;
use crate::gateway::{extract_keywords, fallback_keywords, CompletionRequest, Gateway, KeywordError, Purpose};
use crate::index::{tokenize, Hit, SearchFilters, UnifiedIndex};
use crate::web::{to_result_card, WebResult, WebSearch};

pub use events::{check_event_log, AgentEvent, EventKind, EventPayload, PlanView, SummarySource, Tool};
pub use interpret::{parse_constraints, Constraints, RECENCY_PHRASES};

pub const SPARSITY_K: usize = 3;
pub const DEFAULT_RESULT_LIMIT: usize = 10;
pub const WEB_QUERY_SUFFIX: &str = " funding opportunity";
const MAX_SUGGESTIONS: usize = 3;
const MAX_ACTIONS_PER_TURN: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub keywords: Vec<String>,
    pub filters: SearchFilters,
    /// Set per message; a later message without a recency phrase clears it.
    pub recency_requested: bool,
    pub free_text: String,
    /// Parts of follow-up messages that no constraint pattern consumed,
    /// passed to the summarizer.
    #[serde(default)]
    pub unparsed_intent: Vec<String>,
}

impl QueryPlan {
    pub fn query(&self) -> String {
        self.keywords.join(" ")
    }

    pub fn view(&self) -> PlanView {
        PlanView { keywords: self.keywords.clone(), filters: self.filters.clone(), recency_requested: self.recency_requested }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub plan: QueryPlan,
    pub turn_count: u64,
    pub last_hits: Vec<ResultCard>,
    pub transcript: Vec<TranscriptEntry>,
    pub uploaded_keywords: Option<Vec<String>>,
    #[serde(default, skip_serializing)]
    document_text: Option<String>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            plan: QueryPlan::default(),
            turn_count: 0,
            last_hits: Vec::new(),
            transcript: Vec::new(),
            uploaded_keywords: None,
            document_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AgentAction {
    CallSearchIndex { query: String, filters: SearchFilters },
    CallWebSearch { query: String },
    Respond,
}

/// What already happened this turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TakenAction {
    SearchedIndex { hits: usize },
    SearchedWeb { ok: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("the query plan has no keywords")]
    NoKeywords,
}

/// The tool policy.
pub fn plan_next(state: &SessionState, history: &[TakenAction]) -> Result<AgentAction, PolicyError> {
    let plan = &state.plan;
    if plan.keywords.iter().all(|k| k.trim().is_empty()) {
        return Err(PolicyError::NoKeywords);
    }
    let index_hits = history.iter().find_map(|a| match a {
        TakenAction::SearchedIndex { hits } => Some(*hits),
        _ => None,
    });
    let Some(hits) = index_hits else {
        return Ok(AgentAction::CallSearchIndex { query: plan.query(), filters: plan.filters.clone() });
    };
    let searched_web = history.iter().any(|a| matches!(a, TakenAction::SearchedWeb { .. }));
    if (hits < SPARSITY_K || plan.recency_requested) && !searched_web {
        return Ok(AgentAction::CallWebSearch { query: format!("{}{WEB_QUERY_SUFFIX}", plan.query()) });
    }
    Ok(AgentAction::Respond)
}

fn non_empty_keywords(extracted: Vec<String>, text: &str) -> Vec<String> {
    if !extracted.is_empty() {
        return extracted;
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        vec![text.split_whitespace().collect::<Vec<_>>().join(" ")]
    } else {
        tokens
    }
}

/// Updates the plan from one user message. Keywords are extracted on the
/// first turn only; constraints are parsed on every turn.
pub fn interpret_message(
    state: &mut SessionState,
    user_text: &str,
    gateway: &Gateway,
    known_agencies: &BTreeSet<String>,
    clock: &dyn Clock,
) {
    let first = state.plan.keywords.is_empty();
    let c = parse_constraints(user_text, known_agencies, clock.today());
    let plan = &mut state.plan;
    if first {
        let extracted = extract_keywords(user_text, gateway).unwrap_or_default();
        plan.keywords = non_empty_keywords(extracted, user_text);
    } else if !c.residual.is_empty() && !plan.unparsed_intent.contains(&c.residual) {
        plan.unparsed_intent.push(c.residual.clone());
    }
    if let Some(d) = c.min_end_date {
        plan.filters.min_end_date = Some(d);
    }
    if let Some(d) = c.max_end_date {
        plan.filters.max_end_date = Some(d);
    }
    if c.has_deadline() {
        plan.filters.include_undated = false;
    }
    if !c.agencies.is_empty() {
        plan.filters.agencies = Some(c.agencies);
    }
    plan.recency_requested = c.recency;
    plan.free_text = user_text.to_string();
}

/// Replaces the plan keywords with the document's; filters are kept.
pub fn ingest_document(state: &mut SessionState, document_text: &str, gateway: &Gateway) -> Result<Vec<String>, KeywordError> {
    let keywords = non_empty_keywords(extract_keywords(document_text, gateway)?, document_text);
    state.uploaded_keywords = Some(keywords.clone());
    state.plan.keywords = keywords.clone();
    state.document_text = Some(document_text.to_string());
    Ok(keywords)
}

/// Index cards in score order, then web cards in provider order, one card
/// per normalized URL (the index version wins).
pub fn merge_rank(index_hits: &[Hit], web_results: &[WebResult], limit: usize) -> Vec<ResultCard> {
    let mut seen = BTreeSet::new();
    let mut hits: Vec<&Hit> = index_hits.iter().collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let index_cards = hits.into_iter().map(ResultCard::from_hit);
    let web_cards = web_results.iter().map(to_result_card);
    index_cards.chain(web_cards).filter(|c| seen.insert(c.normalized_url())).take(limit).collect()
}

/// Borrowed tools and settings for one turn.
pub struct TurnContext<'a> {
    pub index: &'a UnifiedIndex,
    pub web: &'a dyn WebSearch,
    pub gateway: &'a Gateway,
    pub clock: &'a dyn Clock,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnOutcome {
    pub cards: Vec<ResultCard>,
    pub summary: String,
    pub summary_source: SummarySource,
    pub suggested_keywords: Vec<String>,
    pub tools_called: Vec<Tool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnError {
    #[error("message text is empty")]
    EmptyMessage,
}

struct Emitter<'s> {
    seq: u64,
    sink: &'s mut dyn FnMut(AgentEvent),
}

impl Emitter<'_> {
    fn emit(&mut self, payload: EventPayload) {
        self.seq += 1;
        (self.sink)(AgentEvent { seq: self.seq, payload });
    }
}

fn describe_plan(plan: &QueryPlan) -> String {
    let mut text = format!("Searching the unified index for: {}.", plan.keywords.join(", "));
    let f = &plan.filters;
    if let Some(d) = f.min_end_date {
        text.push_str(&format!(" Deadline on or after {d}."));
    }
    if let Some(d) = f.max_end_date {
        text.push_str(&format!(" Deadline on or before {d}."));
    }
    if let Some(a) = &f.agencies {
        text.push_str(&format!(" Agencies: {}.", a.iter().cloned().collect::<Vec<_>>().join(", ")));
    }
    if plan.recency_requested {
        text.push_str(" Recent postings requested, so the web will be checked as well.");
    }
    text
}

/// Up to three tokens from the session's own text, then the index's most
/// common title terms, that are not already keywords.
fn suggest_keywords(state: &SessionState, index: &UnifiedIndex) -> Vec<String> {
    let used: BTreeSet<String> = state.plan.keywords.iter().flat_map(|k| tokenize(k)).collect();
    let mut text: Vec<&str> = state.transcript.iter().filter(|t| t.role == Role::User).map(|t| t.text.as_str()).collect();
    if let Some(doc) = &state.document_text {
        text.push(doc);
    }
    let mut out: Vec<String> = Vec::new();
    let candidates = fallback_keywords(&text.join("\n"), 50)
        .into_iter()
        .chain(index.top_title_terms(50))
        .chain(["research", "grant", "fellowship"].map(String::from));
    for c in candidates {
        if out.len() == MAX_SUGGESTIONS {
            break;
        }
        if c.chars().count() >= 4 && !used.contains(&c) && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn card_line(rank: usize, c: &ResultCard) -> String {
    let deadline = c.deadline.map_or_else(|| "no deadline listed".to_string(), |d| format!("deadline {d}"));
    let source = match c.provenance {
        Provenance::Index => "index",
        Provenance::Web => "web",
    };
    format!("{rank}. {} ({}, {deadline}) {} [{source}]", c.title, c.agency, c.url)
}

fn template_summary(cards: &[ResultCard], plan: &QueryPlan, suggestions: &[String]) -> String {
    if cards.is_empty() {
        let mut text = format!("No matching opportunities were found for: {}.", plan.keywords.join(", "));
        if !plan.filters.is_empty() {
            text.push_str(" The active filters may be too narrow.");
        }
        if !suggestions.is_empty() {
            text.push_str(&format!(" Try refining with: {}.", suggestions.join(", ")));
        }
        return text;
    }
    let web = cards.iter().filter(|c| c.provenance == Provenance::Web).count();
    let mut text = format!(
        "Found {} opportunit{} ({} from the index, {web} from the web). Top matches:",
        cards.len(),
        if cards.len() == 1 { "y" } else { "ies" },
        cards.len() - web
    );
    for (i, c) in cards.iter().take(3).enumerate() {
        text.push('\n');
        text.push_str(&card_line(i + 1, c));
    }
    if !plan.unparsed_intent.is_empty() {
        text.push_str(&format!("\nNoted but not applied as a filter: {}.", plan.unparsed_intent.join("; ")));
    }
    text
}

fn summary_request(cards: &[ResultCard], plan: &QueryPlan, last_refresh: Option<DateTime<Utc>>) -> CompletionRequest {
    let refreshed = last_refresh.map_or_else(|| "unknown".to_string(), |t| t.to_rfc3339());
    let mut prompt = format!(
        "Summarize these funding opportunity results for a researcher in two or three sentences. \
         Mention only opportunities from the attached list.\n\
         Researcher message: {}\nKeywords: {}\nIndex last refreshed: {refreshed}",
        plan.free_text,
        plan.keywords.join(", ")
    );
    if !plan.unparsed_intent.is_empty() {
        prompt.push_str(&format!("\nOther requests: {}", plan.unparsed_intent.join("; ")));
    }
    cards
        .iter()
        .enumerate()
        .fold(CompletionRequest::new(Purpose::Summarize, prompt), |req, (i, c)| req.with_context(card_line(i + 1, c)))
        .with_max_reply_tokens(300)
}

/// Runs one conversational turn, streaming events to `sink`. Tool failures
/// become `error` events; the turn always ends with `done`.
pub fn run_turn(
    state: &mut SessionState,
    user_text: &str,
    ctx: &TurnContext<'_>,
    sink: &mut dyn FnMut(AgentEvent),
) -> Result<TurnOutcome, TurnError> {
    if user_text.trim().is_empty() {
        return Err(TurnError::EmptyMessage);
    }
    let mut out = Emitter { seq: 0, sink };
    state.transcript.push(TranscriptEntry { role: Role::User, text: user_text.to_string() });
    interpret_message(state, user_text, ctx.gateway, &ctx.index.agencies(), ctx.clock);
    out.emit(EventPayload::Thought { text: describe_plan(&state.plan), plan: state.plan.view() });

    let limit = ctx.limit.max(1);
    let mut history: Vec<TakenAction> = Vec::new();
    let mut hits: Vec<Hit> = Vec::new();
    let mut web_results: Vec<WebResult> = Vec::new();
    let mut cards: Vec<ResultCard> = Vec::new();
    let mut tools_called = Vec::new();

    for step in 1..=MAX_ACTIONS_PER_TURN {
        let action = match plan_next(state, &history) {
            Ok(a) => a,
            Err(e) => {
                out.emit(EventPayload::Error { call_id: None, tool: None, message: e.to_string() });
                break;
            }
        };
        let call_id = format!("call-{step}");
        match action {
            AgentAction::Respond => break,
            AgentAction::CallSearchIndex { query, filters } => {
                tools_called.push(Tool::SearchIndex);
                out.emit(EventPayload::ToolCall {
                    call_id: call_id.clone(),
                    tool: Tool::SearchIndex,
                    query: query.clone(),
                    filters: Some(filters.clone()),
                });
                hits = ctx.index.search(&query, &filters, limit);
                history.push(TakenAction::SearchedIndex { hits: hits.len() });
                out.emit(EventPayload::ToolResult { call_id, tool: Tool::SearchIndex, count: hits.len() });
            }
            AgentAction::CallWebSearch { query } => {
                tools_called.push(Tool::WebSearch);
                out.emit(EventPayload::ToolCall { call_id: call_id.clone(), tool: Tool::WebSearch, query: query.clone(), filters: None });
                match ctx.web.search(&query, limit) {
                    Ok(results) => {
                        history.push(TakenAction::SearchedWeb { ok: true });
                        out.emit(EventPayload::ToolResult { call_id, tool: Tool::WebSearch, count: results.len() });
                        web_results = results;
                    }
                    Err(e) => {
                        history.push(TakenAction::SearchedWeb { ok: false });
                        out.emit(EventPayload::Error { call_id: Some(call_id), tool: Some(Tool::WebSearch), message: e.to_string() });
                    }
                }
            }
        }
        let merged = merge_rank(&hits, &web_results, limit);
        for card in merged.iter().skip(cards.len()) {
            out.emit(EventPayload::ResultItem { rank: cards.len() + 1, card: card.clone() });
            cards.push(card.clone());
        }
    }

    let suggestions = if cards.is_empty() { suggest_keywords(state, ctx.index) } else { Vec::new() };
    let model_text = ctx
        .gateway
        .complete(&summary_request(&cards, &state.plan, ctx.index.stats().last_modified))
        .ok()
        .map(|r| r.text.trim().to_string())
        .filter(|t| !t.is_empty());
    let (mut summary, summary_source) = match model_text {
        Some(text) => (text, SummarySource::Model),
        None => (template_summary(&cards, &state.plan, &suggestions), SummarySource::Template),
    };
    if summary_source == SummarySource::Model && !suggestions.is_empty() {
        summary.push_str(&format!("\nTry refining with: {}.", suggestions.join(", ")));
    }
    out.emit(EventPayload::Summary { text: summary.clone(), source: summary_source, suggested_keywords: suggestions.clone() });

    state.turn_count += 1;
    state.last_hits = cards.clone();
    state.transcript.push(TranscriptEntry { role: Role::Agent, text: summary.clone() });
    out.emit(EventPayload::Done { turn: state.turn_count, card_count: cards.len() });

    Ok(TurnOutcome { cards, summary, summary_source, suggested_keywords: suggestions, tools_called })
}
