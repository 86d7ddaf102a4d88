use serde::{Deserialize, Serialize};

use crate::card::ResultCard;
use crate::index::SearchFilters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Thought,
    ToolCall,
    ToolResult,
    ResultItem,
    Summary,
    Error,
    Done,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Thought => "thought",
            EventKind::ToolCall => "tool_call",
            EventKind::ToolResult => "tool_result",
            EventKind::ResultItem => "result_item",
            EventKind::Summary => "summary",
            EventKind::Error => "error",
            EventKind::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    SearchIndex,
    WebSearch,
}

impl Tool {
    pub fn as_str(self) -> &'static str {
        match self {
            Tool::SearchIndex => "search_index",
            Tool::WebSearch => "web_search",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    Model,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub keywords: Vec<String>,
    pub filters: SearchFilters,
    pub recency_requested: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    Thought {
        text: String,
        plan: PlanView,
    },
    ToolCall {
        call_id: String,
        tool: Tool,
        query: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        filters: Option<SearchFilters>,
    },
    ToolResult {
        call_id: String,
        tool: Tool,
        count: usize,
    },
    ResultItem {
        rank: usize,
        card: ResultCard,
    },
    Summary {
        text: String,
        source: SummarySource,
        #[serde(default)]
        suggested_keywords: Vec<String>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        call_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<Tool>,
        message: String,
    },
    Done {
        turn: u64,
        card_count: usize,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Thought { .. } => EventKind::Thought,
            EventPayload::ToolCall { .. } => EventKind::ToolCall,
            EventPayload::ToolResult { .. } => EventKind::ToolResult,
            EventPayload::ResultItem { .. } => EventKind::ResultItem,
            EventPayload::Summary { .. } => EventKind::Summary,
            EventPayload::Error { .. } => EventKind::Error,
            EventPayload::Done { .. } => EventKind::Done,
        }
    }
}

/// One step of a turn. Serializes flat: `{"seq":1,"kind":"thought",...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl AgentEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

/// Structural problems in one turn's event log.
pub fn check_event_log(events: &[AgentEvent]) -> Vec<String> {
    let mut problems = Vec::new();
    for pair in events.windows(2) {
        if pair[1].seq <= pair[0].seq {
            problems.push(format!("seq {} follows {}", pair[1].seq, pair[0].seq));
        }
    }
    let dones = events.iter().filter(|e| e.kind() == EventKind::Done).count();
    if dones != 1 {
        problems.push(format!("{dones} done events"));
    }
    if events.last().map(AgentEvent::kind) != Some(EventKind::Done) {
        problems.push("last event is not done".into());
    }
    for e in events {
        if let EventPayload::ToolCall { call_id, .. } = &e.payload {
            let answered = events.iter().any(|r| match &r.payload {
                EventPayload::ToolResult { call_id: c, .. } => c == call_id,
                EventPayload::Error { call_id: Some(c), .. } => c == call_id,
                _ => false,
            });
            if !answered {
                problems.push(format!("{call_id} has no tool_result or error"));
            }
        }
    }
    problems
}
