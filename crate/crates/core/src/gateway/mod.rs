//! The one place language-model requests are made.
//!
//! Everything that wants a model (field extraction, URL ranking, keyword
//! extraction, summaries) builds a [`CompletionRequest`] and goes through a
//! [`Gateway`]. The gateway forwards to a [`Backend`] and parses the reply
//! with the line grammar of the request's [`Purpose`]:
//!
//! | purpose            | grammar                                  |
//! |--------------------|------------------------------------------|
//! | `extract_fields`   | one `key: value` per line                |
//! | `plan`             | one `key: value` per line                |
//! | `rank_urls`        | one absolute URL per line                |
//! | `extract_keywords` | one keyword or short phrase per line     |
//! | `summarize`        | free text, never structured              |
//!
//! Backends: [`ScriptedBackend`] (fixture table, for tests and demos),
//! [`HttpBackend`] (chat-completions endpoint) and [`HeuristicBackend`]
//! (deterministic rules, for running without any model).

mod grammar;
mod heuristic;
mod http;
mod keywords;
mod scripted;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::FieldMap;

pub use grammar::{parse_field_map, parse_keyword_list, parse_url_list};
pub use heuristic::{extract_fields_heuristically, rank_urls_heuristically, HeuristicBackend, GRANT_URL_HINTS};
pub use http::{HttpBackend, HttpBackendConfig};
pub use keywords::{extract_keywords, extract_keywords_traced, fallback_keywords, KeywordError, KeywordSource, FUNCTION_WORDS, MAX_KEYWORDS};
pub use scripted::{script_key, ScriptMiss, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    ExtractFields,
    RankUrls,
    ExtractKeywords,
    Summarize,
    Plan,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExtractFields => "extract_fields",
            Self::RankUrls => "rank_urls",
            Self::ExtractKeywords => "extract_keywords",
            Self::Summarize => "summarize",
            Self::Plan => "plan",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub purpose: Purpose,
    pub prompt: String,
    pub context_documents: Vec<String>,
    pub max_reply_tokens: u32,
}

impl CompletionRequest {
    pub fn new(purpose: Purpose, prompt: impl Into<String>) -> Self {
        Self { purpose, prompt: prompt.into(), context_documents: Vec::new(), max_reply_tokens: 512 }
    }

    pub fn with_context(mut self, doc: impl Into<String>) -> Self {
        self.context_documents.push(doc.into());
        self
    }

    pub fn with_max_reply_tokens(mut self, n: u32) -> Self {
        self.max_reply_tokens = n.max(1);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Structured {
    Fields(FieldMap),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletionReply {
    pub text: String,
    pub structured: Option<Structured>,
    pub backend_id: String,
}

impl CompletionReply {
    pub fn fields(&self) -> Option<&FieldMap> {
        match &self.structured {
            Some(Structured::Fields(m)) => Some(m),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[String]> {
        match &self.structured {
            Some(Structured::List(l)) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("no scripted reply for {purpose} request {key}")]
    NoScript { purpose: Purpose, key: String },
    #[error("model request timed out")]
    Timeout,
    #[error("model endpoint returned status {0}")]
    BadStatus(u16),
    #[error("model transport error: {0}")]
    Transport(String),
    #[error("backend {backend} does not handle {purpose} requests")]
    Unsupported { backend: String, purpose: Purpose },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Produces raw reply text for a request. Parsing is the gateway's job.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete_text(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// Shareable handle over one backend. Cloning shares the call counter.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    calls: Arc<AtomicU64>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.id()).field("calls", &self.calls()).finish()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn Backend>) -> Self {
        Self { backend, calls: Arc::new(AtomicU64::new(0)) }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Number of requests forwarded to the backend so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionReply, GatewayError> {
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.complete_text(req)?;
        let structured = match req.purpose {
            Purpose::ExtractFields | Purpose::Plan => parse_field_map(&text).map(Structured::Fields),
            Purpose::RankUrls => parse_url_list(&text).map(Structured::List),
            Purpose::ExtractKeywords => parse_keyword_list(&text).map(Structured::List),
            Purpose::Summarize => None,
        };
        Ok(CompletionReply { text, structured, backend_id: self.backend.id().to_string() })
    }
}
