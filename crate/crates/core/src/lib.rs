//! Federated funding-opportunity discovery.
//!
//! Two halves share one canonical record ([`corpus::Opportunity`]):
//!
//! - an aggregation pipeline ([`ingest`]) that pulls pages from configured
//!   sources, asks the language-model gateway ([`gateway`]) to extract fields,
//!   normalizes them and upserts into the keyword index ([`index`]);
//! - a ReAct agent ([`agent`]) that answers conversational queries by calling
//!   `search_index` first and `web_search` ([`web`]) only when index results are
//!   sparse or recent postings are asked for, streaming every step as an
//!   ordered event.

pub mod agent;
pub mod card;
pub mod clock;
pub mod config;
pub mod corpus;
pub mod gateway;
pub mod html;
pub mod index;
pub mod ingest;
pub mod web;

pub use agent::{AgentEvent, EventKind, SessionState};
pub use card::{Provenance, ResultCard};
pub use clock::{Clock, FixedClock, SystemClock};
pub use corpus::{Opportunity, OpportunityStatus, SourceDescriptor, SourceKind};
pub use index::{tokenize, Hit, IndexStats, SearchFilters, UnifiedIndex, UpsertOutcome};
