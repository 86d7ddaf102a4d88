use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::Serialize;

use grantforge_core::agent::SessionState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
}

pub struct SessionEntry {
    pub handle: SessionHandle,
    /// Held for the whole of a turn; `try_lock` failing means a turn is active.
    pub state: Arc<tokio::sync::Mutex<SessionState>>,
    last_active: Mutex<Instant>,
}

/// In-memory sessions with idle eviction. Sessions mid-turn are never
/// evicted.
pub struct SessionStore {
    ttl: Duration,
    entries: Mutex<HashMap<String, Arc<SessionEntry>>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self { ttl, entries: Mutex::new(HashMap::new()) }
    }

    pub fn create(&self, now: DateTime<Utc>) -> SessionHandle {
        let mut entries = self.entries.lock();
        let id = loop {
            let id = uuid::Uuid::new_v4().simple().to_string();
            if !entries.contains_key(&id) {
                break id;
            }
        };
        let handle = SessionHandle { session_id: id.clone(), created_at: now };
        let entry = SessionEntry {
            handle: handle.clone(),
            state: Arc::new(tokio::sync::Mutex::new(SessionState::new(id.clone()))),
            last_active: Mutex::new(Instant::now()),
        };
        entries.insert(id, Arc::new(entry));
        handle
    }

    /// Looks a session up and marks it active.
    pub fn get(&self, id: &str) -> Option<Arc<SessionEntry>> {
        let entry = self.entries.lock().get(id).cloned()?;
        *entry.last_active.lock() = Instant::now();
        Some(entry)
    }

    pub fn touch(&self, id: &str) {
        if let Some(entry) = self.entries.lock().get(id) {
            *entry.last_active.lock() = Instant::now();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evict_idle(&self) -> usize {
        self.evict_idle_at(Instant::now())
    }

    pub fn evict_idle_at(&self, now: Instant) -> usize {
        let mut entries = self.entries.lock();
        let before = entries.len();
        entries.retain(|_, e| {
            let idle = now.saturating_duration_since(*e.last_active.lock()) >= self.ttl;
            !idle || e.state.try_lock().is_err()
        });
        before - entries.len()
    }
}
