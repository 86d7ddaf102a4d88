use std::collections::BTreeMap;
use std::path::Path;

use parking_lot::Mutex;
use sha2::{Digest, Sha256};

use super::{Backend, CompletionRequest, GatewayError, Purpose};

/// Fixture key for a request: hex SHA-256 over the purpose, the prompt and
/// each context document, separated by ASCII unit/record separators.
pub fn script_key(req: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update(req.purpose.as_str().as_bytes());
    h.update([0x1f]);
    h.update(req.prompt.as_bytes());
    for doc in &req.context_documents {
        h.update([0x1e]);
        h.update(doc.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptMiss {
    pub key: String,
    pub purpose: Purpose,
    pub prompt_head: String,
}

/// Replies from a fixed `key -> reply text` table. Unknown keys are
/// `NoScript` errors; callers decide how to degrade.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: BTreeMap<String, String>,
    misses: Mutex<Vec<ScriptMiss>>,
}

impl ScriptedBackend {
    pub fn from_map(replies: BTreeMap<String, String>) -> Self {
        Self { replies, misses: Mutex::default() }
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let replies = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        Ok(Self::from_map(replies))
    }

    pub fn with_reply(mut self, req: &CompletionRequest, reply: impl Into<String>) -> Self {
        self.replies.insert(script_key(req), reply.into());
        self
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    /// Requests that found no reply, in call order.
    pub fn misses(&self) -> Vec<ScriptMiss> {
        self.misses.lock().clone()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete_text(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let key = script_key(req);
        match self.replies.get(&key) {
            Some(reply) => Ok(reply.clone()),
            None => {
                self.misses.lock().push(ScriptMiss {
                    key: key.clone(),
                    purpose: req.purpose,
                    prompt_head: req.prompt.chars().take(80).collect(),
                });
                Err(GatewayError::NoScript { purpose: req.purpose, key })
            }
        }
    }
}
