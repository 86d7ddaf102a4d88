use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, CompletionRequest, GatewayError};

const SYSTEM_PROMPT: &str = "You are a careful assistant inside a research-funding discovery system. \
Follow the reply format requested in each message exactly and do not invent facts that are not \
present in the supplied documents.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full URL of an OpenAI-compatible `chat/completions` endpoint.
    pub endpoint: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

/// Chat-completions client: one request, one retry on timeout, transport
/// failure or 5xx.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("endpoint", &self.config.endpoint).field("model", &self.config.model).finish()
    }
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut user = req.prompt.clone();
        for doc in &req.context_documents {
            user.push_str("\n\n<document>\n");
            user.push_str(doc);
            user.push_str("\n</document>");
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": req.max_reply_tokens,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": user},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, GatewayError> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.auth_token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = call.send_json(body).map_err(map_err)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(GatewayError::BadStatus(status));
        }
        let value: Value = resp.body_mut().read_json().map_err(map_err)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Transport("reply has no choices[0].message.content".into()))
    }
}

fn map_err(e: ureq::Error) -> GatewayError {
    match e {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        other => GatewayError::Transport(other.to_string()),
    }
}

fn retryable(e: &GatewayError) -> bool {
    match e {
        GatewayError::Timeout | GatewayError::Transport(_) => true,
        GatewayError::BadStatus(s) => *s >= 500,
        _ => false,
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn complete_text(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let body = self.body(req);
        match self.attempt(&body) {
            Err(e) if retryable(&e) => {
                tracing::warn!(error = %e, purpose = %req.purpose, "model request failed, retrying once");
                self.attempt(&body)
            }
            other => other,
        }
    }
}
