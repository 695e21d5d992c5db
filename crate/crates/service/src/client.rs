//! Blocking HTTP client for the analyst API.

use std::time::Duration;

use serde_json::Value;

use crate::api::TOKEN_HEADER;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status} {kind}: {message}")]
    Api { status: u16, kind: String, message: String },
    #[error("request failed: {0}")]
    Transport(String),
}

impl ClientError {
    /// Exit code matching the service's error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api { kind, .. } => match kind.as_str() {
                "config" | "unauthorized" => 1,
                "training" => 3,
                _ => 2,
            },
            ClientError::Transport(_) => 2,
        }
    }
}

pub struct Client {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: &str, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(3600)))
            .build()
            .into();
        Client {
            base: base.trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Value, ClientError> {
        let mut resp = resp.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(format!("unreadable response body: {e}")))?;
        let body: Option<Value> = serde_json::from_str(&text).ok();
        if status >= 400 {
            let field = |k: &str| body.as_ref().and_then(|b| b.get(k)).and_then(Value::as_str).map(String::from);
            return Err(ClientError::Api {
                status,
                kind: field("kind").unwrap_or_else(|| "invalid".into()),
                message: field("error").unwrap_or(text),
            });
        }
        body.ok_or_else(|| ClientError::Transport(format!("response is not JSON: {text}")))
    }

    pub fn get(&self, path: &str) -> Result<Value, ClientError> {
        let mut req = self.agent.get(self.url(path));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        Self::finish(req.call())
    }

    pub fn post(&self, path: &str, body: Option<&Value>) -> Result<Value, ClientError> {
        let mut req = self.agent.post(self.url(path));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        Self::finish(match body {
            Some(b) => req.send_json(b),
            None => req.send_empty(),
        })
    }
}
