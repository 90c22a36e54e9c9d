use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::clock::{Clock, SystemClock};
use super::rate_limit::RateLimiter;
use super::{Oracle, OracleConfig, OracleError};

const BACKOFF_BASE: Duration = Duration::from_millis(250);
const BACKOFF_CAP: Duration = Duration::from_secs(8);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

/// Minimal JSON-over-HTTP POST, abstracted so retry logic is testable.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| OracleError::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(classify_reqwest)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify_reqwest)?;
        Ok(HttpReply { status, body })
    }
}

fn classify_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Other(e.to_string())
    }
}

/// OpenAI-compatible chat-completions client.
pub struct ChatEndpointOracle {
    url: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    timeout: Duration,
    max_retries: u32,
    api_key: Option<String>,
    limiter: Option<Arc<RateLimiter>>,
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
}

impl ChatEndpointOracle {
    pub fn from_config(cfg: &OracleConfig) -> Result<Self, OracleError> {
        Self::with_parts(
            cfg,
            Box::new(ReqwestTransport::new()?),
            Arc::new(SystemClock::default()),
            None,
        )
    }

    /// Full constructor. `limiter` overrides the process-wide shared limiter
    /// for this endpoint.
    pub fn with_parts(
        cfg: &OracleConfig,
        transport: Box<dyn Transport>,
        clock: Arc<dyn Clock>,
        limiter: Option<Arc<RateLimiter>>,
    ) -> Result<Self, OracleError> {
        if cfg.kind != super::OracleKind::ChatEndpoint {
            return Err(OracleError::Config("config is not a chat endpoint".into()));
        }
        cfg.validate()?;
        let base = cfg.endpoint_url.clone().expect("validated");
        let url = if base.trim_end_matches('/').ends_with("/chat/completions") {
            base
        } else {
            format!("{}/chat/completions", base.trim_end_matches('/'))
        };
        let api_key = match &cfg.api_key_env_var {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| OracleError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let limiter = limiter.or_else(|| cfg.rate_limit.map(|r| RateLimiter::shared(&url, r)));
        Ok(ChatEndpointOracle {
            url,
            model: cfg.model_name.clone().expect("validated"),
            temperature: cfg.temperature,
            max_tokens: cfg.max_output_tokens,
            timeout: cfg.request_timeout(),
            max_retries: cfg.max_retries,
            api_key,
            limiter,
            transport,
            clock,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, OracleError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let reply = self
            .transport
            .post_json(&self.url, self.api_key.as_deref(), body, self.timeout)
            .map_err(|e| match e {
                TransportError::Timeout => OracleError::Timeout,
                TransportError::Other(m) => OracleError::Transport(m),
            })?;
        if !(200..300).contains(&reply.status) {
            return Err(OracleError::Endpoint {
                status: reply.status,
                body: reply.body,
            });
        }
        extract_content(&reply.body)
    }
}

fn is_transient(e: &OracleError) -> bool {
    match e {
        OracleError::Timeout | OracleError::Transport(_) => true,
        OracleError::Endpoint { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

/// Text of `choices[0].message.content`.
pub(crate) fn extract_content(body: &str) -> Result<String, OracleError> {
    let v: Value = serde_json::from_str(body).map_err(|e| OracleError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| OracleError::MalformedResponse("missing choices[0].message.content".into()))
}

impl Oracle for ChatEndpointOracle {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        if prompt.trim().is_empty() {
            return Err(OracleError::EmptyPrompt);
        }
        let body = self.request_body(prompt);
        let mut attempt = 0u32;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if is_transient(&e) && attempt < self.max_retries => {
                    let delay = BACKOFF_BASE.saturating_mul(1 << attempt.min(16)).min(BACKOFF_CAP);
                    log::warn!("{}: {e}; retrying in {delay:?}", self.url);
                    self.clock.sleep(delay);
                    attempt += 1;
                }
                Err(e) if is_transient(&e) && self.max_retries > 0 => {
                    return Err(OracleError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn fingerprint(&self) -> String {
        format!("chat:{}:t={}", self.model, self.temperature)
    }
}
