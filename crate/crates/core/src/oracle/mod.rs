//! Anything that turns a rendered prompt into a text response.
//!
//! - [`SyntheticOracle`]: deterministic answers from a [`SyntheticWorld`] of
//!   per-question answer timelines. Used for tests and offline runs.
//! - [`ChatEndpointOracle`]: OpenAI-compatible `/chat/completions` over HTTP,
//!   with retries and a process-wide rate limiter.
//! - [`CachedOracle`]: wraps either one with a persistent response cache.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Question;

mod cache;
mod chat;
mod clock;
mod rate_limit;
mod synthetic;

pub use cache::{prompt_hash, CacheError, CacheRecord, CachedOracle, ResponseCache};
pub use chat::{ChatEndpointOracle, HttpReply, ReqwestTransport, Transport, TransportError};
pub use clock::{Clock, ManualClock, SystemClock};
pub use rate_limit::RateLimiter;
pub use synthetic::{synthetic_answer, SyntheticError, SyntheticOracle, SyntheticWorld};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: Box<OracleError> },
    #[error("oracle misconfigured: {0}")]
    Config(String),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Prompt in, completion out. Implementations must be callable concurrently.
pub trait Oracle: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, OracleError>;

    /// Identifies the answering model for cache keying: kind, model and
    /// temperature.
    fn fingerprint(&self) -> String;
}

impl<O: Oracle + ?Sized> Oracle for Arc<O> {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        (**self).complete(prompt)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        (**self).complete(prompt)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ChatEndpoint,
    #[default]
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
    /// Requests per second, process-wide per endpoint. `None` = unlimited.
    pub rate_limit: Option<u32>,
    /// JSON file holding the synthetic world (synthetic oracle only).
    pub world: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::Synthetic,
            endpoint_url: None,
            model_name: None,
            api_key_env_var: None,
            temperature: 0.0,
            max_output_tokens: 16,
            request_timeout_secs: 60,
            max_retries: 3,
            rate_limit: None,
            world: None,
        }
    }
}

impl OracleConfig {
    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        match self.kind {
            OracleKind::ChatEndpoint => {
                if self.endpoint_url.is_none() {
                    return Err(OracleError::Config("chat endpoint requires endpoint_url".into()));
                }
                if self.model_name.is_none() {
                    return Err(OracleError::Config("chat endpoint requires model_name".into()));
                }
            }
            OracleKind::Synthetic => {
                if self.world.is_none() {
                    return Err(OracleError::Config("synthetic oracle requires a world file".into()));
                }
            }
        }
        if self.max_output_tokens == 0 {
            return Err(OracleError::Config("max_output_tokens must be positive".into()));
        }
        if self.rate_limit == Some(0) {
            return Err(OracleError::Config("rate_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Builds the oracle described by `cfg`. `questions` lets the synthetic
/// oracle map prompt text back to question ids.
pub fn build_oracle(cfg: &OracleConfig, questions: &[Question]) -> Result<Box<dyn Oracle>, OracleError> {
    cfg.validate()?;
    match cfg.kind {
        OracleKind::Synthetic => {
            let path = cfg.world.as_ref().expect("validated");
            let world = SyntheticWorld::from_json_file(path)?;
            Ok(Box::new(SyntheticOracle::new(world, questions)))
        }
        OracleKind::ChatEndpoint => Ok(Box::new(ChatEndpointOracle::from_config(cfg)?)),
    }
}

/// Sends one prompt through `oracle`, rejecting empty prompts up front.
pub fn complete(oracle: &dyn Oracle, prompt: &str) -> Result<String, OracleError> {
    if prompt.trim().is_empty() {
        return Err(OracleError::EmptyPrompt);
    }
    oracle.complete(prompt)
}
