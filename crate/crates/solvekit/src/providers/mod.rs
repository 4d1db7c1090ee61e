//! Provider contracts for language models, embedders, and optimizer
//! drivers, plus fully deterministic offline implementations.
//!
//! Live deployments plug real services in behind the same traits (see the
//! `http-providers` feature); tests and the offline pipeline run on the
//! scripted and hash-based mocks, which are pure functions of their inputs
//! and seeds.

mod faulty;
#[cfg(feature = "http-providers")]
mod http;
mod mock;
mod toy;

pub use faulty::{faulty_optimize_variants, Fault, ScriptedEnsembleDriver, ScriptedVariant};
#[cfg(feature = "http-providers")]
pub use http::{HttpEmbeddingProvider, HttpLlmProvider};
pub use mock::{
    HashEmbedder, ProviderLogRecord, ProviderLogWriter, RecordingEmbedder, RecordingLlm,
    ReplayEmbedder, ReplayLlm, ReplayLog, ScriptEntry, ScriptedLlm,
};
pub use toy::{toy_optimize, toy_solve, ToyConfig, ToyError, ToyOutcome, VariableDomain};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{DecisionProcess, SolverRun};

/// What a language-model request is for. Drives scripted-response lookup
/// and replay logging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Extract,
    Judge,
    Recommend,
    GenerateOptimizer,
    GenerateSimulator,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Extract => "extract",
            RequestKind::Judge => "judge",
            RequestKind::Recommend => "recommend",
            RequestKind::GenerateOptimizer => "generate_optimizer",
            RequestKind::GenerateSimulator => "generate_simulator",
        }
    }
}

/// One request to a language-model provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub kind: RequestKind,
    pub prompt: String,
    pub attachments: Vec<(String, String)>,
    pub run_id: String,
}

impl ProviderRequest {
    pub fn new(kind: RequestKind, prompt: impl Into<String>) -> Self {
        ProviderRequest { kind, prompt: prompt.into(), attachments: Vec::new(), run_id: String::new() }
    }

    /// Content hash of kind, prompt, and attachments; the key used for
    /// scripted lookup and replay.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(self.prompt.as_bytes());
        for (name, content) in &self.attachments {
            hasher.update([0x1f]);
            hasher.update(name.as_bytes());
            hasher.update([0x1e]);
            hasher.update(content.as_bytes());
        }
        hex_digest(&hasher.finalize())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fingerprint for an embedding request (the batch of texts).
pub fn embedding_fingerprint(texts: &[String]) -> String {
    let mut hasher = Sha256::new();
    for text in texts {
        hasher.update(text.as_bytes());
        hasher.update([0x1f]);
    }
    hex_digest(&hasher.finalize())
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("provider contract violation: {0}")]
    Contract(String),
    #[error("provider transport error: {0}")]
    Transport(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::RateLimited(_) | ProviderError::Unavailable(_))
    }
}

/// Text-completion contract. Implementations must be deterministic when
/// their configuration is (the mocks are pure functions of kind, prompt
/// hash, and script).
pub trait LlmProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Dense-embedding contract with a fixed dimensionality and a stable
/// identity string (stores record it to reject mismatched embedders).
pub trait EmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
    fn dimension(&self) -> usize;
    fn id(&self) -> String;
}

/// One optimizer invocation produces the full set of variant runs. The
/// `feedback` argument carries the previous iteration's discrepancy report
/// rendered as text, exactly what a coding agent would receive as a
/// refinement prompt.
pub trait OptimizerDriver {
    fn optimize(
        &mut self,
        process: &DecisionProcess,
        feedback: Option<&str>,
    ) -> Result<Vec<SolverRun>, ProviderError>;
}

/// Bounded-retry policy for retryable provider errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, backoff_ms: 0 }
    }
}

/// Call a provider, retrying retryable failures with linear backoff up to
/// the configured budget.
pub fn complete_with_retry(
    provider: &dyn LlmProvider,
    request: &ProviderRequest,
    policy: &RetryPolicy,
) -> Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < policy.max_retries => {
                attempt += 1;
                log::warn!(
                    "provider request ({}) failed, retry {attempt}/{}: {e}",
                    request.kind.as_str(),
                    policy.max_retries
                );
                if policy.backoff_ms > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(
                        policy.backoff_ms * attempt as u64,
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
}
