//! Feature extraction: prompt construction, the model-client contract, the
//! retry loop, fixture record/replay and the deterministic static analyzer.

mod analyzer;
mod client;
mod fixture;
mod prompt;

use std::io;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::AssemblyFunction;
use crate::schema::{validate_with, FeatureSet, Requirements};

pub use analyzer::{analyze, guess_arch, heuristic_features, static_extract, StaticAnalysis};
pub use client::{HttpClient, HttpConfig, ModelClient, ScriptedClient, StaticClient};
pub use fixture::{record_fixture, FixtureEntry, FixtureFile, FixtureStore, RecordingClient, ReplayClient};
pub use prompt::{
    build_prompt, Example, ExampleBank, Prompt, PromptConfig, DEFAULT_EXAMPLES, MAX_EXAMPLES, SYSTEM_PREAMBLE,
};

/// Output token budget sent with every request.
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no fixture for prompt {prompt_sha256} at temperature {temperature} attempt {attempt}")]
    FixtureMiss {
        prompt_sha256: String,
        temperature: String,
        attempt: u32,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error("client configuration: {0}")]
    Config(String),
    #[error("fixture store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("extraction of `{}` failed after {} attempts", .transcript.function_id, .transcript.attempts.len())]
    Failed { transcript: Box<ClientTranscript> },
    #[error("client error while extracting `{}`: {source}", .transcript.function_id)]
    Client {
        source: ClientError,
        transcript: Box<ClientTranscript>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ExtractionError {
    pub fn transcript(&self) -> Option<&ClientTranscript> {
        match self {
            ExtractionError::Failed { transcript } | ExtractionError::Client { transcript, .. } => Some(transcript),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_temperature: f64,
    pub temperature_step: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_temperature: 0.2,
            temperature_step: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn check(&self) -> Result<(), ExtractionError> {
        if !(self.temperature_step > 0.0 && self.temperature_step.is_finite()) {
            return Err(ExtractionError::Config("temperature_step must be strictly positive".into()));
        }
        if !self.base_temperature.is_finite() {
            return Err(ExtractionError::Config("base_temperature must be finite".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, attempt: u32) -> f64 {
        self.base_temperature + f64::from(attempt) * self.temperature_step
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_retries + 1
    }
}

/// One request under the client contract.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub system: &'a str,
    pub user: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Zero-based attempt number; part of the fixture key.
    pub attempt: u32,
}

impl CompletionRequest<'_> {
    pub fn prompt_sha256(&self) -> String {
        prompt_sha256(self.system, self.user)
    }
}

/// Hash of the rendered prompt: system text, a NUL separator, user text.
pub fn prompt_sha256(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

/// Fixture key form of a temperature.
pub fn temperature_key(t: f64) -> String {
    format!("{t:.4}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    Valid,
    MalformedJson(String),
    SchemaInvalid(String),
    ClientError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    pub temperature: f64,
    /// Hash of the rendered prompt sent with this attempt.
    pub prompt_sha256: String,
    pub response: Option<String>,
    pub outcome: Outcome,
}

/// Audit log of one extraction. The rendered prompt is identical across
/// attempts (example order is fixed) and stored once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientTranscript {
    pub function_id: String,
    pub prompt: Prompt,
    pub attempts: Vec<Attempt>,
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => return t,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses and validates one raw response against the enabled sections.
pub fn parse_response(raw: &str, cfg: &PromptConfig) -> Result<FeatureSet, Outcome> {
    let doc: serde_json::Value =
        serde_json::from_str(strip_code_fence(raw)).map_err(|e| Outcome::MalformedJson(e.to_string()))?;
    validate_with(&doc, &Requirements::sections(cfg.sections.iter().copied()))
        .map_err(|e| Outcome::SchemaInvalid(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct Extractor<'a> {
    pub config: PromptConfig,
    pub policy: RetryPolicy,
    pub bank: &'a ExampleBank,
    pub max_tokens: u32,
}

impl<'a> Extractor<'a> {
    pub fn new(config: PromptConfig, policy: RetryPolicy, bank: &'a ExampleBank) -> Self {
        Extractor {
            config,
            policy,
            bank,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn extract(
        &self,
        f: &AssemblyFunction,
        client: &dyn ModelClient,
    ) -> Result<(FeatureSet, ClientTranscript), ExtractionError> {
        self.policy.check()?;
        let prompt = build_prompt(f, &self.config, self.bank)?;
        let hash = prompt_sha256(&prompt.system, &prompt.user);
        let mut transcript = ClientTranscript {
            function_id: f.id.clone(),
            prompt,
            attempts: Vec::new(),
        };
        for attempt in 0..self.policy.max_attempts() {
            let temperature = self.policy.temperature(attempt);
            let request = CompletionRequest {
                system: &transcript.prompt.system,
                user: &transcript.prompt.user,
                temperature,
                max_tokens: self.max_tokens,
                attempt,
            };
            let raw = match client.complete(&request) {
                Ok(raw) => raw,
                Err(source) => {
                    transcript.attempts.push(Attempt {
                        attempt,
                        temperature,
                        prompt_sha256: hash,
                        response: None,
                        outcome: Outcome::ClientError(source.to_string()),
                    });
                    return Err(ExtractionError::Client {
                        source,
                        transcript: Box::new(transcript),
                    });
                }
            };
            let parsed = parse_response(&raw, &self.config);
            let outcome = match &parsed {
                Ok(_) => Outcome::Valid,
                Err(o) => o.clone(),
            };
            log::debug!("{} attempt {attempt} at t={temperature:.4}: {outcome:?}", f.id);
            transcript.attempts.push(Attempt {
                attempt,
                temperature,
                prompt_sha256: hash.clone(),
                response: Some(raw),
                outcome,
            });
            if let Ok(fs) = parsed {
                return Ok((fs, transcript));
            }
        }
        Err(ExtractionError::Failed {
            transcript: Box::new(transcript),
        })
    }

    /// Extracts every function with at most `parallel` requests in flight.
    /// Results keep input order.
    pub fn extract_many(
        &self,
        fns: &[AssemblyFunction],
        client: &dyn ModelClient,
        parallel: usize,
    ) -> Vec<Result<(FeatureSet, ClientTranscript), ExtractionError>> {
        use rayon::prelude::*;
        let parallel = parallel.max(1);
        if parallel == 1 {
            return fns.iter().map(|f| self.extract(f, client)).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
            Ok(pool) => pool.install(|| fns.par_iter().map(|f| self.extract(f, client)).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); extracting sequentially");
                fns.iter().map(|f| self.extract(f, client)).collect()
            }
        }
    }
}

/// Runs the retry loop for one function with the bundled example bank.
pub fn extract_features(
    f: &AssemblyFunction,
    client: &dyn ModelClient,
    cfg: &PromptConfig,
    policy: &RetryPolicy,
) -> Result<(FeatureSet, ClientTranscript), ExtractionError> {
    let bank = ExampleBank::bundled();
    Extractor::new(cfg.clone(), *policy, &bank).extract(f, client)
}
