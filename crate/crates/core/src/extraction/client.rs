use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::analyzer::{guess_arch, heuristic_features};
use super::{ClientError, CompletionRequest};
use crate::corpus::{Arch, Instruction};
use crate::schema::Field;

/// The model-client contract: one completion per request, raw text back.
pub trait ModelClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    /// Reads `ASMSIEVE_LLM_URL`, `ASMSIEVE_LLM_KEY` and `ASMSIEVE_LLM_MODEL`.
    pub fn from_env() -> Result<Self, ClientError> {
        let url = std::env::var("ASMSIEVE_LLM_URL")
            .map_err(|_| ClientError::Config("ASMSIEVE_LLM_URL is not set".into()))?;
        Ok(HttpConfig {
            url,
            api_key: std::env::var("ASMSIEVE_LLM_KEY").ok(),
            model: std::env::var("ASMSIEVE_LLM_MODEL").ok(),
            timeout: Duration::from_secs(120),
        })
    }
}

/// Chat-completions style endpoint.
pub struct HttpClient {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        HttpClient { config, agent }
    }

    fn body(&self, request: &CompletionRequest<'_>) -> Value {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut body = json!({
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(model) = &self.config.model {
            body["model"] = json!(model);
        }
        body
    }
}

impl ModelClient for HttpClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.body(request))
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Transport(format!("unreadable reply: {e}")))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Transport("reply has no choices[0].message.content".into()))
    }
}

/// Replays a fixed list of responses in order, recording the temperatures it
/// was called with. `Err` entries become transport errors.
pub struct ScriptedClient {
    responses: Mutex<VecDeque<Result<String, String>>>,
    temperatures: Mutex<Vec<f64>>,
}

impl ScriptedClient {
    pub fn new(responses: Vec<Result<String, String>>) -> Self {
        ScriptedClient {
            responses: Mutex::new(responses.into()),
            temperatures: Mutex::new(Vec::new()),
        }
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.temperatures.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ModelClient for ScriptedClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        self.temperatures
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.temperature);
        match self.responses.lock().unwrap_or_else(|e| e.into_inner()).pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(msg)) => Err(ClientError::Transport(msg)),
            None => Err(ClientError::Transport("script exhausted".into())),
        }
    }
}

/// Answers prompts with the heuristic analyzer. Reads the last fenced `asm`
/// block of the user text and returns the requested fields as JSON.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticClient;

fn last_asm_block(user: &str) -> Option<(Option<Arch>, Vec<Instruction>)> {
    let start = user.rfind("```asm\n")? + "```asm\n".len();
    let end = start + user[start..].find("```")?;
    let mut arch = None;
    let mut ins = Vec::new();
    for line in user[start..end].lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix(';') {
            if arch.is_none() && ins.is_empty() {
                arch = c.trim().parse().ok();
            }
            continue;
        }
        ins.push(Instruction::parse(t));
    }
    Some((arch, ins))
}

fn requested_fields(user: &str) -> Vec<Field> {
    user.lines()
        .rev()
        .find_map(|l| l.strip_prefix("Report these fields: "))
        .map(|list| list.split(", ").filter_map(Field::from_name).collect())
        .unwrap_or_else(|| Field::ALL.to_vec())
}

impl ModelClient for StaticClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        let (arch, ins) = last_asm_block(request.user)
            .ok_or_else(|| ClientError::Transport("prompt has no asm block".into()))?;
        let arch = arch.unwrap_or_else(|| guess_arch(&ins));
        let fs = heuristic_features(&arch, &ins);
        let fields = requested_fields(request.user);
        let obj: serde_json::Map<String, Value> = fields
            .iter()
            .filter_map(|f| fs.get(*f).map(|v| (f.name().to_string(), v.to_json())))
            .collect();
        Ok(Value::Object(obj).to_string())
    }
}
