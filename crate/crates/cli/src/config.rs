//! Optional TOML settings file. Command-line flags override it.
//!
//! ```toml
//! [prompt]
//! num_examples = 3
//! sections = ["TypeSignature", "LogicOperations", "NotableConstants", "SideEffects", "Categorization"]
//! include_schema_in_prompt = false
//! system_prompt_enabled = true
//!
//! [retry]
//! max_retries = 3
//! base_temperature = 0.2
//! temperature_step = 0.2
//!
//! [flatten]
//! bucket_counts = false
//! atomic_arrays = false
//! excluded_fields = []
//!
//! [search]
//! k = 10
//! k1 = 100
//! k2 = 10
//!
//! [llm]
//! url = "http://localhost:8080/v1/chat/completions"
//! model = "my-model"
//! max_tokens = 512
//! timeout_secs = 120
//! ```
//!
//! The API key is only read from `ASMSIEVE_LLM_KEY`.

use std::path::Path;

use anyhow::Context;
use asmsieve::extraction::{PromptConfig, RetryPolicy};
use asmsieve::similarity::FlattenOptions;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub prompt: PromptConfig,
    pub retry: RetryPolicy,
    pub flatten: FlattenOptions,
    pub search: SearchSettings,
    pub llm: LlmSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings { k: 10, k1: 100, k2: 10 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub url: Option<String>,
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
