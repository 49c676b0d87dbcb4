//! Prompt assembly and code generation.

mod http;
mod mock;
mod prompt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpConfig, HttpGenerator};
pub use mock::{MockGenerator, MockRule, MockScript};
pub use prompt::{assemble_debug_prompt, assemble_prompt, assemble_with, Ice, PromptBundle, Template, PLACEHOLDERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub seed: u64,
    pub max_output_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { temperature: 0.4, seed: 0, max_output_tokens: 1024 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

/// One call to a generator. `template_id`, `query` and `ice_count` travel
/// alongside the rendered prompt so scripted generators can key on them.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub template_id: String,
    pub query: String,
    pub ice_count: usize,
    pub config: GenerationConfig,
}

impl GenerationRequest {
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.template_id, &self.query, self.ice_count, self.config.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("generator configuration error: {0}")]
    Config(String),
}

impl GeneratorError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GeneratorError::Transport { retryable: true, .. })
    }
}

pub trait Generator: Send + Sync {
    /// Recorded in reports and ACE store metadata.
    fn id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<String, GeneratorError>;
}

/// Stable hash of what identifies a scripted response. Deliberately excludes
/// the API text so listing edits do not invalidate scripts.
pub fn fingerprint(template_id: &str, query: &str, ice_count: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    for part in [template_id, query, &ice_count.to_string(), &seed.to_string()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Unwraps a fenced block and drops prose before the program.
pub fn strip_code(raw: &str) -> String {
    let mut code = raw;
    if let Some(start) = raw.find("```") {
        let after = &raw[start + 3..];
        // skip the language tag line
        let body = after.find('\n').map_or("", |i| &after[i + 1..]);
        code = body.find("```").map_or(body, |end| &body[..end]);
    }
    let lines: Vec<&str> = code.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.trim_start().starts_with("def execute_command"))
        .unwrap_or(0);
    let mut out = lines[start..].join("\n");
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Generates and strips code.
pub fn generate_code(generator: &dyn Generator, request: &GenerationRequest) -> Result<String, GeneratorError> {
    request.config.validate().map_err(GeneratorError::Config)?;
    generator.generate(request).map(|raw| strip_code(&raw))
}
