use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GenerationRequest, Generator, GeneratorError};
use crate::gate::InFlight;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; requests go to `{url}/v1/generate`.
    pub url: String,
    /// Environment variable holding the bearer token. Unset or empty sends
    /// no Authorization header.
    pub token_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8800".into(),
            token_env: "VPE_GENERATOR_TOKEN".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

#[derive(Deserialize)]
struct GenerateResponse {
    code: String,
}

pub struct HttpGenerator {
    config: HttpConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl std::fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpGenerator").field("config", &self.config).finish()
    }
}

impl HttpGenerator {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self { config, agent, in_flight: InFlight::default() }
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/generate", self.config.url.trim_end_matches('/'))
    }

    fn attempt(&self, r: &GenerationRequest) -> Result<String, GeneratorError> {
        let mut req = self.agent.post(&self.endpoint());
        if let Ok(token) = std::env::var(&self.config.token_env) {
            if !token.is_empty() {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
        }
        let body = json!({
            "prompt": r.prompt,
            "temperature": r.config.temperature,
            "seed": r.config.seed,
            "max_tokens": r.config.max_output_tokens,
        });
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<GenerateResponse>()
                .map(|g| g.code)
                .map_err(|e| GeneratorError::Transport { message: format!("bad response body: {e}"), retryable: false }),
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                Err(GeneratorError::Transport {
                    message: format!("status {code}: {detail}"),
                    retryable: code == 429 || code >= 500,
                })
            }
            Err(e) => Err(GeneratorError::Transport { message: e.to_string(), retryable: true }),
        }
    }
}

impl Generator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}", self.config.url)
    }

    fn generate(&self, r: &GenerationRequest) -> Result<String, GeneratorError> {
        let _permit = self.in_flight.acquire("generate", self.config.max_in_flight);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut tries = 0;
        loop {
            match self.attempt(r) {
                Err(e) if e.is_retryable() && tries < self.config.max_retries => {
                    log::warn!("{e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
                other => return other,
            }
        }
    }
}
