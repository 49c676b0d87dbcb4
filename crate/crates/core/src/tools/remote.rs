use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::wire::{self, Envelope, Response, WirePatch};
use super::*;
use crate::gate::InFlight;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// e.g. `http://127.0.0.1:8700`
    pub base_url: String,
    pub timeout_ms: u64,
    /// Concurrent requests allowed per endpoint.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { base_url: "http://127.0.0.1:8700".into(), timeout_ms: 30_000, max_in_flight: 4 }
    }
}

/// Backend forwarding every call to a tool server.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("config", &self.config).finish()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self { config, agent, in_flight: InFlight::default() }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.base_url.trim_end_matches('/'))
    }

    /// `GET /healthz`; `Err` carries the transport failure.
    pub fn health(&self) -> Result<Json, String> {
        self.agent
            .get(&self.url(wire::HEALTH_PATH))
            .call()
            .map_err(|e| e.to_string())?
            .into_json()
            .map_err(|e| e.to_string())
    }

    fn call<T: DeserializeOwned>(&self, endpoint: &str, tool: &str, envelope: &Envelope) -> ToolResult<T> {
        let transport = |msg: String| ToolError::new(tool, format!("transport: {msg}"), false);
        let _permit = self.in_flight.acquire(endpoint, self.config.max_in_flight);
        let url = self.url(&format!("{}{endpoint}", wire::TOOL_PREFIX));
        let resp = match self.agent.post(&url).send_json(envelope) {
            Ok(r) => r,
            // 4xx/5xx still carry a protocol body
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(transport(e.to_string())),
        };
        let body: Response = resp.into_json().map_err(|e| transport(e.to_string()))?;
        match (body.ok, body.value, body.error) {
            (true, Some(v), _) => {
                serde_json::from_value(v).map_err(|e| transport(format!("unexpected value: {e}")))
            }
            (false, _, Some(err)) => {
                let message = match err.field {
                    Some(f) => format!("{} ({f})", err.message),
                    None => err.message,
                };
                Err(ToolError::new(err.tool.unwrap_or_else(|| tool.to_string()), message, err.retryable))
            }
            _ => Err(transport("malformed response".into())),
        }
    }
}

fn patches(tool: &str, wire: Vec<WirePatch>) -> ToolResult<Vec<ImagePatch>> {
    wire.iter()
        .map(|p| p.to_patch().map_err(|m| ToolError::new(tool, format!("bad patch in response: {m}"), false)))
        .collect()
}

impl ToolBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn find(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<Vec<ImagePatch>> {
        let env = wire::image_envelope(image, json!({ "query": query }), config);
        patches("find", self.call("find", "find", &env)?)
    }

    fn exists(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<bool> {
        let env = wire::image_envelope(image, json!({ "query": query }), config);
        self.call("exists", "exists", &env)
    }

    fn verify_property(&self, image: &ImagePatch, noun: &str, attribute: &str, config: &ToolConfig) -> ToolResult<bool> {
        let env = wire::image_envelope(image, json!({ "noun": noun, "attribute": attribute }), config);
        self.call("verify_property", "verify_property", &env)
    }

    fn best_image_match(&self, candidates: &[ImagePatch], query: &str, config: &ToolConfig) -> ToolResult<ImagePatch> {
        let wire: Vec<WirePatch> = candidates.iter().map(WirePatch::from).collect();
        let args = json!({ "patches": wire, "query": query });
        let env = match candidates.first() {
            Some(p) => wire::image_envelope(p, args, config),
            None => wire::bare_envelope(args, config),
        };
        let p: WirePatch = self.call("best_image_match", "best_image_match", &env)?;
        Ok(patches("best_image_match", vec![p])?.remove(0))
    }

    fn best_text_match(&self, queries: &[String], image: &ImagePatch, config: &ToolConfig) -> ToolResult<String> {
        let env = wire::image_envelope(image, json!({ "queries": queries, "source": image.source }), config);
        self.call("best_text_match", "best_text_match", &env)
    }

    fn compute_depth(&self, image: &ImagePatch) -> ToolResult<f64> {
        let env = wire::image_envelope(image, json!({}), &ToolConfig::default());
        self.call("compute_depth", "compute_depth", &env)
    }

    fn simple_query(&self, image: &ImagePatch, question: &str) -> ToolResult<String> {
        let env = wire::image_envelope(image, json!({ "question": question }), &ToolConfig::default());
        self.call("simple_query", "simple_query", &env)
    }

    fn select_answer(&self, context: &str, options: &[String]) -> ToolResult<usize> {
        let env = wire::bare_envelope(json!({ "context": context, "options": options }), &ToolConfig::default());
        self.call("select_answer", "select_answer", &env)
    }

    fn video_frames(&self, video: &VideoSegment) -> ToolResult<Vec<ImagePatch>> {
        let env = wire::video_envelope(video, json!({}), &ToolConfig::default());
        patches("frame_iterator", self.call("video_frames", "frame_iterator", &env)?)
    }

    fn locate_event(&self, video: &VideoSegment, event: &str, config: &ToolConfig) -> ToolResult<(usize, usize)> {
        let env = wire::video_envelope(video, json!({ "event": event }), config);
        let [s, e]: [usize; 2] = self.call("locate_event", "event_localization", &env)?;
        Ok((s, e))
    }

    fn caption_video(&self, video: &VideoSegment) -> ToolResult<String> {
        let env = wire::video_envelope(video, json!({}), &ToolConfig::default());
        self.call("caption_video", "caption_video", &env)
    }

    fn video_simple_query(&self, video: &VideoSegment, question: &str) -> ToolResult<String> {
        let env = wire::video_envelope(video, json!({ "question": question }), &ToolConfig::default());
        self.call("video_simple_query", "simple_query", &env)
    }
}
