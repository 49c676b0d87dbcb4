//! Vision tool functions behind a pluggable backend.
//!
//! [`FixtureBackend`] answers from scene fixtures deterministically;
//! [`RemoteBackend`] forwards every call over the JSON wire protocol in
//! [`wire`].

mod fixture;
mod remote;
pub mod server;
pub mod wire;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::VplError;
use crate::scene::{ImagePatch, VideoSegment};

pub use fixture::FixtureBackend;
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub detection_threshold: f64,
    pub text_match_threshold: f64,
    /// An empty `find` raises a retryable error instead of returning `[]`.
    pub strict_find: bool,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self { detection_threshold: 0.1, text_match_threshold: 0.5, strict_find: true }
    }
}

impl ToolConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("detection_threshold", self.detection_threshold),
            ("text_match_threshold", self.text_match_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    pub fn with_detection_threshold(&self, t: f64) -> Self {
        Self { detection_threshold: t, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{tool}: {message}")]
pub struct ToolError {
    pub tool: String,
    pub message: String,
    pub retryable: bool,
}

impl ToolError {
    pub fn new(tool: impl Into<String>, message: impl Into<String>, retryable: bool) -> Self {
        Self { tool: tool.into(), message: message.into(), retryable }
    }
}

impl From<ToolError> for VplError {
    fn from(e: ToolError) -> Self {
        VplError::tool(e.tool, e.message, e.retryable)
    }
}

pub type ToolResult<T> = Result<T, ToolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Fixture,
    Remote,
}

/// One entry per tool operation. Implementations must tolerate concurrent
/// calls.
pub trait ToolBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Detected objects named `query` inside `image`, clipped to it, highest
    /// confidence first.
    fn find(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<Vec<ImagePatch>>;
    fn exists(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<bool>;
    fn verify_property(
        &self,
        image: &ImagePatch,
        noun: &str,
        attribute: &str,
        config: &ToolConfig,
    ) -> ToolResult<bool>;
    fn best_image_match(
        &self,
        patches: &[ImagePatch],
        query: &str,
        config: &ToolConfig,
    ) -> ToolResult<ImagePatch>;
    fn best_text_match(&self, queries: &[String], image: &ImagePatch, config: &ToolConfig) -> ToolResult<String>;
    /// Median depth of the region; smaller is closer.
    fn compute_depth(&self, image: &ImagePatch) -> ToolResult<f64>;
    fn simple_query(&self, image: &ImagePatch, question: &str) -> ToolResult<String>;
    fn select_answer(&self, context: &str, options: &[String]) -> ToolResult<usize>;

    /// Whole-frame patches of a segment in ascending frame order.
    fn video_frames(&self, video: &VideoSegment) -> ToolResult<Vec<ImagePatch>>;
    /// Absolute `[start, end]` frames of the first event matching `event`
    /// that overlaps the segment.
    fn locate_event(&self, video: &VideoSegment, event: &str, config: &ToolConfig) -> ToolResult<(usize, usize)>;
    fn caption_video(&self, video: &VideoSegment) -> ToolResult<String>;
    fn video_simple_query(&self, video: &VideoSegment, question: &str) -> ToolResult<String>;
}

/// Lowercase, trim, and fold a single trailing plural `s`.
pub fn normalize_name(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    match lower.strip_suffix('s') {
        Some(stem) if !stem.is_empty() => stem.to_string(),
        _ => lower,
    }
}

/// Case-folded word set.
pub fn word_set(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_overlap(a: &str, b: &str) -> usize {
    let a = word_set(a);
    word_set(b).iter().filter(|w| a.contains(*w)).count()
}

/// Index of the highest-scoring item; ties go to the earliest.
pub fn argmax_first<I: IntoIterator<Item = usize>>(scores: I) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}
