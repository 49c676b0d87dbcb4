//! Geometry primitives and the synthetic scene fixtures every tool backend
//! answers from.
//!
//! Coordinates are pixels with the origin at the top-left corner and `y`
//! growing downward.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned box `[x0, y0, x1, y1]` with `x0 <= x1` and `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid box [{x0}, {y0}, {x1}, {y1}]: {reason}")]
pub struct BoxError {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub reason: &'static str,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, BoxError> {
        let err = |reason| BoxError { x0, y0, x1, y1, reason };
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(err("coordinates must be finite"));
        }
        if x0 > x1 || y0 > y1 {
            return Err(err("expected x0 <= x1 and y0 <= y1"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Overlapping region, or `None` when the boxes are disjoint. Touching
    /// boxes yield a zero-area intersection.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 <= x1 && y0 <= y1).then_some(BBox { x0, y0, x1, y1 })
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Intersection and union areas. For integer coordinates both values are
    /// exact integers.
    pub fn overlap_parts(&self, other: &BBox) -> (f64, f64) {
        let inter = self.intersection_area(other);
        (inter, self.area() + other.area() - inter)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = BoxError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Intersection over union. Two zero-area boxes score 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (inter, union) = a.overlap_parts(b);
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Euclidean distance between the closest points of two boxes; 0 when they
/// overlap or touch.
pub fn box_distance(a: &BBox, b: &BBox) -> f64 {
    let dx = (b.x0 - a.x1).max(a.x0 - b.x1).max(0.0);
    let dy = (b.y0 - a.y1).max(a.y0 - b.y1).max(0.0);
    dx.hypot(dy)
}

/// A rectangular region of a scene. `source` is fixture provenance (the
/// index of the detected object) and is never visible to programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePatch {
    pub scene_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

impl ImagePatch {
    pub fn new(scene_id: impl Into<String>, bbox: BBox) -> Self {
        Self { scene_id: scene_id.into(), bbox, source: None }
    }

    pub fn with_source(mut self, source: usize) -> Self {
        self.source = Some(source);
        self
    }

    pub fn left(&self) -> f64 {
        self.bbox.x0
    }
    pub fn right(&self) -> f64 {
        self.bbox.x1
    }
    pub fn upper(&self) -> f64 {
        self.bbox.y0
    }
    pub fn lower(&self) -> f64 {
        self.bbox.y1
    }
    pub fn width(&self) -> f64 {
        self.bbox.width()
    }
    pub fn height(&self) -> f64 {
        self.bbox.height()
    }
    pub fn horizontal_center(&self) -> f64 {
        (self.left() + self.right()) / 2.0
    }
    pub fn vertical_center(&self) -> f64 {
        (self.upper() + self.lower()) / 2.0
    }

    /// Same scene and same box, ignoring provenance.
    pub fn same_region(&self, other: &ImagePatch) -> bool {
        self.scene_id == other.scene_id && self.bbox == other.bbox
    }
}

/// Contiguous inclusive frame range of a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSegment {
    pub video_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl VideoSegment {
    pub fn new(
        video_id: impl Into<String>,
        start_frame: usize,
        end_frame: usize,
        video_len: usize,
    ) -> Result<Self, String> {
        if start_frame > end_frame || end_frame >= video_len {
            return Err(format!(
                "segment [{start_frame}, {end_frame}] outside video of {video_len} frames"
            ));
        }
        Ok(Self { video_id: video_id.into(), start_frame, end_frame })
    }

    pub fn num_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> {
        self.start_frame..=self.end_frame
    }
}

/// Scene id under which frame `index` of a video is registered.
pub fn frame_scene_id(video_id: &str, index: usize) -> String {
    format!("{video_id}#{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: BTreeSet<String>,
    /// Metric-like distance to the camera; smaller is closer.
    pub depth: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFixture {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    pub background_depth: f64,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub qa: BTreeMap<String, String>,
    pub objects: Vec<SceneObject>,
}

impl SceneFixture {
    pub fn bounds(&self) -> BBox {
        BBox { x0: 0.0, y0: 0.0, x1: self.width as f64, y1: self.height as f64 }
    }

    pub fn full_patch(&self) -> ImagePatch {
        ImagePatch::new(self.scene_id.clone(), self.bounds())
    }

    /// Answer lookup by normalized question.
    pub fn lookup_qa(&self, question: &str) -> Option<&str> {
        lookup_normalized(&self.qa, question)
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        validate_scene(self, "")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEvent {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFixture {
    pub video_id: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub qa: BTreeMap<String, String>,
    pub frames: Vec<SceneFixture>,
    #[serde(default)]
    pub events: Vec<VideoEvent>,
}

impl VideoFixture {
    pub fn full_segment(&self) -> VideoSegment {
        VideoSegment {
            video_id: self.video_id.clone(),
            start_frame: 0,
            end_frame: self.frames.len().saturating_sub(1),
        }
    }

    pub fn lookup_qa(&self, question: &str) -> Option<&str> {
        lookup_normalized(&self.qa, question)
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        if self.frames.is_empty() {
            return Err(FixtureError::field("frames", "video needs at least one frame"));
        }
        check_qa_keys(&self.qa, "qa")?;
        for (i, frame) in self.frames.iter().enumerate() {
            validate_scene(frame, &format!("frames[{i}]."))?;
        }
        let last = self.frames.len() - 1;
        for (i, ev) in self.events.iter().enumerate() {
            if ev.start > ev.end || ev.end > last {
                return Err(FixtureError::field(
                    format!("events[{i}]"),
                    format!("interval [{}, {}] outside frames [0, {last}]", ev.start, ev.end),
                ));
            }
        }
        Ok(())
    }
}

/// Either kind of fixture file.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Scene(SceneFixture),
    Video(VideoFixture),
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid fixture field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl FixtureError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        FixtureError::Field { field: field.into(), message: message.into() }
    }

    pub fn field_name(&self) -> Option<&str> {
        match self {
            FixtureError::Field { field, .. } => Some(field),
            FixtureError::Io { .. } => None,
        }
    }
}

/// Lowercase and trim, the normalization used for question lookup.
pub fn normalize_question(text: &str) -> String {
    text.trim().to_lowercase()
}

fn lookup_normalized<'a>(qa: &'a BTreeMap<String, String>, question: &str) -> Option<&'a str> {
    let wanted = normalize_question(question);
    qa.iter()
        .find(|(k, _)| normalize_question(k) == wanted)
        .map(|(_, v)| v.as_str())
}

fn check_qa_keys(qa: &BTreeMap<String, String>, field: &str) -> Result<(), FixtureError> {
    let mut seen = BTreeSet::new();
    for key in qa.keys() {
        if !seen.insert(normalize_question(key)) {
            return Err(FixtureError::field(
                field,
                format!("duplicate question after normalization: {key:?}"),
            ));
        }
    }
    Ok(())
}

fn validate_scene(scene: &SceneFixture, prefix: &str) -> Result<(), FixtureError> {
    if scene.width == 0 || scene.height == 0 {
        return Err(FixtureError::field(format!("{prefix}width"), "scene must be non-empty"));
    }
    if !(scene.background_depth.is_finite() && scene.background_depth >= 0.0) {
        return Err(FixtureError::field(
            format!("{prefix}background_depth"),
            "must be finite and nonnegative",
        ));
    }
    check_qa_keys(&scene.qa, &format!("{prefix}qa"))?;
    let bounds = scene.bounds();
    for (i, obj) in scene.objects.iter().enumerate() {
        let at = |f: &str| format!("{prefix}objects[{i}].{f}");
        if obj.name.trim().is_empty() {
            return Err(FixtureError::field(at("name"), "empty name"));
        }
        if !bounds.contains(&obj.bbox) {
            return Err(FixtureError::field(
                at("box"),
                format!("{} exceeds scene bounds {}", obj.bbox, bounds),
            ));
        }
        if !(obj.depth.is_finite() && obj.depth >= 0.0) {
            return Err(FixtureError::field(at("depth"), "must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&obj.confidence) {
            return Err(FixtureError::field(at("confidence"), "must lie in [0, 1]"));
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, FixtureError> {
    std::fs::read_to_string(path)
        .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })
}

fn decode<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, FixtureError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        let message = e.into_inner().to_string();
        // serde reports a missing field at its parent's path
        if let Some(name) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            field = if field == "." { name.to_string() } else { format!("{field}.{name}") };
        }
        FixtureError::field(field, message)
    })
}

pub fn parse_scene_fixture(text: &str) -> Result<SceneFixture, FixtureError> {
    let scene: SceneFixture = decode(text)?;
    scene.validate()?;
    Ok(scene)
}

pub fn parse_video_fixture(text: &str) -> Result<VideoFixture, FixtureError> {
    let video: VideoFixture = decode(text)?;
    video.validate()?;
    Ok(video)
}

pub fn load_scene_fixture(path: impl AsRef<Path>) -> Result<SceneFixture, FixtureError> {
    parse_scene_fixture(&read(path.as_ref())?)
}

pub fn load_video_fixture(path: impl AsRef<Path>) -> Result<VideoFixture, FixtureError> {
    parse_video_fixture(&read(path.as_ref())?)
}

/// Loads a scene or video fixture, telling them apart by the `frames` key.
pub fn load_fixture(path: impl AsRef<Path>) -> Result<Fixture, FixtureError> {
    let text = read(path.as_ref())?;
    let probe: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| FixtureError::field("", format!("not JSON: {e}")))?;
    if probe.get("frames").is_some() {
        parse_video_fixture(&text).map(Fixture::Video)
    } else {
        parse_scene_fixture(&text).map(Fixture::Scene)
    }
}
