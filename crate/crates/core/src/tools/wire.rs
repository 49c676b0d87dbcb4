//! JSON wire protocol for remote tool calls.
//!
//! Every call is `POST /v1/tool/{endpoint}` with a [`Envelope`] body. Image
//! tools address a patch through `scene_ref` + `patch`; video tools put the
//! video id in `scene_ref` and add `segment`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{ToolBackend, ToolConfig, ToolError, ToolResult};
use crate::scene::{BBox, ImagePatch, VideoSegment};

pub const TOOL_PREFIX: &str = "/v1/tool/";
pub const HEALTH_PATH: &str = "/healthz";

pub const IMAGE_ENDPOINTS: [&str; 8] = [
    "find",
    "exists",
    "verify_property",
    "best_image_match",
    "best_text_match",
    "compute_depth",
    "simple_query",
    "select_answer",
];

pub const VIDEO_ENDPOINTS: [&str; 4] = ["video_frames", "locate_event", "caption_video", "video_simple_query"];

pub fn endpoints() -> impl Iterator<Item = &'static str> {
    IMAGE_ENDPOINTS.into_iter().chain(VIDEO_ENDPOINTS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub scene_ref: String,
    pub patch: [f64; 4],
    #[serde(default)]
    pub args: Json,
    #[serde(default)]
    pub config: ToolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[usize; 2]>,
}

/// A patch as it travels on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirePatch {
    pub scene_ref: String,
    pub patch: [f64; 4],
    #[serde(default)]
    pub source: Option<usize>,
}

impl From<&ImagePatch> for WirePatch {
    fn from(p: &ImagePatch) -> Self {
        Self { scene_ref: p.scene_id.clone(), patch: bbox_array(&p.bbox), source: p.source }
    }
}

impl WirePatch {
    pub fn to_patch(&self) -> Result<ImagePatch, String> {
        let bbox = array_bbox(self.patch)?;
        Ok(ImagePatch { scene_id: self.scene_ref.clone(), bbox, source: self.source })
    }
}

pub fn bbox_array(b: &BBox) -> [f64; 4] {
    [b.x0(), b.y0(), b.x1(), b.y1()]
}

fn array_bbox(a: [f64; 4]) -> Result<BBox, String> {
    BBox::new(a[0], a[1], a[2], a[3]).map_err(|e| e.to_string())
}

/// Error half of a response. `tool` names the failing tool, which can differ
/// from the endpoint (e.g. `event_localization`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub class: String,
    pub retryable: bool,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl Response {
    pub fn value(value: Json) -> Self {
        Self { ok: true, value: Some(value), error: None }
    }

    pub fn tool_error(e: &ToolError) -> Self {
        Self {
            ok: false,
            value: None,
            error: Some(WireError {
                class: "ToolError".into(),
                retryable: e.retryable,
                message: e.message.clone(),
                tool: Some(e.tool.clone()),
                field: None,
            }),
        }
    }

    pub fn bad_request(field: Option<String>, message: impl Into<String>) -> Self {
        Self {
            ok: false,
            value: None,
            error: Some(WireError {
                class: "BadRequest".into(),
                retryable: false,
                message: message.into(),
                tool: None,
                field,
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

// Per-endpoint argument shapes.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryArgs {
    pub query: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyArgs {
    pub noun: String,
    pub attribute: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageMatchArgs {
    pub patches: Vec<WirePatch>,
    pub query: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextMatchArgs {
    pub queries: Vec<String>,
    #[serde(default)]
    pub source: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionArgs {
    pub question: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    pub context: String,
    pub options: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventArgs {
    pub event: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoArgs {}

struct BadRequest {
    field: Option<String>,
    message: String,
}

impl BadRequest {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: Some(field.into()), message: message.into() }
    }
}

fn from_path_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> BadRequest {
    let mut path = e.path().to_string();
    let message = e.into_inner().to_string();
    // serde reports a missing field at its parent's path
    if let Some(name) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
        path = if path == "." { name.to_string() } else { format!("{path}.{name}") };
    }
    let field = match (prefix, path.as_str()) {
        (p, ".") => p.to_string(),
        ("", p) => p.to_string(),
        (p, rest) => format!("{p}.{rest}"),
    };
    let field = if field.is_empty() { None } else { Some(field) };
    BadRequest { field, message }
}

fn parse_envelope(body: &[u8]) -> Result<Envelope, BadRequest> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| from_path_error("", e))
}

fn parse_args<T: DeserializeOwned>(args: &Json) -> Result<T, BadRequest> {
    let args = if args.is_null() { json!({}) } else { args.clone() };
    serde_path_to_error::deserialize(args).map_err(|e| from_path_error("args", e))
}

fn need_nonempty(field: &str, text: &str) -> Result<(), BadRequest> {
    if text.trim().is_empty() {
        Err(BadRequest::new(field, "must be nonempty"))
    } else {
        Ok(())
    }
}

fn envelope_patch(env: &Envelope) -> Result<ImagePatch, BadRequest> {
    array_bbox(env.patch)
        .map(|b| ImagePatch::new(env.scene_ref.clone(), b))
        .map_err(|m| BadRequest::new("patch", m))
}

fn envelope_segment(env: &Envelope) -> Result<VideoSegment, BadRequest> {
    let [start, end] = env.segment.ok_or_else(|| BadRequest::new("segment", "missing field `segment`"))?;
    if start > end {
        return Err(BadRequest::new("segment", "start after end"));
    }
    Ok(VideoSegment { video_id: env.scene_ref.clone(), start_frame: start, end_frame: end })
}

fn patches_json(patches: &[ImagePatch]) -> Json {
    serde_json::to_value(patches.iter().map(WirePatch::from).collect::<Vec<_>>()).unwrap()
}

fn dispatch(backend: &dyn ToolBackend, endpoint: &str, env: &Envelope) -> Result<ToolResult<Json>, BadRequest> {
    if let Err(m) = env.config.validate() {
        return Err(BadRequest::new("config", m));
    }
    let cfg = &env.config;
    Ok(match endpoint {
        "find" => {
            let a: QueryArgs = parse_args(&env.args)?;
            need_nonempty("args.query", &a.query)?;
            backend.find(&envelope_patch(env)?, &a.query, cfg).map(|p| patches_json(&p))
        }
        "exists" => {
            let a: QueryArgs = parse_args(&env.args)?;
            need_nonempty("args.query", &a.query)?;
            backend.exists(&envelope_patch(env)?, &a.query, cfg).map(Json::from)
        }
        "verify_property" => {
            let a: PropertyArgs = parse_args(&env.args)?;
            need_nonempty("args.noun", &a.noun)?;
            need_nonempty("args.attribute", &a.attribute)?;
            backend
                .verify_property(&envelope_patch(env)?, &a.noun, &a.attribute, cfg)
                .map(Json::from)
        }
        "best_image_match" => {
            let a: ImageMatchArgs = parse_args(&env.args)?;
            let patches = a
                .patches
                .iter()
                .enumerate()
                .map(|(i, p)| p.to_patch().map_err(|m| BadRequest::new(&format!("args.patches[{i}].patch"), m)))
                .collect::<Result<Vec<_>, _>>()?;
            backend
                .best_image_match(&patches, &a.query, cfg)
                .map(|p| serde_json::to_value(WirePatch::from(&p)).unwrap())
        }
        "best_text_match" => {
            let a: TextMatchArgs = parse_args(&env.args)?;
            let mut image = envelope_patch(env)?;
            image.source = a.source;
            backend.best_text_match(&a.queries, &image, cfg).map(Json::from)
        }
        "compute_depth" => {
            let _: NoArgs = parse_args(&env.args)?;
            backend.compute_depth(&envelope_patch(env)?).map(Json::from)
        }
        "simple_query" => {
            let a: QuestionArgs = parse_args(&env.args)?;
            backend.simple_query(&envelope_patch(env)?, &a.question).map(Json::from)
        }
        "select_answer" => {
            let a: SelectArgs = parse_args(&env.args)?;
            backend.select_answer(&a.context, &a.options).map(Json::from)
        }
        "video_frames" => {
            let _: NoArgs = parse_args(&env.args)?;
            backend.video_frames(&envelope_segment(env)?).map(|p| patches_json(&p))
        }
        "locate_event" => {
            let a: EventArgs = parse_args(&env.args)?;
            backend
                .locate_event(&envelope_segment(env)?, &a.event, cfg)
                .map(|(s, e)| json!([s, e]))
        }
        "caption_video" => {
            let _: NoArgs = parse_args(&env.args)?;
            backend.caption_video(&envelope_segment(env)?).map(Json::from)
        }
        "video_simple_query" => {
            let a: QuestionArgs = parse_args(&env.args)?;
            backend.video_simple_query(&envelope_segment(env)?, &a.question).map(Json::from)
        }
        _ => unreachable!("endpoint checked by caller"),
    })
}

/// Serves one tool request. Returns the HTTP status and the JSON body.
/// Tool failures are `200` with `ok: false`; malformed bodies are `400` and
/// name the offending field.
pub fn handle(backend: &dyn ToolBackend, endpoint: &str, body: &[u8]) -> (u16, String) {
    if !endpoints().any(|e| e == endpoint) {
        return (404, Response::bad_request(None, format!("unknown endpoint {endpoint:?}")).to_json());
    }
    let outcome = parse_envelope(body).and_then(|env| dispatch(backend, endpoint, &env));
    match outcome {
        Ok(Ok(value)) => (200, Response::value(value).to_json()),
        Ok(Err(e)) => (200, Response::tool_error(&e).to_json()),
        Err(bad) => (400, Response::bad_request(bad.field, bad.message).to_json()),
    }
}

pub fn health_body(backend: &dyn ToolBackend) -> String {
    json!({
        "ok": true,
        "backend": backend.kind(),
        "endpoints": endpoints().collect::<Vec<_>>(),
    })
    .to_string()
}

/// Builds the envelope for an image-addressed call.
pub fn image_envelope(patch: &ImagePatch, args: Json, config: &ToolConfig) -> Envelope {
    Envelope {
        scene_ref: patch.scene_id.clone(),
        patch: bbox_array(&patch.bbox),
        args,
        config: config.clone(),
        segment: None,
    }
}

pub fn video_envelope(video: &VideoSegment, args: Json, config: &ToolConfig) -> Envelope {
    Envelope {
        scene_ref: video.video_id.clone(),
        patch: [0.0; 4],
        args,
        config: config.clone(),
        segment: Some([video.start_frame, video.end_frame]),
    }
}

/// Calls without an image (`select_answer`) use an empty reference.
pub fn bare_envelope(args: Json, config: &ToolConfig) -> Envelope {
    Envelope { scene_ref: String::new(), patch: [0.0; 4], args, config: config.clone(), segment: None }
}

/// One recorded request/response pair for conformance testing of other
/// protocol implementations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenExchange {
    pub endpoint: String,
    pub request: Envelope,
    pub status: u16,
    pub response: String,
}

/// Records `handle` over the given requests.
pub fn record_golden(backend: &dyn ToolBackend, requests: Vec<(String, Envelope)>) -> Vec<GoldenExchange> {
    requests
        .into_iter()
        .map(|(endpoint, request)| {
            let body = serde_json::to_vec(&request).unwrap();
            let (status, response) = handle(backend, &endpoint, &body);
            GoldenExchange { endpoint, request, status, response }
        })
        .collect()
}

/// A deterministic request set touching every endpoint of every fixture the
/// backend knows, capped at `limit` requests.
pub fn golden_requests(backend: &super::FixtureBackend, limit: usize) -> Vec<(String, Envelope)> {
    let cfg = ToolConfig::default();
    let mut out = Vec::new();
    for scene in backend.scenes() {
        let full = scene.full_patch();
        let mut names: Vec<&str> = scene.objects.iter().map(|o| o.name.as_str()).collect();
        names.dedup();
        for name in names.iter().chain(["unicorn"].iter()) {
            out.push(("find".into(), image_envelope(&full, json!({ "query": name }), &cfg)));
            out.push(("exists".into(), image_envelope(&full, json!({ "query": name }), &cfg)));
        }
        for obj in &scene.objects {
            if let Some(attr) = obj.attributes.iter().next() {
                out.push((
                    "verify_property".into(),
                    image_envelope(&full, json!({ "noun": obj.name, "attribute": attr }), &cfg),
                ));
            }
        }
        let patches: Vec<WirePatch> = scene
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| WirePatch { scene_ref: scene.scene_id.clone(), patch: bbox_array(&o.bbox), source: Some(i) })
            .collect();
        if let Some(first) = scene.objects.first() {
            out.push((
                "best_image_match".into(),
                image_envelope(&full, json!({ "patches": patches, "query": first.name }), &cfg),
            ));
            let obj_patch = ImagePatch::new(scene.scene_id.clone(), first.bbox);
            out.push((
                "best_text_match".into(),
                image_envelope(&obj_patch, json!({ "queries": names, "source": 0 }), &cfg),
            ));
            out.push(("compute_depth".into(), image_envelope(&obj_patch, json!({}), &cfg)));
        }
        out.push(("compute_depth".into(), image_envelope(&full, json!({}), &cfg)));
        for q in scene.qa.keys().map(String::as_str).chain(["what is unknown?"]) {
            out.push(("simple_query".into(), image_envelope(&full, json!({ "question": q }), &cfg)));
        }
        if !names.is_empty() {
            out.push((
                "select_answer".into(),
                bare_envelope(json!({ "context": scene.caption, "options": names }), &cfg),
            ));
        }
    }
    for video in backend.videos() {
        let seg = video.full_segment();
        out.push(("video_frames".into(), video_envelope(&seg, json!({}), &cfg)));
        out.push(("caption_video".into(), video_envelope(&seg, json!({}), &cfg)));
        for ev in &video.events {
            out.push(("locate_event".into(), video_envelope(&seg, json!({ "event": ev.text }), &cfg)));
        }
        for q in video.qa.keys() {
            out.push(("video_simple_query".into(), video_envelope(&seg, json!({ "question": q }), &cfg)));
        }
    }
    out.truncate(limit);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SceneFixture, SceneObject};
    use crate::tools::FixtureBackend;

    fn backend() -> FixtureBackend {
        let obj = SceneObject {
            name: "cat".into(),
            bbox: BBox::new(0., 0., 10., 10.).unwrap(),
            attributes: ["black".to_string()].into_iter().collect(),
            depth: 2.0,
            confidence: 0.9,
        };
        FixtureBackend::new().with_scene(SceneFixture {
            scene_id: "s".into(),
            width: 50,
            height: 50,
            background_depth: 10.0,
            caption: "a cat".into(),
            qa: Default::default(),
            objects: vec![obj],
        })
    }

    #[test]
    fn find_roundtrip() {
        let b = backend();
        let body = r#"{"scene_ref":"s","patch":[0,0,50,50],"args":{"query":"cats"},"config":{"detection_threshold":0.1}}"#;
        let (status, out) = handle(&b, "find", body.as_bytes());
        assert_eq!(status, 200);
        assert_eq!(out, r#"{"ok":true,"value":[{"patch":[0.0,0.0,10.0,10.0],"scene_ref":"s","source":0}]}"#);
    }

    #[test]
    fn tool_error_is_ok_false() {
        let b = backend();
        let body = r#"{"scene_ref":"s","patch":[0,0,50,50],"args":{"query":"dog"}}"#;
        let (status, out) = handle(&b, "find", body.as_bytes());
        assert_eq!(status, 200);
        let r: Response = serde_json::from_str(&out).unwrap();
        assert!(!r.ok);
        let e = r.error.unwrap();
        assert_eq!(e.class, "ToolError");
        assert!(e.retryable);
    }

    #[test]
    fn malformed_names_field() {
        let b = backend();
        let (status, out) = handle(&b, "find", br#"{"scene_ref":"s","patch":[0,0,50,50],"args":{"qeury":"x"}}"#);
        assert_eq!(status, 400);
        let r: Response = serde_json::from_str(&out).unwrap();
        assert_eq!(r.error.unwrap().field.as_deref(), Some("args.qeury"));

        let (status, out) = handle(&b, "find", br#"{"scene_ref":"s","patch":[0,0,"a",50],"args":{"query":"x"}}"#);
        assert_eq!(status, 400);
        let r: Response = serde_json::from_str(&out).unwrap();
        assert_eq!(r.error.unwrap().field.as_deref(), Some("patch[2]"));

        let (status, out) = handle(&b, "find", br#"{"scene_ref":"s","patch":[0,0,50,50],"args":{"query":""}}"#);
        assert_eq!(status, 400);
        assert!(out.contains("args.query"));

        let (status, _) = handle(&b, "teleport", b"{}");
        assert_eq!(status, 404);
    }

    #[test]
    fn golden_set_covers_endpoints() {
        let b = backend();
        let golden = record_golden(&b, golden_requests(&b, 50));
        assert!(golden.iter().all(|g| g.status == 200));
        for e in ["find", "exists", "verify_property", "best_image_match", "compute_depth", "simple_query", "select_answer"] {
            assert!(golden.iter().any(|g| g.endpoint == e), "{e}");
        }
    }
}
