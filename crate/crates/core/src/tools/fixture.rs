use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::*;
use crate::scene::{frame_scene_id, load_fixture, BBox, Fixture, FixtureError, SceneFixture, SceneObject, VideoFixture};

/// Deterministic backend answering every tool call from scene fixtures.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    scenes: BTreeMap<String, Arc<SceneFixture>>,
    videos: BTreeMap<String, Arc<VideoFixture>>,
}

fn unknown(tool: &str, what: &str, id: &str) -> ToolError {
    ToolError::new(tool, format!("unknown {what} {id:?}"), false)
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_scene(mut self, scene: SceneFixture) -> Self {
        self.add_scene(scene);
        self
    }

    pub fn with_video(mut self, video: VideoFixture) -> Self {
        self.add_video(video);
        self
    }

    pub fn add_scene(&mut self, scene: SceneFixture) {
        self.scenes.insert(scene.scene_id.clone(), Arc::new(scene));
    }

    /// Registers a video and each of its frames under [`frame_scene_id`].
    pub fn add_video(&mut self, video: VideoFixture) {
        for (i, frame) in video.frames.iter().enumerate() {
            let mut frame = frame.clone();
            frame.scene_id = frame_scene_id(&video.video_id, i);
            self.add_scene(frame);
        }
        self.videos.insert(video.video_id.clone(), Arc::new(video));
    }

    pub fn add_fixture(&mut self, fixture: Fixture) {
        match fixture {
            Fixture::Scene(s) => self.add_scene(s),
            Fixture::Video(v) => self.add_video(v),
        }
    }

    /// Loads every `*.json` fixture in a directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir)
            .map_err(|source| FixtureError::Io { path: dir.display().to_string(), source })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut backend = Self::new();
        for p in paths {
            backend.add_fixture(load_fixture(&p)?);
        }
        Ok(backend)
    }

    pub fn scene(&self, id: &str) -> Option<&SceneFixture> {
        self.scenes.get(id).map(Arc::as_ref)
    }

    pub fn video(&self, id: &str) -> Option<&VideoFixture> {
        self.videos.get(id).map(Arc::as_ref)
    }

    pub fn scenes(&self) -> impl Iterator<Item = &SceneFixture> {
        self.scenes.values().map(Arc::as_ref)
    }

    pub fn videos(&self) -> impl Iterator<Item = &VideoFixture> {
        self.videos.values().map(Arc::as_ref)
    }

    fn scene_for(&self, tool: &str, patch: &ImagePatch) -> ToolResult<&SceneFixture> {
        self.scene(&patch.scene_id).ok_or_else(|| unknown(tool, "scene", &patch.scene_id))
    }

    fn video_for(&self, tool: &str, seg: &VideoSegment) -> ToolResult<&VideoFixture> {
        let video = self.video(&seg.video_id).ok_or_else(|| unknown(tool, "video", &seg.video_id))?;
        if seg.start_frame > seg.end_frame || seg.end_frame >= video.frames.len() {
            return Err(ToolError::new(tool, "segment outside video", false));
        }
        Ok(video)
    }

    /// Matches for `query` regardless of strictness.
    fn detect(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<Vec<ImagePatch>> {
        let scene = self.scene_for("find", image)?;
        let wanted = normalize_name(query);
        if wanted.is_empty() {
            return Err(ToolError::new("find", "empty query", false));
        }
        let mut hits: Vec<(usize, &SceneObject, BBox)> = scene
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| normalize_name(&o.name) == wanted && o.confidence >= config.detection_threshold)
            .filter_map(|(i, o)| {
                o.bbox
                    .intersection(&image.bbox)
                    .filter(|b| b.area() > 0.0)
                    .map(|clipped| (i, o, clipped))
            })
            .collect();
        hits.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));
        Ok(hits
            .into_iter()
            .map(|(i, _, clipped)| ImagePatch::new(image.scene_id.clone(), clipped).with_source(i))
            .collect())
    }

    /// The object a patch shows: its recorded source, otherwise the object
    /// with the highest IoU.
    fn underlying<'s>(&self, scene: &'s SceneFixture, patch: &ImagePatch) -> Option<&'s SceneObject> {
        if let Some(obj) = patch.source.and_then(|i| scene.objects.get(i)) {
            return Some(obj);
        }
        let mut best: Option<(f64, &SceneObject)> = None;
        for obj in &scene.objects {
            let score = crate::scene::iou(&obj.bbox, &patch.bbox);
            if score > 0.0 && best.map_or(true, |(b, _)| score > b) {
                best = Some((score, obj));
            }
        }
        best.map(|(_, o)| o)
    }

    fn description(&self, tool: &str, patch: &ImagePatch) -> ToolResult<String> {
        let scene = self.scene_for(tool, patch)?;
        Ok(self
            .underlying(scene, patch)
            .map(|o| {
                let mut text = o.name.clone();
                for a in &o.attributes {
                    text.push(' ');
                    text.push_str(a);
                }
                text
            })
            .unwrap_or_default())
    }
}

impl ToolBackend for FixtureBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Fixture
    }

    fn find(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<Vec<ImagePatch>> {
        let hits = self.detect(image, query, config)?;
        if hits.is_empty() && config.strict_find {
            return Err(ToolError::new(
                "find",
                format!("no detections above threshold for {query:?}"),
                true,
            ));
        }
        Ok(hits)
    }

    fn exists(&self, image: &ImagePatch, query: &str, config: &ToolConfig) -> ToolResult<bool> {
        self.detect(image, query, config)
            .map(|hits| !hits.is_empty())
            .map_err(|e| ToolError { tool: "exists".into(), ..e })
    }

    fn verify_property(&self, image: &ImagePatch, noun: &str, attribute: &str, config: &ToolConfig) -> ToolResult<bool> {
        let attr = attribute.trim().to_lowercase();
        if attr.is_empty() {
            return Err(ToolError::new("verify_property", "empty attribute", false));
        }
        let scene = self.scene_for("verify_property", image)?;
        let hits = self
            .detect(image, noun, config)
            .map_err(|e| ToolError { tool: "verify_property".into(), ..e })?;
        Ok(hits.iter().any(|h| {
            h.source
                .and_then(|i| scene.objects.get(i))
                .is_some_and(|o| o.attributes.iter().any(|a| a.to_lowercase() == attr))
        }))
    }

    fn best_image_match(&self, patches: &[ImagePatch], query: &str, _config: &ToolConfig) -> ToolResult<ImagePatch> {
        if patches.is_empty() {
            return Err(ToolError::new("best_image_match", "empty patch list", false));
        }
        let scores = patches
            .iter()
            .map(|p| self.description("best_image_match", p).map(|d| token_overlap(query, &d)))
            .collect::<ToolResult<Vec<_>>>()?;
        Ok(patches[argmax_first(scores).unwrap()].clone())
    }

    fn best_text_match(&self, queries: &[String], image: &ImagePatch, _config: &ToolConfig) -> ToolResult<String> {
        if queries.is_empty() {
            return Err(ToolError::new("best_text_match", "empty query list", false));
        }
        let desc = self.description("best_text_match", image)?;
        let best = argmax_first(queries.iter().map(|q| token_overlap(q, &desc))).unwrap();
        Ok(queries[best].clone())
    }

    fn compute_depth(&self, image: &ImagePatch) -> ToolResult<f64> {
        let scene = self.scene_for("compute_depth", image)?;
        let mut weighted: Vec<(f64, f64)> = scene
            .objects
            .iter()
            .map(|o| (o.depth, o.bbox.intersection_area(&image.bbox)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        if weighted.is_empty() {
            return Ok(scene.background_depth);
        }
        weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        for (depth, w) in &weighted {
            acc += w;
            if acc >= total / 2.0 {
                return Ok(*depth);
            }
        }
        Ok(weighted.last().unwrap().0)
    }

    fn simple_query(&self, image: &ImagePatch, question: &str) -> ToolResult<String> {
        let scene = self.scene_for("simple_query", image)?;
        Ok(scene.lookup_qa(question).unwrap_or(&scene.caption).to_string())
    }

    fn select_answer(&self, context: &str, options: &[String]) -> ToolResult<usize> {
        argmax_first(options.iter().map(|o| token_overlap(context, o)))
            .ok_or_else(|| ToolError::new("select_answer", "empty option list", false))
    }

    fn video_frames(&self, video: &VideoSegment) -> ToolResult<Vec<ImagePatch>> {
        let fixture = self.video_for("frame_iterator", video)?;
        Ok(video
            .frame_indices()
            .map(|i| {
                let mut patch = fixture.frames[i].full_patch();
                patch.scene_id = frame_scene_id(&fixture.video_id, i);
                patch
            })
            .collect())
    }

    fn locate_event(&self, video: &VideoSegment, event: &str, config: &ToolConfig) -> ToolResult<(usize, usize)> {
        let fixture = self.video_for("event_localization", video)?;
        let query = word_set(event);
        if !query.is_empty() {
            for ev in &fixture.events {
                let overlaps_segment = ev.start <= video.end_frame && ev.end >= video.start_frame;
                let shared = word_set(&ev.text).intersection(&query).count();
                let fraction = shared as f64 / query.len() as f64;
                if overlaps_segment && fraction >= config.text_match_threshold {
                    return Ok((ev.start, ev.end));
                }
            }
        }
        Err(ToolError::new("event_localization", format!("event not found: {event:?}"), false))
    }

    fn caption_video(&self, video: &VideoSegment) -> ToolResult<String> {
        Ok(self.video_for("caption_video", video)?.caption.clone())
    }

    fn video_simple_query(&self, video: &VideoSegment, question: &str) -> ToolResult<String> {
        let fixture = self.video_for("simple_query", video)?;
        Ok(fixture.lookup_qa(question).unwrap_or(&fixture.caption).to_string())
    }
}
