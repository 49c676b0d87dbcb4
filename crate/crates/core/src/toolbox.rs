//! Binds tool backends and routines to the names programs call.

use crate::api::ApiVariant;
use crate::lang::{ToolDispatch, Value, VplError};
use crate::routines::{self, Direction, TemporalWindow};
use crate::scene::{box_distance, ImagePatch, VideoSegment};
use crate::tools::{ToolBackend, ToolConfig};

type CallResult = Result<Value, VplError>;

/// Dispatch table for one program execution.
pub struct Toolbox<'a> {
    backend: &'a dyn ToolBackend,
    config: ToolConfig,
    api: ApiVariant,
}

impl<'a> Toolbox<'a> {
    pub fn new(backend: &'a dyn ToolBackend, config: ToolConfig, api: ApiVariant) -> Self {
        Self { backend, config, api }
    }

    pub fn config(&self) -> &ToolConfig {
        &self.config
    }

    pub fn api(&self) -> ApiVariant {
        self.api
    }
}

/// Positional and keyword arguments matched against parameter names.
struct Args {
    tool: String,
    slots: Vec<Option<Value>>,
}

impl Args {
    fn bind(tool: &str, params: &[&str], args: Vec<Value>, kwargs: Vec<(String, Value)>) -> Result<Self, VplError> {
        if args.len() > params.len() {
            return Err(VplError::type_error(format!(
                "{tool}() takes {} arguments, got {}",
                params.len(),
                args.len()
            )));
        }
        let mut slots: Vec<Option<Value>> = vec![None; params.len()];
        for (i, a) in args.into_iter().enumerate() {
            slots[i] = Some(a);
        }
        for (k, v) in kwargs {
            let Some(i) = params.iter().position(|p| *p == k) else {
                return Err(VplError::type_error(format!("{tool}() got an unexpected keyword argument {k:?}")));
            };
            if slots[i].is_some() {
                return Err(VplError::type_error(format!("{tool}() got multiple values for {k:?}")));
            }
            slots[i] = Some(v);
        }
        if let Some(i) = slots.iter().position(Option::is_none) {
            return Err(VplError::type_error(format!("{tool}() missing argument {:?}", params[i])));
        }
        Ok(Self { tool: tool.to_string(), slots })
    }

    fn take(&mut self, i: usize) -> Value {
        self.slots[i].take().expect("bound")
    }

    fn wrong(&self, what: &str, got: &Value) -> VplError {
        VplError::type_error(format!("{}() expects {what}, got {}", self.tool, got.type_name()))
    }

    fn patch(&mut self, i: usize) -> Result<ImagePatch, VplError> {
        match self.take(i) {
            Value::Patch(p) => Ok(p),
            other => Err(self.wrong("an image patch", &other)),
        }
    }

    fn video(&mut self, i: usize) -> Result<VideoSegment, VplError> {
        match self.take(i) {
            Value::Video(v) => Ok(v),
            other => Err(self.wrong("a video segment", &other)),
        }
    }

    fn text(&mut self, i: usize) -> Result<String, VplError> {
        match self.take(i) {
            Value::Str(s) => Ok(s),
            other => Err(self.wrong("text", &other)),
        }
    }

    fn texts(&mut self, i: usize) -> Result<Vec<String>, VplError> {
        match self.take(i) {
            Value::List(items) => items
                .into_iter()
                .map(|v| match v {
                    Value::Str(s) => Ok(s),
                    other => Err(self.wrong("a list of text", &other)),
                })
                .collect(),
            other => Err(self.wrong("a list of text", &other)),
        }
    }

    fn patches(&mut self, i: usize) -> Result<Vec<ImagePatch>, VplError> {
        match self.take(i) {
            Value::List(items) => items
                .into_iter()
                .map(|v| match v {
                    Value::Patch(p) => Ok(p),
                    other => Err(self.wrong("a list of image patches", &other)),
                })
                .collect(),
            other => Err(self.wrong("a list of image patches", &other)),
        }
    }

    /// Accepts `(list, patch)` in either order, as generated code mixes them.
    fn patches_and_anchor(&mut self) -> Result<(Vec<ImagePatch>, ImagePatch), VplError> {
        if matches!(self.slots[0], Some(Value::Patch(_))) && matches!(self.slots[1], Some(Value::List(_))) {
            self.slots.swap(0, 1);
        }
        Ok((self.patches(0)?, self.patch(1)?))
    }
}

fn patch_list(ps: Vec<ImagePatch>) -> Value {
    Value::List(ps.into_iter().map(Value::Patch).collect())
}

impl Toolbox<'_> {
    fn dispatch(&self, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> CallResult {
        let b = self.backend;
        let cfg = &self.config;
        let bind = |params: &[&str]| Args::bind(name, params, args.clone(), kwargs.clone());
        Ok(match name {
            "find" => {
                let mut a = bind(&["image", "object_name"])?;
                patch_list(b.find(&a.patch(0)?, &a.text(1)?, cfg)?)
            }
            "exists" => {
                let mut a = bind(&["image", "object_name"])?;
                Value::Bool(b.exists(&a.patch(0)?, &a.text(1)?, cfg)?)
            }
            "verify_property" => {
                let mut a = bind(&["image", "object_name", "attribute"])?;
                Value::Bool(b.verify_property(&a.patch(0)?, &a.text(1)?, &a.text(2)?, cfg)?)
            }
            "best_image_match" => {
                let mut a = bind(&["list_patches", "content"])?;
                Value::Patch(b.best_image_match(&a.patches(0)?, &a.text(1)?, cfg)?)
            }
            "best_text_match" => {
                let mut a = bind(&["image", "option_list"])?;
                if matches!(a.slots[0], Some(Value::List(_))) {
                    a.slots.swap(0, 1);
                }
                Value::Str(b.best_text_match(&a.texts(1)?, &a.patch(0)?, cfg)?)
            }
            "compute_depth" => {
                let mut a = bind(&["image"])?;
                Value::Float(b.compute_depth(&a.patch(0)?)?)
            }
            "distance" => {
                let mut a = bind(&["patch_a", "patch_b"])?;
                Value::Float(box_distance(&a.patch(0)?.bbox, &a.patch(1)?.bbox))
            }
            "simple_query" => {
                let mut a = bind(&["image", "question"])?;
                let question = a.text(1)?;
                match a.slots[0] {
                    Some(Value::Video(_)) => Value::Str(b.video_simple_query(&a.video(0)?, &question)?),
                    _ => Value::Str(b.simple_query(&a.patch(0)?, &question)?),
                }
            }
            "select_answer" => {
                let mut a = bind(&["info", "options"])?;
                let info = match a.take(0) {
                    Value::Str(s) => s,
                    Value::List(items) => items.iter().map(Value::display).collect::<Vec<_>>().join(" "),
                    other => return Err(a.wrong("text", &other)),
                };
                let index = b.select_answer(&info, &a.texts(1)?)?;
                Value::Int(index as i64)
            }
            "frame_iterator" => {
                let mut a = bind(&["video"])?;
                patch_list(b.video_frames(&a.video(0)?)?)
            }
            "get_patch_left_of" | "get_patch_right_of" | "get_patch_above_of" | "get_patch_below_of" => {
                let d = Direction::ALL.into_iter().find(|d| d.routine_name() == name).unwrap();
                let (patches, anchor) = bind(&["patches", "anchor"])?.patches_and_anchor()?;
                patch_list(routines::patches_in_direction(&patches, &anchor, d))
            }
            "get_patch_closest_to_anchor_object" => {
                let (patches, anchor) = bind(&["patches", "anchor"])?.patches_and_anchor()?;
                Value::Patch(routines::closest_to_anchor(&patches, &anchor)?)
            }
            "sort_patches_left_to_right" => patch_list(routines::sort_left_to_right(&bind(&["patches"])?.patches(0)?)),
            "sort_patches_bottom_to_top" => patch_list(routines::sort_bottom_to_top(&bind(&["patches"])?.patches(0)?)),
            "sort_patches_front_to_back" => {
                let patches = bind(&["patches"])?.patches(0)?;
                patch_list(routines::sort_front_to_back(&patches, |p| b.compute_depth(p))?)
            }
            "get_middle_patch" => Value::Patch(routines::middle_patch(&bind(&["patches"])?.patches(0)?)?),
            "get_video_segment_of_event" | "get_video_segment_before_event" | "get_video_segment_after_event" => {
                let which = [TemporalWindow::Of, TemporalWindow::Before, TemporalWindow::After]
                    .into_iter()
                    .find(|w| w.routine_name() == name)
                    .unwrap();
                let mut a = bind(&["video", "event"])?;
                let video = a.video(0)?;
                let event = b.locate_event(&video, &a.text(1)?, cfg)?;
                Value::Video(routines::temporal_window(&video, event, which)?)
            }
            "caption_video" => Value::Str(b.caption_video(&bind(&["video"])?.video(0)?)?),
            other => return Err(VplError::Name { name: other.to_string(), span: None }),
        })
    }
}

impl ToolDispatch for Toolbox<'_> {
    fn has_tool(&self, name: &str) -> bool {
        self.api.has(name)
    }

    fn call_tool(&self, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> CallResult {
        if !self.api.has(name) {
            return Err(VplError::Name { name: name.to_string(), span: None });
        }
        self.dispatch(name, args, kwargs)
    }
}
