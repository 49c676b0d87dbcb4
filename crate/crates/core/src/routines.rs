//! Spatial and temporal routines layered over the tool backends. Image
//! coordinates: origin top-left, y grows downward.

use serde::{Deserialize, Serialize};

use crate::scene::{ImagePatch, VideoSegment};
use crate::tools::{ToolError, ToolResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    LeftOf,
    RightOf,
    AboveOf,
    BelowOf,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::LeftOf, Direction::RightOf, Direction::AboveOf, Direction::BelowOf];

    /// Candidate's center lies strictly beyond the anchor's matching edge.
    pub fn holds(self, candidate: &ImagePatch, anchor: &ImagePatch) -> bool {
        match self {
            Direction::LeftOf => candidate.horizontal_center() < anchor.left(),
            Direction::RightOf => candidate.horizontal_center() > anchor.right(),
            Direction::AboveOf => candidate.vertical_center() < anchor.upper(),
            Direction::BelowOf => candidate.vertical_center() > anchor.lower(),
        }
    }

    pub fn routine_name(self) -> &'static str {
        match self {
            Direction::LeftOf => "get_patch_left_of",
            Direction::RightOf => "get_patch_right_of",
            Direction::AboveOf => "get_patch_above_of",
            Direction::BelowOf => "get_patch_below_of",
        }
    }
}

/// Patches in direction `d` from `anchor`, in input order. The anchor itself
/// is never returned.
pub fn patches_in_direction(patches: &[ImagePatch], anchor: &ImagePatch, d: Direction) -> Vec<ImagePatch> {
    patches
        .iter()
        .filter(|p| !p.same_region(anchor) && d.holds(p, anchor))
        .cloned()
        .collect()
}

pub fn center_distance(a: &ImagePatch, b: &ImagePatch) -> f64 {
    (a.horizontal_center() - b.horizontal_center()).hypot(a.vertical_center() - b.vertical_center())
}

pub fn closest_to_anchor(patches: &[ImagePatch], anchor: &ImagePatch) -> ToolResult<ImagePatch> {
    let mut best: Option<(f64, &ImagePatch)> = None;
    for p in patches.iter().filter(|p| !p.same_region(anchor)) {
        let d = center_distance(p, anchor);
        if best.map_or(true, |(b, _)| d < b) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p.clone())
        .ok_or_else(|| ToolError::new("closest_to_anchor", "no candidate patches besides the anchor", false))
}

fn sorted_by(patches: &[ImagePatch], key: impl Fn(&ImagePatch) -> f64) -> Vec<ImagePatch> {
    let mut out = patches.to_vec();
    out.sort_by(|a, b| key(a).total_cmp(&key(b)));
    out
}

pub fn sort_left_to_right(patches: &[ImagePatch]) -> Vec<ImagePatch> {
    sorted_by(patches, ImagePatch::horizontal_center)
}

/// Bottom of the image first, i.e. descending vertical center.
pub fn sort_bottom_to_top(patches: &[ImagePatch]) -> Vec<ImagePatch> {
    sorted_by(patches, |p| -p.vertical_center())
}

/// Closest first. `depth` is usually the backend's `compute_depth`.
pub fn sort_front_to_back<F>(patches: &[ImagePatch], mut depth: F) -> ToolResult<Vec<ImagePatch>>
where
    F: FnMut(&ImagePatch) -> ToolResult<f64>,
{
    let mut keyed = patches
        .iter()
        .map(|p| depth(p).map(|d| (d, p.clone())))
        .collect::<ToolResult<Vec<_>>>()?;
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Lower median of the left-to-right order.
pub fn middle_patch(patches: &[ImagePatch]) -> ToolResult<ImagePatch> {
    if patches.is_empty() {
        return Err(ToolError::new("get_middle_patch", "empty patch list", false));
    }
    let sorted = sort_left_to_right(patches);
    Ok(sorted[(sorted.len() - 1) / 2].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalWindow {
    Of,
    Before,
    After,
}

impl TemporalWindow {
    pub fn routine_name(self) -> &'static str {
        match self {
            TemporalWindow::Of => "get_video_segment_of_event",
            TemporalWindow::Before => "get_video_segment_before_event",
            TemporalWindow::After => "get_video_segment_after_event",
        }
    }
}

/// Window of `segment` relative to an event spanning frames `start..=end`.
/// "Before" means strictly smaller frame indices.
pub fn temporal_window(
    segment: &VideoSegment,
    (start, end): (usize, usize),
    which: TemporalWindow,
) -> ToolResult<VideoSegment> {
    let empty = || ToolError::new("event_localization", "empty temporal window", false);
    let (s, e) = match which {
        TemporalWindow::Of => (start.max(segment.start_frame), end.min(segment.end_frame)),
        TemporalWindow::Before => {
            if start <= segment.start_frame {
                return Err(empty());
            }
            (segment.start_frame, (start - 1).min(segment.end_frame))
        }
        TemporalWindow::After => {
            if end >= segment.end_frame {
                return Err(empty());
            }
            ((end + 1).max(segment.start_frame), segment.end_frame)
        }
    };
    if s > e {
        return Err(empty());
    }
    Ok(VideoSegment { video_id: segment.video_id.clone(), start_frame: s, end_frame: e })
}
