//! The function listings shown to the code generator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const VIPERGPT_STYLE: &str = include_str!("../assets/api_vipergpt_style.txt");
const ABSTRACT_EXTRA: &str = include_str!("../assets/api_abstract_extra.txt");

pub const BASE_TOOLS: [&str; 10] = [
    "find",
    "exists",
    "verify_property",
    "best_image_match",
    "best_text_match",
    "compute_depth",
    "distance",
    "simple_query",
    "select_answer",
    "frame_iterator",
];

pub const ABSTRACT_ROUTINES: [&str; 13] = [
    "get_patch_left_of",
    "get_patch_right_of",
    "get_patch_above_of",
    "get_patch_below_of",
    "get_patch_closest_to_anchor_object",
    "sort_patches_left_to_right",
    "sort_patches_bottom_to_top",
    "sort_patches_front_to_back",
    "get_middle_patch",
    "get_video_segment_of_event",
    "get_video_segment_before_event",
    "get_video_segment_after_event",
    "caption_video",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiVariant {
    VipergptStyle,
    #[default]
    Abstract,
}

impl ApiVariant {
    pub const ALL: [ApiVariant; 2] = [ApiVariant::VipergptStyle, ApiVariant::Abstract];

    pub fn as_str(self) -> &'static str {
        match self {
            ApiVariant::VipergptStyle => "vipergpt_style",
            ApiVariant::Abstract => "abstract",
        }
    }

    pub fn text(self) -> String {
        match self {
            ApiVariant::VipergptStyle => VIPERGPT_STYLE.to_string(),
            ApiVariant::Abstract => format!("{VIPERGPT_STYLE}{ABSTRACT_EXTRA}"),
        }
    }

    /// Every callable name this variant exposes to programs.
    pub fn tool_names(self) -> Vec<&'static str> {
        let mut names = BASE_TOOLS.to_vec();
        if self == ApiVariant::Abstract {
            names.extend(ABSTRACT_ROUTINES);
        }
        names
    }

    pub fn has(self, name: &str) -> bool {
        BASE_TOOLS.contains(&name) || (self == ApiVariant::Abstract && ABSTRACT_ROUTINES.contains(&name))
    }
}

impl fmt::Display for ApiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ApiVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ApiVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown api variant {s:?} (expected vipergpt_style or abstract)"))
    }
}

/// Names introduced by `def name(` lines of an API listing.
pub fn declared_names(api_text: &str) -> Vec<String> {
    api_text
        .lines()
        .filter_map(|l| l.strip_prefix("def "))
        .filter_map(|rest| rest.split('(').next())
        .map(|n| n.trim().to_string())
        .collect()
}
