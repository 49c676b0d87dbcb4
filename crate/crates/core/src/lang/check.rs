use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::error::VplError;
use super::interp::number_text;
use super::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Grounding,
    Vqa,
    VideoMcq,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Grounding => "grounding",
            TaskKind::Vqa => "vqa",
            TaskKind::VideoMcq => "video_mcq",
        }
    }

    /// Result kind named in return-type errors.
    pub fn expected(self) -> &'static str {
        match self {
            TaskKind::Grounding => "bounding-box",
            TaskKind::Vqa => "text",
            TaskKind::VideoMcq => "option-index",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grounding" => Ok(TaskKind::Grounding),
            "vqa" => Ok(TaskKind::Vqa),
            "video_mcq" => Ok(TaskKind::VideoMcq),
            other => Err(format!("unknown task kind {other:?} (grounding|vqa|video_mcq)")),
        }
    }
}

fn actual_name(v: &Value) -> String {
    match v {
        Value::List(items) => format!("list of {}", items.len()),
        other => other.type_name().to_string(),
    }
}

/// Checks a program result against what the task needs and returns it in
/// canonical form: a patch for grounding, text for vqa, an option index for
/// video multiple choice.
pub fn check_return_type(
    value: &Value,
    task: TaskKind,
    options: Option<&[String]>,
) -> Result<Value, VplError> {
    let mismatch = || VplError::ReturnType {
        expected: task.expected().to_string(),
        actual: actual_name(value),
    };
    match task {
        TaskKind::Grounding => match value {
            Value::Patch(_) => Ok(value.clone()),
            Value::List(items) if items.len() == 1 && matches!(items[0], Value::Patch(_)) => {
                Ok(items[0].clone())
            }
            _ => Err(mismatch()),
        },
        TaskKind::Vqa => match value {
            Value::Str(_) => Ok(value.clone()),
            Value::Bool(b) => Ok(Value::Str(if *b { "yes" } else { "no" }.into())),
            v => number_text(v).map(Value::Str).ok_or_else(mismatch),
        },
        TaskKind::VideoMcq => {
            let opts = options.unwrap_or(&[]);
            match value {
                Value::Int(i) if (0..opts.len() as i64).contains(i) => Ok(value.clone()),
                Value::Str(s) => {
                    let wanted = s.trim().to_lowercase();
                    opts.iter()
                        .position(|o| o.trim().to_lowercase() == wanted)
                        .map(|i| Value::Int(i as i64))
                        .ok_or_else(mismatch)
                }
                _ => Err(mismatch()),
            }
        }
    }
}
