use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scene::{ImagePatch, VideoSegment};

/// Runtime value manipulated by programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Range { start: i64, stop: i64, step: i64 },
    Patch(ImagePatch),
    Video(VideoSegment),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "boolean",
            Value::Int(_) | Value::Float(_) => "number",
            Value::Str(_) => "text",
            Value::List(_) => "list",
            Value::Range { .. } => "range",
            Value::Patch(_) => "bounding-box",
            Value::Video(_) => "video-segment",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(v) => !v.is_empty(),
            Value::Range { .. } => range_len(self) > 0,
            Value::Patch(_) | Value::Video(_) => true,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Bool(b) => Some(*b as i64 as f64),
            _ => None,
        }
    }

    /// Equality as programs observe it: numbers compare across kinds and
    /// patches compare by region.
    pub fn loose_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.loose_eq(y))
            }
            (Value::Patch(a), Value::Patch(b)) => a.same_region(b),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::None, Value::None) => true,
            (Value::Video(a), Value::Video(b)) => a == b,
            (Value::Range { .. }, Value::Range { .. }) => self == other,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }

    /// Text form used by `str()` and answer stringification.
    pub fn display(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format_float(*f),
            Value::Str(s) => s.clone(),
            Value::List(items) => {
                let parts: Vec<String> = items.iter().map(Value::repr).collect();
                format!("[{}]", parts.join(", "))
            }
            Value::Range { start, stop, step } => format!("range({start}, {stop}, {step})"),
            Value::Patch(p) => format!("ImagePatch({}, {}, {}, {})", p.left(), p.upper(), p.right(), p.lower()),
            Value::Video(v) => format!("VideoSegment({}, {})", v.start_frame, v.end_frame),
        }
    }

    fn repr(&self) -> String {
        match self {
            Value::Str(s) => super::printer::quote(s),
            other => other.display(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

pub fn format_float(f: f64) -> String {
    format!("{f:?}")
}

pub fn range_len(v: &Value) -> usize {
    match *v {
        Value::Range { start, stop, step } => {
            let (start, stop, step) = (start as i128, stop as i128, step as i128);
            let n = if step > 0 {
                (stop - start + step - 1).div_euclid(step)
            } else {
                (start - stop - step - 1).div_euclid(-step)
            };
            n.max(0) as usize
        }
        _ => 0,
    }
}

pub fn range_get(v: &Value, i: usize) -> Option<i64> {
    match *v {
        Value::Range { start, step, .. } if i < range_len(v) => {
            Some((start as i128 + step as i128 * i as i128) as i64)
        }
        _ => None,
    }
}
