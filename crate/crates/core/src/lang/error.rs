use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Span;

/// Resource that ran out during execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Steps,
    LoopIterations,
    CollectionLength,
    WallClock,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::Steps => "steps",
            Limit::LoopIterations => "loop iterations",
            Limit::CollectionLength => "collection length",
            Limit::WallClock => "wall-clock budget",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(into = "ErrorRecord", try_from = "ErrorRecord")]
pub enum VplError {
    #[error("{message}")]
    Parse { message: String, span: Span },
    #[error("name '{name}' is not defined")]
    Name { name: String, span: Option<Span> },
    #[error("{message}")]
    Type { message: String, span: Option<Span> },
    #[error("{message}")]
    Index { message: String, span: Option<Span> },
    #[error("{tool}: {detail}")]
    Tool { tool: String, detail: String, retryable: bool, span: Option<Span> },
    #[error("expected {expected}, got {actual}")]
    ReturnType { expected: String, actual: String },
    #[error("limit exceeded: {limit}")]
    LimitExceeded { limit: Limit, span: Option<Span> },
}

/// Failure bucket used by error analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorBucket {
    ObjDet,
    RetType,
    Other,
}

impl ErrorBucket {
    pub const ALL: [ErrorBucket; 3] = [ErrorBucket::ObjDet, ErrorBucket::RetType, ErrorBucket::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorBucket::ObjDet => "ObjDet",
            ErrorBucket::RetType => "RetType",
            ErrorBucket::Other => "Other",
        }
    }
}

/// Detection tools whose retryable failures count as detector failures.
pub const DETECTION_TOOLS: [&str; 2] = ["find", "exists"];

impl VplError {
    pub fn parse(message: impl Into<String>, span: Span) -> Self {
        VplError::Parse { message: message.into(), span }
    }

    pub fn type_error(message: impl Into<String>) -> Self {
        VplError::Type { message: message.into(), span: None }
    }

    pub fn index(message: impl Into<String>) -> Self {
        VplError::Index { message: message.into(), span: None }
    }

    pub fn tool(tool: impl Into<String>, detail: impl Into<String>, retryable: bool) -> Self {
        VplError::Tool { tool: tool.into(), detail: detail.into(), retryable, span: None }
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            VplError::Parse { .. } => "ParseError",
            VplError::Name { .. } => "NameError",
            VplError::Type { .. } => "TypeError",
            VplError::Index { .. } => "IndexError",
            VplError::Tool { .. } => "ToolError",
            VplError::ReturnType { .. } => "ReturnTypeError",
            VplError::LimitExceeded { .. } => "LimitExceeded",
        }
    }

    pub fn span(&self) -> Option<Span> {
        match self {
            VplError::Parse { span, .. } => Some(*span),
            VplError::Name { span, .. }
            | VplError::Type { span, .. }
            | VplError::Index { span, .. }
            | VplError::Tool { span, .. }
            | VplError::LimitExceeded { span, .. } => *span,
            VplError::ReturnType { .. } => None,
        }
    }

    /// Attaches `span` unless the error already carries one.
    pub fn at(mut self, at: Span) -> Self {
        match &mut self {
            VplError::Name { span, .. }
            | VplError::Type { span, .. }
            | VplError::Index { span, .. }
            | VplError::Tool { span, .. }
            | VplError::LimitExceeded { span, .. } => {
                span.get_or_insert(at);
            }
            VplError::Parse { .. } | VplError::ReturnType { .. } => {}
        }
        self
    }

    pub fn tool_name(&self) -> Option<&str> {
        match self {
            VplError::Tool { tool, .. } => Some(tool),
            _ => None,
        }
    }

    pub fn bucket(&self) -> ErrorBucket {
        classify_error(self)
    }

    /// One-line rendering used in feedback prompts and CLI output.
    pub fn describe(&self) -> String {
        match self.span() {
            Some(s) => format!("{}: {} (line {}, column {})", self.class_name(), self, s.line, s.col),
            None => format!("{}: {}", self.class_name(), self),
        }
    }
}

pub fn classify_error(err: &VplError) -> ErrorBucket {
    match err {
        VplError::Tool { tool, retryable: true, .. } if DETECTION_TOOLS.contains(&tool.as_str()) => {
            ErrorBucket::ObjDet
        }
        VplError::ReturnType { .. } => ErrorBucket::RetType,
        _ => ErrorBucket::Other,
    }
}

/// JSON shape of a serialized error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: String,
    pub bucket: ErrorBucket,
    pub message: String,
    pub span: Option<(u32, u32)>,
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retryable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<Limit>,
}

impl From<VplError> for ErrorRecord {
    fn from(err: VplError) -> Self {
        let mut rec = ErrorRecord {
            class: err.class_name().to_string(),
            bucket: err.bucket(),
            message: err.to_string(),
            span: err.span().map(|s| (s.line, s.col)),
            tool: err.tool_name().map(str::to_string),
            retryable: None,
            expected: None,
            actual: None,
            limit: None,
        };
        match err {
            VplError::Tool { detail, retryable, .. } => {
                rec.message = detail;
                rec.retryable = Some(retryable);
            }
            VplError::ReturnType { expected, actual } => {
                rec.expected = Some(expected);
                rec.actual = Some(actual);
            }
            VplError::LimitExceeded { limit, .. } => rec.limit = Some(limit),
            _ => {}
        }
        rec
    }
}

impl TryFrom<ErrorRecord> for VplError {
    type Error = String;

    fn try_from(rec: ErrorRecord) -> Result<Self, Self::Error> {
        let span = rec.span.map(|(l, c)| Span::new(l, c));
        let err = match rec.class.as_str() {
            "ParseError" => VplError::Parse { message: rec.message, span: span.unwrap_or_default() },
            "NameError" => {
                let name = rec
                    .message
                    .strip_prefix("name '")
                    .and_then(|s| s.strip_suffix("' is not defined"))
                    .unwrap_or(&rec.message)
                    .to_string();
                VplError::Name { name, span }
            }
            "TypeError" => VplError::Type { message: rec.message, span },
            "IndexError" => VplError::Index { message: rec.message, span },
            "ToolError" => VplError::Tool {
                tool: rec.tool.ok_or("ToolError without tool name")?,
                detail: rec.message,
                retryable: rec.retryable.unwrap_or(false),
                span,
            },
            "ReturnTypeError" => VplError::ReturnType {
                expected: rec.expected.ok_or("ReturnTypeError without expected")?,
                actual: rec.actual.ok_or("ReturnTypeError without actual")?,
            },
            "LimitExceeded" => VplError::LimitExceeded {
                limit: rec.limit.ok_or("LimitExceeded without limit")?,
                span,
            },
            other => return Err(format!("unknown error class {other}")),
        };
        Ok(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        let objdet = VplError::tool("find", "no detections above threshold", true);
        assert_eq!(classify_error(&objdet), ErrorBucket::ObjDet);
        let ret = VplError::ReturnType { expected: "bounding-box".into(), actual: "text".into() };
        assert_eq!(classify_error(&ret), ErrorBucket::RetType);
        let name = VplError::Name { name: "foo".into(), span: None };
        assert_eq!(classify_error(&name), ErrorBucket::Other);
    }

    #[test]
    fn non_detection_or_non_retryable_tool_errors_are_other() {
        assert_eq!(classify_error(&VplError::tool("find", "x", false)), ErrorBucket::Other);
        assert_eq!(
            classify_error(&VplError::tool("best_image_match", "empty", true)),
            ErrorBucket::Other
        );
    }

    #[test]
    fn serialized_shape() {
        let err = VplError::tool("find", "no detections above threshold", true).at(Span::new(2, 5));
        let json = serde_json::to_value(&err).unwrap();
        assert_eq!(json["class"], "ToolError");
        assert_eq!(json["bucket"], "ObjDet");
        assert_eq!(json["span"], serde_json::json!([2, 5]));
        assert_eq!(json["tool"], "find");
        let back: VplError = serde_json::from_value(json).unwrap();
        assert_eq!(back, err);

        let name = VplError::Name { name: "foo".into(), span: None };
        let json = serde_json::to_value(&name).unwrap();
        assert_eq!(json["span"], serde_json::Value::Null);
        assert_eq!(json["tool"], serde_json::Value::Null);
        assert_eq!(serde_json::from_value::<VplError>(json).unwrap(), name);
    }
}
