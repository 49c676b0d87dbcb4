use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lang::VplError;

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/templates/default.txt");
const SELF_DEBUG_TEMPLATE: &str = include_str!("../../assets/templates/self_debug.txt");

pub const PLACEHOLDERS: [&str; 6] = ["API", "ICES", "QUERY", "OPTIONS", "PREV_CODE", "ERROR"];

/// An in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ice {
    pub query: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub text: String,
}

impl Template {
    pub fn default_prompt() -> Self {
        Self { id: "default".into(), text: DEFAULT_TEMPLATE.into() }
    }

    pub fn self_debug() -> Self {
        Self { id: "self_debug".into(), text: SELF_DEBUG_TEMPLATE.into() }
    }

    /// Loads a template file; its id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Ok(Self { id, text })
    }

    /// Substitutes `{NAME}` placeholders in one pass, so substituted text is
    /// never rescanned. Unknown braces are left alone.
    pub fn render(&self, fill: impl Fn(&str) -> Option<String>) -> String {
        let mut out = String::with_capacity(self.text.len() * 2);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open + 1..];
            let name = tail.find('}').map(|close| &tail[..close]);
            match name.filter(|n| PLACEHOLDERS.contains(n)).and_then(|n| fill(n).map(|v| (n, v))) {
                Some((n, v)) => {
                    out.push_str(&v);
                    rest = &tail[n.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = tail;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// Everything a code-generation prompt is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub api_text: String,
    pub ices: Vec<Ice>,
    pub task_query: String,
    pub options: Option<Vec<String>>,
    pub template_id: String,
}

fn render_ices(ices: &[Ice]) -> String {
    let mut out = String::new();
    for ice in ices {
        out.push_str("\n# Query: ");
        out.push_str(&ice.query);
        out.push('\n');
        out.push_str(&ice.code);
        if !ice.code.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

fn render_options(options: Option<&[String]>) -> String {
    match options {
        Some(opts) if !opts.is_empty() => {
            let mut out = String::from("# Options:\n");
            for (i, o) in opts.iter().enumerate() {
                out.push_str(&format!("# {i}: {o}\n"));
            }
            out
        }
        _ => String::new(),
    }
}

pub fn assemble_prompt(api_text: &str, ices: &[Ice], task_query: &str, options: Option<&[String]>) -> String {
    assemble_with(&Template::default_prompt(), api_text, ices, task_query, options)
}

pub fn assemble_with(
    template: &Template,
    api_text: &str,
    ices: &[Ice],
    task_query: &str,
    options: Option<&[String]>,
) -> String {
    template.render(|name| match name {
        "API" => Some(api_text.to_string()),
        "ICES" => Some(render_ices(ices)),
        "QUERY" => Some(task_query.to_string()),
        "OPTIONS" => Some(render_options(options)),
        _ => None,
    })
}

impl PromptBundle {
    pub fn render(&self) -> String {
        let template = if self.template_id == "self_debug" { Template::self_debug() } else { Template::default_prompt() };
        assemble_with(&template, &self.api_text, &self.ices, &self.task_query, self.options.as_deref())
    }
}

/// Feedback prompt for a failed attempt. Carries the query, the previous
/// code and its error; nothing else about the example.
pub fn assemble_debug_prompt(
    api_text: &str,
    task_query: &str,
    previous_code: &str,
    error: &VplError,
    options: Option<&[String]>,
) -> String {
    Template::self_debug().render(|name| match name {
        "API" => Some(api_text.to_string()),
        "QUERY" => Some(task_query.to_string()),
        "PREV_CODE" => Some(previous_code.trim_end().to_string()),
        "ERROR" => Some(error.describe()),
        "OPTIONS" => Some(render_options(options)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ice(q: &str, c: &str) -> Ice {
        Ice { query: q.into(), code: c.into() }
    }

    #[test]
    fn zero_shot_has_api_and_query_only() {
        let p = assemble_prompt("API TEXT", &[], "find the cat", None);
        assert!(p.starts_with("API TEXT"));
        assert!(p.contains("# Query: find the cat"));
        assert_eq!(p.matches("# Query:").count(), 1);
    }

    #[test]
    fn ices_in_order_and_verbatim() {
        let ices = [ice("q one", "return 1\n"), ice("q two", "x = '{QUERY}'\nreturn x")];
        let p = assemble_prompt("API", &ices, "target", None);
        let a = p.find("return 1\n").unwrap();
        let b = p.find("x = '{QUERY}'\nreturn x").unwrap();
        let q = p.find("# Query: target").unwrap();
        assert!(p.find("API").unwrap() < a && a < b && b < q);
        assert_eq!(p, assemble_prompt("API", &ices, "target", None));
    }

    #[test]
    fn options_rendered() {
        let opts = vec!["red".to_string(), "blue".to_string()];
        let p = assemble_prompt("API", &[], "q", Some(&opts));
        assert!(p.contains("# 1: blue"));
    }

    #[test]
    fn debug_prompt_content() {
        let err = VplError::tool("find", "no detections above threshold", true);
        let code = "people = find(image, 'person')\nreturn people[1]\n";
        let p = assemble_debug_prompt("API", "second person", code, &err, None);
        assert!(p.contains(code.trim_end()));
        assert!(p.contains("no detections above threshold"));
        assert!(p.contains("# Query: second person"));
        assert!(!p.contains("{ERROR}"));
    }

    #[test]
    fn unknown_braces_kept() {
        let t = Template { id: "t".into(), text: "{API} {x} {".into() };
        assert_eq!(t.render(|_| Some("A".into())), "A {x} {");
    }
}
