use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, Generator, GeneratorError};

/// A scripted response. Every `Some` condition must hold; the rule with the
/// most conditions wins and ties go to the earlier rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockRule {
    pub template: Option<String>,
    pub query: Option<String>,
    pub min_ices: Option<usize>,
    pub max_ices: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    /// Substring the rendered prompt must contain.
    pub prompt_contains: Option<String>,
    pub code: String,
}

impl MockRule {
    pub fn new(code: impl Into<String>) -> Self {
        Self { code: code.into(), ..Default::default() }
    }

    pub fn query(mut self, q: impl Into<String>) -> Self {
        self.query = Some(q.into());
        self
    }

    pub fn template(mut self, t: impl Into<String>) -> Self {
        self.template = Some(t.into());
        self
    }

    pub fn seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = Some(seeds.into_iter().collect());
        self
    }

    pub fn min_ices(mut self, n: usize) -> Self {
        self.min_ices = Some(n);
        self
    }

    pub fn max_ices(mut self, n: usize) -> Self {
        self.max_ices = Some(n);
        self
    }

    pub fn prompt_contains(mut self, s: impl Into<String>) -> Self {
        self.prompt_contains = Some(s.into());
        self
    }

    fn specificity(&self) -> usize {
        [
            self.template.is_some(),
            self.query.is_some(),
            self.min_ices.is_some(),
            self.max_ices.is_some(),
            self.seeds.is_some(),
            self.prompt_contains.is_some(),
        ]
        .into_iter()
        .filter(|b| *b)
        .count()
    }

    fn matches(&self, r: &GenerationRequest) -> bool {
        self.template.as_ref().map_or(true, |t| *t == r.template_id)
            && self.query.as_ref().map_or(true, |q| *q == r.query)
            && self.min_ices.map_or(true, |n| r.ice_count >= n)
            && self.max_ices.map_or(true, |n| r.ice_count <= n)
            && self.seeds.as_ref().map_or(true, |s| s.contains(&r.config.seed))
            && self.prompt_contains.as_ref().map_or(true, |s| r.prompt.contains(s.as_str()))
    }
}

/// File form of a mock generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockScript {
    pub id: Option<String>,
    /// Exact responses keyed by request fingerprint; checked before rules.
    pub fingerprints: BTreeMap<String, String>,
    pub rules: Vec<MockRule>,
    pub default: Option<String>,
}

/// Deterministic scripted generator. Ignores temperature.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    script: MockScript,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: MockScript) -> Self {
        Self { script }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::Config(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let script: MockScript = serde_path_to_error::deserialize(de)
            .map_err(|e| GeneratorError::Config(format!("{}: {} at {}", path.display(), e.inner(), e.path())))?;
        Ok(Self::from_script(script))
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.script.rules.push(rule);
        self
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>, code: impl Into<String>) -> Self {
        self.script.fingerprints.insert(fingerprint.into(), code.into());
        self
    }

    pub fn with_default(mut self, code: impl Into<String>) -> Self {
        self.script.default = Some(code.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.script.id = Some(id.into());
        self
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> String {
        self.script.id.clone().unwrap_or_else(|| "mock".into())
    }

    fn generate(&self, r: &GenerationRequest) -> Result<String, GeneratorError> {
        if let Some(code) = self.script.fingerprints.get(&r.fingerprint()) {
            return Ok(code.clone());
        }
        let mut best: Option<&MockRule> = None;
        for rule in self.script.rules.iter().filter(|rule| rule.matches(r)) {
            if best.map_or(true, |b| rule.specificity() > b.specificity()) {
                best = Some(rule);
            }
        }
        best.map(|rule| rule.code.clone())
            .or_else(|| self.script.default.clone())
            .ok_or_else(|| {
                GeneratorError::Config(format!(
                    "no scripted response for query {:?} (fingerprint {})",
                    r.query,
                    r.fingerprint()
                ))
            })
    }
}
