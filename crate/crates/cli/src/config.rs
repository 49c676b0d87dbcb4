//! Layered configuration: TOML file, then `VPE__SECTION__KEY` environment
//! variables, then `--section.key=value` flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use vpe_core::api::ApiVariant;
use vpe_core::correct::RetryPolicy;
use vpe_core::eval::{EvalConfig, SweepGrid, DEFAULT_IOU_EDGES};
use vpe_core::lang::{ExecutionLimits, TaskKind};
use vpe_core::llm::{GenerationConfig, HttpConfig};
use vpe_core::tools::{RemoteConfig, ToolConfig};

pub const ENV_PREFIX: &str = "VPE__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub dataset: Option<PathBuf>,
    pub task_kind: Option<TaskKind>,
    pub api: ApiVariant,
    pub ace_store: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub iou_edges: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            dataset: None,
            task_kind: None,
            api: ApiVariant::default(),
            ace_store: None,
            seeds: vec![0, 1, 2],
            workers: 4,
            iou_edges: DEFAULT_IOU_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    /// Mock script (JSON).
    pub script: Option<PathBuf>,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Fixture,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendChoice,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotKind {
    #[default]
    Manual,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub n: usize,
    pub mode: FewShotKind,
    /// Example ids for manual mode; empty means the first `n` lines.
    pub ids: Vec<String>,
    pub seed: u64,
    pub k: usize,
    pub correctness_threshold: Option<f64>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { n: 16, mode: FewShotKind::Manual, ids: Vec::new(), seed: 0, k: 16, correctness_threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
    pub workers: usize,
    pub fixtures: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self { addr: "127.0.0.1:8700".into(), workers: 4, fixtures: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub eval: EvalSection,
    pub policy: RetryPolicy,
    pub generation: GenerationConfig,
    pub tools: ToolConfig,
    pub limits: ExecutionLimits,
    pub generator: GeneratorSection,
    pub backend: BackendSection,
    pub bootstrap: BootstrapSection,
    pub sweep: SweepGrid,
    pub serve: ServeSection,
}

/// Every settable key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("eval.dataset", "dataset JSONL path"),
    ("eval.task_kind", "required task kind: grounding, vqa or video_mcq"),
    ("eval.api", "API variant: abstract or vipergpt_style"),
    ("eval.ace_store", "ACE store JSON used as in-context examples"),
    ("eval.seeds", "base seeds, e.g. [0,1,2]"),
    ("eval.workers", "parallel (example, seed) evaluations"),
    ("eval.iou_edges", "inner IoU histogram edges"),
    ("policy.max_trials", "generate/execute attempts per sample"),
    ("policy.strategy", "retry strategy: regenerate or self_debug"),
    ("policy.tune_detection", "lower the detection threshold after detector failures"),
    ("policy.threshold_schedule", "detection thresholds tried in order"),
    ("generation.temperature", "sampling temperature"),
    ("generation.seed", "generator seed (overridden per trial)"),
    ("generation.max_output_tokens", "generation length cap"),
    ("tools.detection_threshold", "detector confidence cutoff when tuning is off"),
    ("tools.text_match_threshold", "minimum token overlap for event matches"),
    ("tools.strict_find", "empty find raises a detector error"),
    ("limits.max_steps", "interpreter step budget"),
    ("limits.max_loop_iterations", "iterations allowed per loop"),
    ("limits.max_collection_length", "longest list a program may build"),
    ("limits.wall_clock", "per-program time limit in ms"),
    ("generator.kind", "mock or http"),
    ("generator.script", "mock script JSON"),
    ("generator.http.url", "generation service base URL"),
    ("generator.http.token_env", "environment variable holding the bearer token"),
    ("generator.http.timeout_ms", "request timeout"),
    ("generator.http.max_retries", "retries on 429/5xx/transport errors"),
    ("generator.http.backoff_ms", "first retry delay, doubled each retry"),
    ("generator.http.max_in_flight", "concurrent generation requests"),
    ("backend.kind", "fixture or remote"),
    ("backend.remote.base_url", "tool server base URL"),
    ("backend.remote.timeout_ms", "tool request timeout"),
    ("backend.remote.max_in_flight", "concurrent requests per endpoint"),
    ("bootstrap.n", "labeled examples to bootstrap from"),
    ("bootstrap.mode", "manual or random selection"),
    ("bootstrap.ids", "example ids for manual selection"),
    ("bootstrap.seed", "selection seed for random mode, also the run seed"),
    ("bootstrap.k", "maximum ACEs kept"),
    ("bootstrap.correctness_threshold", "minimum score to keep a program"),
    ("sweep.temperature", "temperatures to sweep"),
    ("sweep.threshold", "fixed detection thresholds to sweep"),
    ("sweep.api", "API variants to sweep"),
    ("sweep.ace", "ACE on/off values to sweep"),
    ("serve.addr", "listen address for serve-fixtures"),
    ("serve.workers", "server worker threads"),
    ("serve.fixtures", "fixture directory for serve-fixtures"),
];

/// Short flags mapped onto config keys.
pub const ALIASES: &[(&str, &str)] = &[("api", "eval.api")];

/// Keys holding paths; file values resolve against the file's directory.
const PATH_KEYS: &[&str] = &["eval.dataset", "eval.ace_store", "generator.script", "serve.fixtures"];

pub fn key_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0) + 2;
    let mut out = String::from(
        "Configuration keys (set in --config, as --section.key=value, or as VPE__SECTION__KEY):\n",
    );
    for (k, doc) in KEYS {
        out.push_str(&format!("  --{:<width$} {doc}\n", k, width = width));
    }
    for (alias, key) in ALIASES {
        out.push_str(&format!("  --{:<width$} same as --{key}\n", alias, width = width));
    }
    out
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Splits `--section.key=value` / `--section.key value` overrides out of
/// argv. Returns the remaining arguments and the overrides in order.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        let key = match ALIASES.iter().find(|(a, _)| *a == name) {
            Some((_, k)) => k.to_string(),
            None if name.contains('.') => name.clone(),
            None => {
                rest.push(arg);
                continue;
            }
        };
        if !known(&key) {
            bail!("unknown config key `{key}`");
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| anyhow!("flag --{name} needs a value"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Overrides from `VPE__SECTION__KEY` variables, sorted by key.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = rest.split("__").map(str::to_lowercase).collect::<Vec<_>>().join(".");
        if !known(&key) {
            bail!("unknown config key `{key}` from environment variable {name}");
        }
        out.push((key, value));
    }
    out.sort();
    Ok(out)
}

/// Parses a flag value as a TOML value; bare words become strings.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, sections) = parts.split_last().expect("nonempty key");
    let mut table = root;
    for s in sections {
        let entry = table.entry(s.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("`{s}` is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn get_path_mut<'a>(root: &'a mut Table, key: &str) -> Option<&'a mut Value> {
    let mut parts = key.split('.');
    let mut v = root.get_mut(parts.next()?)?;
    for p in parts {
        v = v.as_table_mut()?.get_mut(p)?;
    }
    Some(v)
}

/// Reads a config file, resolving relative path values against its directory.
pub fn read_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for key in PATH_KEYS {
        if let Some(Value::String(s)) = get_path_mut(&mut table, key) {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).display().to_string();
            }
        }
    }
    Ok(table)
}

/// File table, then overrides in order; unknown keys are rejected.
pub fn merge(file: Option<Table>, overrides: &[(String, String)]) -> Result<CliConfig> {
    let mut table = file.unwrap_or_default();
    for (key, raw) in overrides {
        set_path(&mut table, key, parse_value(raw))?;
    }
    Value::Table(table).try_into().map_err(|e| anyhow!("invalid configuration: {e}"))
}

impl CliConfig {
    pub fn eval_config(&self) -> Result<EvalConfig> {
        let dataset = self
            .eval
            .dataset
            .clone()
            .ok_or_else(|| anyhow!("no dataset configured (set eval.dataset)"))?;
        let config = EvalConfig {
            dataset,
            task_kind: self.eval.task_kind,
            api: self.eval.api,
            ace_store: self.eval.ace_store.clone(),
            seeds: self.eval.seeds.clone(),
            workers: self.eval.workers,
            iou_edges: self.eval.iou_edges.clone(),
            policy: self.policy.clone(),
            generation: self.generation.clone(),
            tools: self.tools.clone(),
            limits: self.limits.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}
