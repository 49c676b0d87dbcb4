//! Automatically generated in-context examples: run zero-shot on a few
//! labeled examples, keep the programs that scored best.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correct::{run_with_retries, Engine, RetryPolicy, RunResult, Task};
use crate::lang::{ExecutionOutcome, TaskKind, Value};
use crate::llm::Ice;
use crate::scene::{iou, BBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Box(BBox),
    Answer(String),
    OptionIndex(usize),
}

impl GroundTruth {
    pub fn matches_kind(&self, kind: TaskKind) -> bool {
        matches!(
            (self, kind),
            (GroundTruth::Box(_), TaskKind::Grounding)
                | (GroundTruth::Answer(_), TaskKind::Vqa)
                | (GroundTruth::OptionIndex(_), TaskKind::VideoMcq)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub kind: TaskKind,
    /// Scene or video fixture path as written in the dataset.
    pub scene: String,
    /// The image patch or video segment the program receives.
    pub input: Value,
    pub query: String,
    pub ground_truth: GroundTruth,
    pub options: Option<Vec<String>>,
}

impl LabeledExample {
    /// The label-free view handed to the retry controller.
    pub fn task(&self) -> Task {
        Task { query: self.query.clone(), input: self.input.clone(), kind: self.kind, options: self.options.clone() }
    }
}

/// Lowercase, drop punctuation and articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Score in [0, 1]; failures score 0.
pub fn score_program(outcome: &ExecutionOutcome, gt: &GroundTruth, kind: TaskKind) -> f64 {
    let Some(value) = outcome.value() else { return 0.0 };
    match (kind, gt, value) {
        (TaskKind::Grounding, GroundTruth::Box(b), Value::Patch(p)) => iou(&p.bbox, b),
        (TaskKind::Vqa, GroundTruth::Answer(a), Value::Str(s)) => {
            (normalize_answer(a) == normalize_answer(s)) as u8 as f64
        }
        (TaskKind::VideoMcq, GroundTruth::OptionIndex(i), Value::Int(j)) => (*j >= 0 && *j as usize == *i) as u8 as f64,
        _ => 0.0,
    }
}

pub fn default_correctness_threshold(kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Grounding => 0.7,
        TaskKind::Vqa | TaskKind::VideoMcq => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub example_id: String,
    pub seed: u64,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceEntry {
    pub query: String,
    pub code: String,
    pub score: f64,
    pub task_kind: TaskKind,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceMetadata {
    pub api_id: String,
    pub generator_id: String,
    pub k: usize,
    pub correctness_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceStore {
    pub metadata: AceMetadata,
    pub entries: Vec<AceEntry>,
}

#[derive(Debug, Error)]
pub enum AceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{0}")]
    Config(String),
}

impl AceStore {
    pub fn ices(&self) -> Vec<Ice> {
        self.entries.iter().map(|e| Ice { query: e.query.clone(), code: e.code.clone() }).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AceError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|source| AceError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| AceError::Io { path: path.display().to_string(), source })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| AceError::Format {
            path: path.display().to_string(),
            message: format!("{} at {}", e.inner(), e.path()),
        })
    }
}

/// Outcome of bootstrapping one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub example_id: String,
    pub query: String,
    pub score: f64,
    pub passed: bool,
    pub run: RunResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub store: AceStore,
    pub records: Vec<BootstrapRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub k: usize,
    /// Defaults per task kind when `None`.
    pub correctness_threshold: Option<f64>,
    pub policy: RetryPolicy,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { k: 16, correctness_threshold: None, policy: RetryPolicy::default(), seed: 0 }
    }
}

/// Runs every example zero-shot (the engine's ICEs are ignored), keeps those
/// scoring at least the threshold, best first, at most `k`.
pub fn bootstrap_aces(
    examples: &[LabeledExample],
    engine: &Engine,
    config: &BootstrapConfig,
) -> Result<Bootstrap, AceError> {
    if config.k == 0 {
        return Err(AceError::Config("k must be at least 1".into()));
    }
    if examples.is_empty() {
        return Err(AceError::Config("no examples to bootstrap from".into()));
    }
    config.policy.validate().map_err(AceError::Config)?;
    let kind = examples[0].kind;
    let threshold = config.correctness_threshold.unwrap_or_else(|| default_correctness_threshold(kind));

    let zero_shot = Engine { ices: Vec::new(), ..engine.clone() };
    let records: Vec<BootstrapRecord> = examples
        .par_iter()
        .map(|ex| {
            let run = run_with_retries(&zero_shot, &ex.task(), &config.policy, config.seed);
            let score = score_program(&run.final_outcome, &ex.ground_truth, ex.kind);
            BootstrapRecord {
                example_id: ex.id.clone(),
                query: ex.query.clone(),
                passed: run.final_outcome.is_success() && score >= threshold,
                score,
                run,
            }
        })
        .collect();

    let mut entries: Vec<AceEntry> = records
        .iter()
        .zip(examples)
        .filter(|(r, _)| r.passed)
        .map(|(r, ex)| {
            let last = r.run.trials.last().expect("at least one trial");
            AceEntry {
                query: ex.query.clone(),
                code: last.code.clone(),
                score: r.score,
                task_kind: ex.kind,
                provenance: Provenance { example_id: ex.id.clone(), seed: last.seed_used, trial: last.trial_index },
            }
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score));
    entries.truncate(config.k);

    let warning = entries
        .is_empty()
        .then(|| "no program reached the correctness threshold; prompts stay zero-shot".to_string());
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Bootstrap {
        store: AceStore {
            metadata: AceMetadata {
                api_id: engine.api.as_str().into(),
                generator_id: engine.generator.id(),
                k: config.k,
                correctness_threshold: threshold,
                warning,
            },
            entries,
        },
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotMode {
    Manual(Vec<String>),
    Random { seed: u64 },
}

/// Picks the bootstrap examples: configured ids in order, or a seeded
/// uniform sample without replacement.
pub fn sample_fewshot(dataset: &[LabeledExample], n: usize, mode: &FewShotMode) -> Result<Vec<LabeledExample>, AceError> {
    if n > dataset.len() {
        return Err(AceError::Config(format!("asked for {n} examples but the dataset has {}", dataset.len())));
    }
    match mode {
        FewShotMode::Manual(ids) => ids
            .iter()
            .take(n)
            .map(|id| {
                dataset
                    .iter()
                    .find(|e| &e.id == id)
                    .cloned()
                    .ok_or_else(|| AceError::Config(format!("unknown example id {id:?}")))
            })
            .collect(),
        FewShotMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(rand::seq::index::sample(&mut rng, dataset.len(), n)
                .into_iter()
                .map(|i| dataset[i].clone())
                .collect())
        }
    }
}
