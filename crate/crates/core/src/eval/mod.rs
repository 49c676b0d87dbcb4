//! Multi-seed evaluation, error analysis and hyperparameter sweeps.

mod analysis;
mod dataset;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    aggregate, bin_labels, error_analysis, validate_edges, Bin, Histogram, SampleOutcome, DEFAULT_IOU_EDGES,
};
pub use dataset::{dataset_to_jsonl, load_dataset, Dataset, DatasetLine};

use crate::ace::{score_program, AceError, AceStore};
use crate::api::ApiVariant;
use crate::correct::{run_with_retries, Engine, RetryPolicy, RunResult, TrialRecord};
use crate::lang::{ExecutionLimits, TaskKind};
use crate::llm::{GenerationConfig, Generator};
use crate::tools::{BackendKind, ToolBackend, ToolConfig};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Dataset { path: String, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ace(#[from] AceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: PathBuf,
    /// Required kind of every dataset line; any kind when unset.
    pub task_kind: Option<TaskKind>,
    pub api: ApiVariant,
    pub ace_store: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub iou_edges: Vec<f64>,
    pub policy: RetryPolicy,
    pub generation: GenerationConfig,
    pub tools: ToolConfig,
    pub limits: ExecutionLimits,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            task_kind: None,
            api: ApiVariant::default(),
            ace_store: None,
            seeds: vec![0, 1, 2],
            workers: 4,
            iou_edges: DEFAULT_IOU_EDGES.to_vec(),
            policy: RetryPolicy::default(),
            generation: GenerationConfig::default(),
            tools: ToolConfig::default(),
            limits: ExecutionLimits::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        validate_edges(&self.iou_edges).map_err(EvalError::Config)?;
        self.policy.validate().map_err(|m| EvalError::Config(format!("policy: {m}")))?;
        self.generation.validate().map_err(|m| EvalError::Config(format!("generation: {m}")))?;
        self.tools.validate().map_err(|m| EvalError::Config(format!("tools: {m}")))?;
        self.limits.validate().map_err(|m| EvalError::Config(format!("limits: {m}")))?;
        Ok(())
    }
}

/// One (example, seed) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_id: String,
    pub seed: u64,
    pub score: f64,
    pub run: RunResult,
}

impl EvalRecord {
    pub fn sample_outcome(&self) -> SampleOutcome {
        match self.run.final_outcome.error() {
            Some(e) => SampleOutcome::Failed(e.bucket()),
            None => SampleOutcome::Executed(self.score),
        }
    }

    /// Transcript lines, one per trial.
    pub fn transcript_lines(&self) -> Vec<TranscriptLine> {
        let n = self.run.trials.len();
        self.run
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| TranscriptLine {
                example_id: self.example_id.clone(),
                seed: self.seed,
                is_final: i + 1 == n,
                score: (i + 1 == n).then_some(self.score),
                trial: t.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub example_id: String,
    pub seed: u64,
    #[serde(rename = "final")]
    pub is_final: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(flatten)]
    pub trial: TrialRecord,
}

impl TranscriptLine {
    pub fn sample_outcome(&self) -> Option<SampleOutcome> {
        if !self.is_final {
            return None;
        }
        Some(match self.trial.outcome.error() {
            Some(e) => SampleOutcome::Failed(e.bucket()),
            None => SampleOutcome::Executed(self.score.unwrap_or(0.0)),
        })
    }
}

pub fn transcript_jsonl(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for line in r.transcript_lines() {
            out.push_str(&serde_json::to_string(&line).expect("transcript serializes"));
            out.push('\n');
        }
    }
    out
}

/// Histogram over the final lines of a transcript. Returns the line number
/// of the first malformed line on error.
pub fn analyze_transcript(text: &str, edges: &[f64]) -> Result<Histogram, (usize, String)> {
    let mut outcomes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: TranscriptLine = serde_json::from_str(raw).map_err(|e| (i + 1, e.to_string()))?;
        outcomes.extend(line.sample_outcome());
    }
    Ok(error_analysis(&outcomes, edges))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub score: f64,
    pub executed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub engine_version: String,
    pub generator_id: String,
    pub backend: BackendKind,
    pub config: EvalConfig,
    pub num_examples: usize,
    pub ace_count: usize,
    pub per_seed: Vec<SeedScore>,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: Report,
    pub records: Vec<EvalRecord>,
}

fn load_ices(config: &EvalConfig) -> Result<Vec<crate::llm::Ice>, EvalError> {
    match &config.ace_store {
        Some(path) => Ok(AceStore::load(path)?.ices()),
        None => Ok(Vec::new()),
    }
}

/// Evaluates every example under every seed. Per-example failures are
/// recorded, not raised.
pub fn run_eval(
    config: &EvalConfig,
    dataset: &Dataset,
    generator: &dyn Generator,
    backend: &dyn ToolBackend,
) -> Result<EvalOutput, EvalError> {
    config.validate()?;
    let ices = load_ices(config)?;
    let engine = Engine {
        api: config.api,
        api_text: config.api.text(),
        ices,
        generator,
        backend,
        tools: config.tools.clone(),
        generation: config.generation.clone(),
        limits: config.limits.clone(),
    };
    let jobs: Vec<(usize, u64)> = config
        .seeds
        .iter()
        .flat_map(|&seed| (0..dataset.examples.len()).map(move |i| (i, seed)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let ex = &dataset.examples[i];
                let run = run_with_retries(&engine, &ex.task(), &config.policy, seed);
                let score = score_program(&run.final_outcome, &ex.ground_truth, ex.kind);
                EvalRecord { example_id: ex.id.clone(), seed, score, run }
            })
            .collect()
    });

    let n = dataset.examples.len();
    let per_seed: Vec<SeedScore> = config
        .seeds
        .iter()
        .enumerate()
        .map(|(s, &seed)| {
            let chunk = &records[s * n..(s + 1) * n];
            let score = if n == 0 { 0.0 } else { chunk.iter().map(|r| r.score).sum::<f64>() / n as f64 };
            let executed = chunk.iter().filter(|r| r.run.final_outcome.is_success()).count();
            SeedScore { seed, score, executed }
        })
        .collect();
    let (mean, std) = aggregate(&per_seed.iter().map(|s| s.score).collect::<Vec<_>>());
    let outcomes: Vec<SampleOutcome> = records.iter().map(EvalRecord::sample_outcome).collect();
    let report = Report {
        engine_version: ENGINE_VERSION.into(),
        generator_id: generator.id(),
        backend: backend.kind(),
        config: config.clone(),
        num_examples: n,
        ace_count: engine.ices.len(),
        per_seed,
        mean,
        std,
        histogram: error_analysis(&outcomes, &config.iou_edges),
    };
    Ok(EvalOutput { report, records })
}

/// Loads the configured dataset and evaluates against its fixtures.
pub fn run_eval_on_fixtures(config: &EvalConfig, generator: &dyn Generator) -> Result<EvalOutput, EvalError> {
    let dataset = load_dataset(&config.dataset, config.task_kind)?;
    run_eval(config, &dataset, generator, &dataset.backend)
}

/// Hyperparameter values to cross. Empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub temperature: Vec<f64>,
    pub threshold: Vec<f64>,
    pub api: Vec<ApiVariant>,
    pub ace: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub temperature: f64,
    /// Fixed detection threshold; `None` keeps the base policy.
    pub threshold: Option<f64>,
    pub api: ApiVariant,
    pub ace: bool,
}

impl SweepGrid {
    /// Cells in row-major order: temperature, threshold, api, ace.
    pub fn cells(&self, base: &EvalConfig) -> Vec<SweepCell> {
        let temps = if self.temperature.is_empty() { vec![base.generation.temperature] } else { self.temperature.clone() };
        let thresholds: Vec<Option<f64>> =
            if self.threshold.is_empty() { vec![None] } else { self.threshold.iter().copied().map(Some).collect() };
        let apis = if self.api.is_empty() { vec![base.api] } else { self.api.clone() };
        let aces = if self.ace.is_empty() { vec![base.ace_store.is_some()] } else { self.ace.clone() };
        let mut out = Vec::new();
        for &temperature in &temps {
            for &threshold in &thresholds {
                for &api in &apis {
                    for &ace in &aces {
                        out.push(SweepCell { temperature, threshold, api, ace });
                    }
                }
            }
        }
        out
    }
}

impl SweepCell {
    /// A threshold cell runs with that detection threshold and no tuning.
    pub fn apply(&self, base: &EvalConfig) -> Result<EvalConfig, EvalError> {
        let mut c = base.clone();
        c.generation.temperature = self.temperature;
        c.api = self.api;
        if let Some(t) = self.threshold {
            c.tools.detection_threshold = t;
            c.policy.tune_detection = false;
        }
        if !self.ace {
            c.ace_store = None;
        } else if c.ace_store.is_none() {
            return Err(EvalError::Config("sweep cell needs an ACE store but none is configured".into()));
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub report: Report,
}

/// One report per grid cell. All cell configs are validated before any
/// evaluation starts.
pub fn run_sweep(
    base: &EvalConfig,
    grid: &SweepGrid,
    dataset: &Dataset,
    generator: &dyn Generator,
    backend: &dyn ToolBackend,
) -> Result<Vec<SweepRow>, EvalError> {
    let cells = grid.cells(base);
    let configs = cells.iter().map(|c| c.apply(base)).collect::<Result<Vec<_>, _>>()?;
    cells
        .into_iter()
        .zip(configs)
        .map(|(cell, config)| Ok(SweepRow { cell, report: run_eval(&config, dataset, generator, backend)?.report }))
        .collect()
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("temperature,threshold,api,ace,mean,std,examples\n");
    for r in rows {
        let threshold = r.cell.threshold.map(|t| t.to_string()).unwrap_or_else(|| "schedule".into());
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cell.temperature, threshold, r.cell.api, r.cell.ace, r.report.mean, r.report.std, r.report.num_examples
        ));
    }
    out
}

/// Writes `report.json`, `histogram.csv` and `transcript.jsonl` into `dir`.
pub fn write_eval_output(dir: &Path, output: &EvalOutput) -> Result<(), EvalError> {
    let io = |path: &Path| {
        let shown = path.display().to_string();
        move |source| EvalError::Io { path: shown, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        ("report.json", output.report.to_json()),
        ("histogram.csv", output.report.histogram.to_csv()),
        ("transcript.jsonl", transcript_jsonl(&output.records)),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}
