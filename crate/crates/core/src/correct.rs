//! Retry controller: regenerate or self-debug failed programs, and lower the
//! detection threshold after detector failures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::api::ApiVariant;
use crate::lang::{
    check_return_type, execute, parse, ErrorBucket, ExecutionLimits, ExecutionOutcome, ProgramInput, TaskKind,
    Value, VplError,
};
use crate::llm::{
    assemble_debug_prompt, assemble_prompt, generate_code, GenerationConfig, GenerationRequest, Generator, Ice,
};
use crate::toolbox::Toolbox;
use crate::tools::{ToolBackend, ToolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Regenerate,
    SelfDebug,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Regenerate => "regenerate",
            Strategy::SelfDebug => "self_debug",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regenerate" => Ok(Strategy::Regenerate),
            "self_debug" => Ok(Strategy::SelfDebug),
            _ => Err(format!("unknown strategy {s:?} (expected regenerate or self_debug)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_trials: usize,
    pub strategy: Strategy,
    pub tune_detection: bool,
    pub threshold_schedule: Vec<f64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_trials: 5,
            strategy: Strategy::Regenerate,
            tune_detection: true,
            threshold_schedule: vec![0.15, 0.10, 0.05],
        }
    }
}

impl RetryPolicy {
    pub fn single_trial() -> Self {
        Self { max_trials: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_trials == 0 {
            return Err("max_trials must be at least 1".into());
        }
        if self.threshold_schedule.is_empty() {
            return Err("threshold_schedule must not be empty".into());
        }
        if let Some(t) = self.threshold_schedule.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(format!("threshold_schedule entries must lie in [0, 1], got {t}"));
        }
        if self.threshold_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err("threshold_schedule must be strictly decreasing".into());
        }
        Ok(())
    }
}

/// Advances one step along the schedule, staying on the last entry.
pub fn next_threshold(schedule: &[f64], position: usize) -> (f64, usize) {
    let next = (position + 1).min(schedule.len() - 1);
    (schedule[next], next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial_index: usize,
    pub prompt_fingerprint: String,
    pub template_id: String,
    pub prompt: String,
    pub code: String,
    pub outcome: ExecutionOutcome,
    pub bucket: Option<ErrorBucket>,
    pub threshold_used: f64,
    pub seed_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_outcome: ExecutionOutcome,
    pub trials: Vec<TrialRecord>,
    pub succeeded_at: Option<usize>,
}

impl RunResult {
    pub fn final_code(&self) -> &str {
        self.trials.last().map_or("", |t| t.code.as_str())
    }

    pub fn final_threshold(&self) -> Option<f64> {
        self.trials.last().map(|t| t.threshold_used)
    }
}

/// What a run sees of an example: no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub query: String,
    pub input: Value,
    pub kind: TaskKind,
    pub options: Option<Vec<String>>,
}

/// Everything fixed across the trials of a run.
#[derive(Clone)]
pub struct Engine<'a> {
    pub api: ApiVariant,
    pub api_text: String,
    pub ices: Vec<Ice>,
    pub generator: &'a dyn Generator,
    pub backend: &'a dyn ToolBackend,
    pub tools: ToolConfig,
    pub generation: GenerationConfig,
    pub limits: ExecutionLimits,
}

impl<'a> Engine<'a> {
    pub fn new(api: ApiVariant, generator: &'a dyn Generator, backend: &'a dyn ToolBackend) -> Self {
        Self {
            api,
            api_text: api.text(),
            ices: Vec::new(),
            generator,
            backend,
            tools: ToolConfig::default(),
            generation: GenerationConfig::default(),
            limits: ExecutionLimits::default(),
        }
    }

    /// Parses, executes and type-checks one program.
    pub fn execute_code(&self, code: &str, task: &Task, detection_threshold: f64) -> ExecutionOutcome {
        let program = match parse(code) {
            Ok(p) => p,
            Err(e) => return ExecutionOutcome::Failure(e),
        };
        let toolbox = Toolbox::new(self.backend, self.tools.with_detection_threshold(detection_threshold), self.api);
        let input = ProgramInput { value: task.input.clone(), query: Some(task.query.clone()), options: task.options.clone() };
        match execute(&program, &input, &toolbox, &self.limits) {
            ExecutionOutcome::Result(v) => check_return_type(&v, task.kind, task.options.as_deref()).into(),
            failure => failure,
        }
    }
}

/// Runs the generate/execute loop for one task under `policy`. Trial `t`
/// (1-based) samples with seed `base_seed + t - 1`.
pub fn run_with_retries(engine: &Engine, task: &Task, policy: &RetryPolicy, base_seed: u64) -> RunResult {
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut position = 0;
    let mut threshold = if policy.tune_detection {
        policy.threshold_schedule[0]
    } else {
        engine.tools.detection_threshold
    };
    let options = task.options.as_deref();

    for trial_index in 1..=policy.max_trials.max(1) {
        let seed = base_seed + trial_index as u64 - 1;
        let previous = trials.last().and_then(|t| t.outcome.error().map(|e| (t.code.as_str(), e)));
        let (template_id, prompt, ice_count) = match (policy.strategy, previous) {
            (Strategy::SelfDebug, Some((code, err))) => (
                "self_debug",
                assemble_debug_prompt(&engine.api_text, &task.query, code, err, options),
                0,
            ),
            _ => (
                "default",
                assemble_prompt(&engine.api_text, &engine.ices, &task.query, options),
                engine.ices.len(),
            ),
        };
        let request = GenerationRequest {
            prompt,
            template_id: template_id.to_string(),
            query: task.query.clone(),
            ice_count,
            config: GenerationConfig { seed, ..engine.generation.clone() },
        };
        let (code, outcome) = match generate_code(engine.generator, &request) {
            Ok(code) => {
                let outcome = engine.execute_code(&code, task, threshold);
                (code, outcome)
            }
            Err(e) => (String::new(), ExecutionOutcome::Failure(VplError::tool("generator", e.to_string(), false))),
        };
        let bucket = outcome.error().map(VplError::bucket);
        let success = outcome.is_success();
        log::debug!("trial {trial_index} seed {seed} threshold {threshold}: {:?}", bucket);
        trials.push(TrialRecord {
            trial_index,
            prompt_fingerprint: request.fingerprint(),
            template_id: request.template_id,
            prompt: request.prompt,
            code,
            outcome,
            bucket,
            threshold_used: threshold,
            seed_used: seed,
        });
        if success {
            break;
        }
        if policy.tune_detection && bucket == Some(ErrorBucket::ObjDet) {
            (threshold, position) = next_threshold(&policy.threshold_schedule, position);
        }
    }

    let last = trials.last().expect("at least one trial");
    RunResult {
        final_outcome: last.outcome.clone(),
        succeeded_at: last.outcome.is_success().then_some(last.trial_index),
        trials,
    }
}
