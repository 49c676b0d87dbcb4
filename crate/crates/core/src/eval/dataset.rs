use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ace::{GroundTruth, LabeledExample};
use crate::lang::{TaskKind, Value};
use crate::scene::{load_fixture, BBox, Fixture};
use crate::tools::FixtureBackend;

/// One JSONL line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLine {
    pub id: String,
    pub task_kind: TaskKind,
    pub scene: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_index: Option<usize>,
}

impl DatasetLine {
    fn ground_truth(&self) -> Result<GroundTruth, String> {
        match self.task_kind {
            TaskKind::Grounding => self.gt_box.map(GroundTruth::Box).ok_or("grounding line needs `gt_box`".into()),
            TaskKind::Vqa => self
                .gt_answer
                .clone()
                .map(GroundTruth::Answer)
                .ok_or("vqa line needs `gt_answer`".into()),
            TaskKind::VideoMcq => {
                let options = self.options.as_ref().ok_or("video_mcq line needs `options`")?;
                let index = self.gt_index.ok_or("video_mcq line needs `gt_index`")?;
                if index >= options.len() {
                    return Err(format!("`gt_index` {index} out of range for {} options", options.len()));
                }
                Ok(GroundTruth::OptionIndex(index))
            }
        }
    }
}

impl From<&LabeledExample> for DatasetLine {
    fn from(e: &LabeledExample) -> Self {
        let mut line = DatasetLine {
            id: e.id.clone(),
            task_kind: e.kind,
            scene: e.scene.clone(),
            query: e.query.clone(),
            gt_box: None,
            gt_answer: None,
            options: e.options.clone(),
            gt_index: None,
        };
        match &e.ground_truth {
            GroundTruth::Box(b) => line.gt_box = Some(*b),
            GroundTruth::Answer(a) => line.gt_answer = Some(a.clone()),
            GroundTruth::OptionIndex(i) => line.gt_index = Some(*i),
        }
        line
    }
}

/// Examples plus a fixture backend holding every scene they reference.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub path: PathBuf,
    pub examples: Vec<LabeledExample>,
    pub backend: FixtureBackend,
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        dataset_to_jsonl(&self.examples)
    }
}

pub fn dataset_to_jsonl(examples: &[LabeledExample]) -> String {
    examples
        .iter()
        .map(|e| serde_json::to_string(&DatasetLine::from(e)).unwrap() + "\n")
        .collect()
}

/// Loads a JSONL dataset. Scene paths resolve relative to the dataset file.
/// When `expected` is given every line must have that task kind.
pub fn load_dataset(path: impl AsRef<Path>, expected: Option<TaskKind>) -> Result<Dataset, EvalError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: shown.clone(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut backend = FixtureBackend::new();
    let mut inputs: BTreeMap<String, Value> = BTreeMap::new();
    let mut examples = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| EvalError::Dataset { path: shown.clone(), line: line_no, message };
        if raw.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(raw);
        let line: DatasetLine = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            err(format!("{} (field `{field}`)", e.into_inner()))
        })?;
        if let Some(kind) = expected {
            if line.task_kind != kind {
                return Err(err(format!("task_kind {} but the dataset is {kind}", line.task_kind)));
            }
        }
        let ground_truth = line.ground_truth().map_err(err)?;
        if examples.iter().any(|e: &LabeledExample| e.id == line.id) {
            return Err(err(format!("duplicate id {:?}", line.id)));
        }
        let input = match inputs.get(&line.scene) {
            Some(v) => v.clone(),
            None => {
                let fixture = load_fixture(base.join(&line.scene)).map_err(|e| err(e.to_string()))?;
                let v = match &fixture {
                    Fixture::Scene(s) => Value::Patch(s.full_patch()),
                    Fixture::Video(v) => Value::Video(v.full_segment()),
                };
                backend.add_fixture(fixture);
                inputs.insert(line.scene.clone(), v.clone());
                v
            }
        };
        let is_video = matches!(input, Value::Video(_));
        if is_video != (line.task_kind == TaskKind::VideoMcq) {
            return Err(err(format!("scene {:?} does not suit a {} task", line.scene, line.task_kind)));
        }
        examples.push(LabeledExample {
            id: line.id,
            kind: line.task_kind,
            scene: line.scene,
            input,
            query: line.query,
            ground_truth,
            options: line.options,
        });
    }
    Ok(Dataset { path: path.to_path_buf(), examples, backend })
}
