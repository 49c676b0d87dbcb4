mod common;

use vpe_core::api::ApiVariant;
use vpe_core::correct::RetryPolicy;
use vpe_core::eval::{
    analyze_transcript, load_dataset, run_eval, run_sweep, sweep_summary_csv, transcript_jsonl, write_eval_output,
    DatasetLine, EvalConfig, EvalError, SweepGrid, DEFAULT_IOU_EDGES,
};
use vpe_core::lang::TaskKind;

#[test]
fn error_analysis_fractions() {
    common::error_analysis_check().unwrap();
}

#[test]
fn aggregation_is_order_and_worker_invariant() {
    common::aggregation_check().unwrap();
}

#[test]
fn repeated_runs_are_byte_identical() {
    common::determinism_check().unwrap();
}

#[test]
fn demo_dataset_round_trips() {
    let path = common::demo_dir().join("dataset.jsonl");
    let dataset = load_dataset(&path, Some(TaskKind::Grounding)).unwrap();
    assert_eq!(dataset.examples.len(), 10);
    let parse = |text: &str| -> Vec<DatasetLine> { text.lines().map(|l| serde_json::from_str(l).unwrap()).collect() };
    let original = std::fs::read_to_string(&path).unwrap();
    assert_eq!(parse(&dataset.to_jsonl()), parse(&original));
}

#[test]
fn dataset_errors_carry_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(common::demo_dir().join("scenes/street.json"), dir.path().join("street.json")).unwrap();
    let path = dir.path().join("d.jsonl");
    let good = r#"{"id":"a","task_kind":"grounding","scene":"street.json","query":"a car","gt_box":[55,30,78,50]}"#;

    std::fs::write(&path, format!("{good}\n{{\"id\":\"b\",\"task_kind\":\"grounding\",\"scene\":\"street.json\",\"query\":7}}\n")).unwrap();
    match load_dataset(&path, None).unwrap_err() {
        EvalError::Dataset { line, message, .. } => {
            assert_eq!(line, 2);
            assert!(message.contains("query"), "{message}");
        }
        e => panic!("{e}"),
    }

    std::fs::write(&path, format!("{good}\n{good}\n")).unwrap();
    assert!(load_dataset(&path, None).unwrap_err().to_string().contains("duplicate"));

    std::fs::write(&path, format!("{good}\n")).unwrap();
    assert!(load_dataset(&path, Some(TaskKind::Vqa)).is_err());

    std::fs::write(&path, r#"{"id":"a","task_kind":"grounding","scene":"gone.json","query":"x","gt_box":[0,0,1,1]}"#).unwrap();
    assert!(load_dataset(&path, None).unwrap_err().to_string().contains("gone.json"));
}

#[test]
fn config_validation() {
    let ok = EvalConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        EvalConfig { seeds: vec![], ..ok.clone() },
        EvalConfig { seeds: vec![1, 1], ..ok.clone() },
        EvalConfig { workers: 0, ..ok.clone() },
        EvalConfig { iou_edges: vec![0.5, 0.3], ..ok.clone() },
        EvalConfig { policy: RetryPolicy { max_trials: 0, ..Default::default() }, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(EvalError::Config(_))), "{bad:?}");
    }
    let err = serde_json::from_str::<EvalConfig>(r#"{"seedz": [0]}"#).unwrap_err().to_string();
    assert!(err.contains("seedz"), "{err}");
}

#[test]
fn transcript_reanalysis_matches_report() {
    let (dataset, gen) = common::eight_sample_set();
    let config = EvalConfig { seeds: vec![0, 1], policy: RetryPolicy { max_trials: 2, ..Default::default() }, ..Default::default() };
    let out = run_eval(&config, &dataset, &gen, &dataset.backend).unwrap();
    let text = transcript_jsonl(&out.records);
    assert!(text.lines().count() > out.records.len(), "retries should add non-final lines");
    assert_eq!(analyze_transcript(&text, &DEFAULT_IOU_EDGES).unwrap(), out.report.histogram);

    let empty = analyze_transcript("", &DEFAULT_IOU_EDGES).unwrap();
    assert!(empty.bins.iter().all(|b| b.count == 0));
    assert_eq!(analyze_transcript("{}\n", &DEFAULT_IOU_EDGES).unwrap_err().0, 1);

    let dir = tempfile::tempdir().unwrap();
    write_eval_output(dir.path(), &out).unwrap();
    for f in ["report.json", "histogram.csv", "transcript.jsonl"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap(), text);
}

#[test]
fn report_records_per_seed_scores() {
    let dataset = load_dataset(common::demo_dir().join("dataset.jsonl"), None).unwrap();
    let gen = common::demo_generator();
    let report = run_eval(&common::demo_config(), &dataset, &gen, &dataset.backend).unwrap().report;
    let seeds: Vec<u64> = report.per_seed.iter().map(|s| s.seed).collect();
    assert_eq!(seeds, [0, 1, 2]);
    assert_eq!(report.num_examples, 10);
    assert_eq!(report.generator_id, "demo-mock");
    assert_eq!(report.ace_count, 0);
}

#[test]
fn two_by_two_sweep() {
    let dataset = load_dataset(common::demo_dir().join("dataset.jsonl"), None).unwrap();
    let gen = common::demo_generator();
    let grid = SweepGrid {
        temperature: vec![0.0, 0.7],
        api: vec![ApiVariant::VipergptStyle, ApiVariant::Abstract],
        ..Default::default()
    };
    let base = EvalConfig { seeds: vec![0], ..common::demo_config() };
    let rows = run_sweep(&base, &grid, &dataset, &gen, &dataset.backend).unwrap();
    assert_eq!(rows.len(), 4);
    let mut echoes: Vec<String> = rows.iter().map(|r| serde_json::to_string(&r.report.config).unwrap()).collect();
    echoes.sort();
    echoes.dedup();
    assert_eq!(echoes.len(), 4);
    let csv = sweep_summary_csv(&rows);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("temperature,threshold,api,ace,mean,std,examples\n"));

    let with_ace = SweepGrid { ace: vec![true], ..Default::default() };
    assert!(matches!(run_sweep(&base, &with_ace, &dataset, &gen, &dataset.backend), Err(EvalError::Config(_))));
}

#[test]
fn fixed_threshold_cell_turns_tuning_off() {
    let grid = SweepGrid { threshold: vec![0.3], ..Default::default() };
    let base = EvalConfig::default();
    let cell = &grid.cells(&base)[0];
    let applied = cell.apply(&base).unwrap();
    assert_eq!(applied.tools.detection_threshold, 0.3);
    assert!(!applied.policy.tune_detection);
}
