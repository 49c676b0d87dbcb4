mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use vpe_core::ace::{bootstrap_aces, sample_fewshot, BootstrapConfig, FewShotMode};
use vpe_core::correct::{run_with_retries, Engine, Task};
use vpe_core::eval::{
    analyze_transcript, load_dataset, run_eval, run_sweep, sweep_summary_csv, write_eval_output, Dataset,
    EvalRecord,
};
use vpe_core::lang::{ExecutionOutcome, TaskKind, Value};
use vpe_core::llm::{Generator, HttpGenerator, MockGenerator};
use vpe_core::scene::{load_fixture, Fixture};
use vpe_core::tools::{server, wire, FixtureBackend, RemoteBackend, ToolBackend};

use config::{BackendChoice, CliConfig, FewShotKind, GeneratorKind};

#[derive(Parser, Debug)]
#[command(name = "vpe", version, about = "Generate and execute visual programs over scene fixtures")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Answer one query over one scene or video fixture.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        query: String,
        /// Defaults to grounding for images, video_mcq for videos.
        #[arg(long)]
        kind: Option<TaskKind>,
        /// Answer option; repeat for each option.
        #[arg(long = "option")]
        options: Vec<String>,
        /// Write trial records as JSONL.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Build an ACE store from labeled examples.
    Bootstrap {
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the dataset over every seed; writes report.json,
    /// histogram.csv and transcript.jsonl.
    Eval {
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every cell of the sweep grid; writes summary.csv and one
    /// report per cell.
    Sweep {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the error histogram from transcripts.
    Analyze {
        #[arg(required = true)]
        transcripts: Vec<PathBuf>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the tool wire protocol from a fixture directory.
    ServeFixtures {
        /// Write a golden request/response set to this file.
        #[arg(long)]
        golden: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        golden_limit: usize,
        /// Exit after writing the golden set.
        #[arg(long, requires = "golden")]
        golden_only: bool,
    },
}

/// The tool backend could not be reached.
#[derive(Debug, thiserror::Error)]
#[error("tool backend unreachable at {url}: {reason}")]
struct Unreachable {
    url: String,
    reason: String,
}

fn command() -> clap::Command {
    let help = config::key_help();
    Cli::command().after_help(help.clone()).mut_subcommands(|s| s.after_help(help.clone()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Unreachable>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn real_main(args: Vec<String>) -> Result<()> {
    let (rest, flags) = config::extract_overrides(args)?;
    let matches = command().try_get_matches_from(rest).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let file = cli.config.as_deref().map(config::read_file).transpose()?;
    let mut overrides = config::env_overrides(std::env::vars())?;
    overrides.extend(flags);
    let cfg = config::merge(file, &overrides)?;
    match cli.command {
        Command::Run { scene, query, kind, options, transcript } => {
            cmd_run(&cfg, &scene, query, kind, options, transcript.as_deref())
        }
        Command::Bootstrap { out } => cmd_bootstrap(&cfg, &out),
        Command::Eval { out } => cmd_eval(&cfg, &out),
        Command::Sweep { out } => cmd_sweep(&cfg, &out),
        Command::Analyze { transcripts, out } => cmd_analyze(&cfg, &transcripts, out.as_deref()),
        Command::ServeFixtures { golden, golden_limit, golden_only } => {
            cmd_serve(&cfg, golden.as_deref(), golden_limit, golden_only)
        }
    }
}

fn generator(cfg: &CliConfig) -> Result<Box<dyn Generator>> {
    cfg.generation.validate().map_err(|m| anyhow!("generation: {m}"))?;
    Ok(match cfg.generator.kind {
        GeneratorKind::Mock => {
            let path = cfg.generator.script.as_ref().ok_or_else(|| anyhow!("mock generator needs generator.script"))?;
            Box::new(MockGenerator::load(path)?)
        }
        GeneratorKind::Http => Box::new(HttpGenerator::new(cfg.generator.http.clone())),
    })
}

/// The remote backend when configured, probed first; `None` means use the
/// local fixtures.
fn remote_backend(cfg: &CliConfig) -> Result<Option<RemoteBackend>> {
    if cfg.backend.kind != BackendChoice::Remote {
        return Ok(None);
    }
    let remote = RemoteBackend::new(cfg.backend.remote.clone());
    remote.health().map_err(|reason| Unreachable { url: cfg.backend.remote.base_url.clone(), reason })?;
    Ok(Some(remote))
}

fn engine<'a>(cfg: &CliConfig, generator: &'a dyn Generator, backend: &'a dyn ToolBackend) -> Engine<'a> {
    Engine {
        tools: cfg.tools.clone(),
        generation: cfg.generation.clone(),
        limits: cfg.limits.clone(),
        ..Engine::new(cfg.eval.api, generator, backend)
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn describe_result(outcome: &ExecutionOutcome, options: Option<&[String]>) -> String {
    match outcome {
        ExecutionOutcome::Result(Value::Patch(p)) => {
            format!("box [{}, {}, {}, {}]", p.bbox.x0(), p.bbox.y0(), p.bbox.x1(), p.bbox.y1())
        }
        ExecutionOutcome::Result(Value::Int(i)) => {
            let text = options.and_then(|o| o.get(*i as usize)).map(String::as_str).unwrap_or("?");
            format!("option {i} ({text})")
        }
        ExecutionOutcome::Result(Value::Str(s)) => format!("answer {}", serde_json::to_string(s).unwrap()),
        ExecutionOutcome::Result(v) => v.display(),
        ExecutionOutcome::Failure(e) => format!("failed [{}] {}", e.bucket().as_str(), e.describe()),
    }
}

fn cmd_run(
    cfg: &CliConfig,
    scene: &Path,
    query: String,
    kind: Option<TaskKind>,
    options: Vec<String>,
    transcript: Option<&Path>,
) -> Result<()> {
    cfg.policy.validate().map_err(|m| anyhow!("policy: {m}"))?;
    cfg.tools.validate().map_err(|m| anyhow!("tools: {m}"))?;
    if !scene.exists() {
        bail!("scene file not found: {}", scene.display());
    }
    let fixture = load_fixture(scene).with_context(|| format!("loading {}", scene.display()))?;
    let (input, default_kind) = match &fixture {
        Fixture::Scene(s) => (Value::Patch(s.full_patch()), TaskKind::Grounding),
        Fixture::Video(v) => (Value::Video(v.full_segment()), TaskKind::VideoMcq),
    };
    let kind = kind.unwrap_or(default_kind);
    let options = (!options.is_empty()).then_some(options);
    if kind == TaskKind::VideoMcq && options.is_none() {
        bail!("video_mcq queries need at least one --option");
    }
    let generator = generator(cfg)?;
    let mut local = FixtureBackend::new();
    local.add_fixture(fixture);
    let remote = remote_backend(cfg)?;
    let backend: &dyn ToolBackend = match &remote {
        Some(r) => r,
        None => &local,
    };
    let engine = engine(cfg, generator.as_ref(), backend);
    let task = Task { query: query.clone(), input, kind, options: options.clone() };
    let run = run_with_retries(&engine, &task, &cfg.policy, cfg.generation.seed);

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "result: {}", describe_result(&run.final_outcome, options.as_deref()))?;
    writeln!(stdout, "trials: {}", run.trials.len())?;
    if let Some(t) = run.final_threshold() {
        writeln!(stdout, "final_threshold: {t}")?;
    }
    if let Some(path) = transcript {
        let record = EvalRecord { example_id: query, seed: cfg.generation.seed, score: 0.0, run };
        let mut body = String::new();
        for mut line in record.transcript_lines() {
            line.score = None;
            body.push_str(&serde_json::to_string(&line)?);
            body.push('\n');
        }
        write_file(path, &body)?;
    }
    Ok(())
}

fn dataset(cfg: &CliConfig) -> Result<Dataset> {
    let path = cfg.eval.dataset.as_ref().ok_or_else(|| anyhow!("no dataset configured (set eval.dataset)"))?;
    Ok(load_dataset(path, cfg.eval.task_kind)?)
}

fn cmd_bootstrap(cfg: &CliConfig, out: &Path) -> Result<()> {
    let ds = dataset(cfg)?;
    let b = &cfg.bootstrap;
    let mode = match b.mode {
        FewShotKind::Random => FewShotMode::Random { seed: b.seed },
        FewShotKind::Manual if b.ids.is_empty() => {
            FewShotMode::Manual(ds.examples.iter().map(|e| e.id.clone()).collect())
        }
        FewShotKind::Manual => FewShotMode::Manual(b.ids.clone()),
    };
    let n = match (&mode, b.ids.len()) {
        (FewShotMode::Manual(_), ids) if ids > 0 => ids.min(b.n),
        _ => b.n.min(ds.examples.len()),
    };
    let examples = sample_fewshot(&ds.examples, n, &mode)?;
    let generator = generator(cfg)?;
    let remote = remote_backend(cfg)?;
    let backend: &dyn ToolBackend = match &remote {
        Some(r) => r,
        None => &ds.backend,
    };
    let engine = engine(cfg, generator.as_ref(), backend);
    let bc = BootstrapConfig {
        k: b.k,
        correctness_threshold: b.correctness_threshold,
        policy: cfg.policy.clone(),
        seed: b.seed,
    };
    let result = bootstrap_aces(&examples, &engine, &bc)?;
    result.store.save(out)?;
    let passed = result.records.iter().filter(|r| r.passed).count();
    println!("passed: {passed}/{}", result.records.len());
    println!("kept: {}", result.store.entries.len());
    if let Some(w) = &result.store.metadata.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_eval(cfg: &CliConfig, out: &Path) -> Result<()> {
    let ec = cfg.eval_config()?;
    let ds = load_dataset(&ec.dataset, ec.task_kind)?;
    let generator = generator(cfg)?;
    let remote = remote_backend(cfg)?;
    let backend: &dyn ToolBackend = match &remote {
        Some(r) => r,
        None => &ds.backend,
    };
    let output = run_eval(&ec, &ds, generator.as_ref(), backend)?;
    write_eval_output(out, &output)?;
    let r = &output.report;
    println!("examples: {}", r.num_examples);
    for s in &r.per_seed {
        println!("seed {}: {:.4} ({} executed)", s.seed, s.score, s.executed);
    }
    println!("score: {:.4} ± {:.4}", r.mean, r.std);
    Ok(())
}

fn cmd_sweep(cfg: &CliConfig, out: &Path) -> Result<()> {
    let ec = cfg.eval_config()?;
    let ds = load_dataset(&ec.dataset, ec.task_kind)?;
    let generator = generator(cfg)?;
    let remote = remote_backend(cfg)?;
    let backend: &dyn ToolBackend = match &remote {
        Some(r) => r,
        None => &ds.backend,
    };
    let rows = run_sweep(&ec, &cfg.sweep, &ds, generator.as_ref(), backend)?;
    for (i, row) in rows.iter().enumerate() {
        write_file(&out.join(format!("cell-{i:03}.json")), &row.report.to_json())?;
    }
    let summary = sweep_summary_csv(&rows);
    write_file(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_analyze(cfg: &CliConfig, transcripts: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    for path in transcripts {
        let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        text.push_str(&body);
        if !body.is_empty() && !body.ends_with('\n') {
            text.push('\n');
        }
    }
    let hist = analyze_transcript(&text, &cfg.eval.iou_edges)
        .map_err(|(line, msg)| anyhow!("transcript line {line}: {msg}"))?;
    let csv = hist.to_csv();
    match out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_serve(cfg: &CliConfig, golden: Option<&Path>, limit: usize, golden_only: bool) -> Result<()> {
    let dir = cfg.serve.fixtures.as_ref().ok_or_else(|| anyhow!("no fixture directory (set serve.fixtures)"))?;
    let backend = FixtureBackend::from_dir(dir).with_context(|| format!("loading fixtures from {}", dir.display()))?;
    if let Some(path) = golden {
        let exchanges = wire::record_golden(&backend, wire::golden_requests(&backend, limit));
        write_file(path, &(serde_json::to_string_pretty(&exchanges)? + "\n"))?;
        println!("golden: {} exchanges written to {}", exchanges.len(), path.display());
        if golden_only {
            return Ok(());
        }
    }
    let handle = server::serve(Arc::new(backend), &cfg.serve.addr, cfg.serve.workers)
        .with_context(|| format!("binding {}", cfg.serve.addr))?;
    println!("listening on {}", handle.base_url());
    std::io::stdout().flush()?;
    handle.join();
    Ok(())
}
