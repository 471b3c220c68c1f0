//! `situated3d` command line.
//!
//! Exit codes: 0 success, 1 unreadable input or bad configuration,
//! 2 `validate` found violations or `align-check` exceeded its tolerance.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use situated3d::align::{grad_check, AlignProblem, AttentionParams, DEFAULT_HIDDEN};
use situated3d::dataset::{emit_jsonl, fidelity_check, split, stats, DatasetExample, SplitSpec};
use situated3d::evalkit::{evaluate, read_predictions, DEFAULT_DIRECTION_PREFIX};
use situated3d::ingest::ingest_3rscan;
use situated3d::pipeline::{self, GenerationMode, RunManifest, RunOptions};
use situated3d::render::render_svg;
use situated3d::situated::{build_situated_graph, sample_situation, situation_rng, SituationConfig};
use situated3d::taskgen::{PromptStyle, TaskKind};
use situated3d::{load_scene, Scene};

#[derive(Parser)]
#[command(name = "situated3d", version, about = "Situated 3D scene dataset toolkit")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a 3RScan semantic-segmentation dump to the scene schema.
    Ingest(IngestArgs),
    /// Generate a dataset from a directory of scenes.
    Generate(GenerateArgs),
    /// Re-run the spatial fidelity audit on a dataset.
    Validate(ValidateArgs),
    /// Scene-stratified train/test split of a dataset.
    Split(SplitArgs),
    /// Dataset statistics.
    Stats(StatsArgs),
    /// Bird's-eye SVG of a scene, optionally with a sampled situation.
    Render(RenderArgs),
    /// Score predictions (EM, BLEU-4, ROUGE-L, direction distribution).
    Eval(EvalArgs),
    /// Finite-difference check of the alignment-loss gradients.
    AlignCheck(AlignCheckArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// semseg.v2.json
    #[arg(long)]
    semseg: PathBuf,
    /// objects.json with attributes and affordances
    #[arg(long)]
    objects: Option<PathBuf>,
    /// relationships.json
    #[arg(long)]
    relationships: Option<PathBuf>,
    /// Override the scan id.
    #[arg(long)]
    scene_id: Option<String>,
    /// Output file (stdout if omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML run manifest; flags below override it. Relative paths inside
    /// the manifest resolve against its directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated tasks: captioning, attr_rel, affordance, planning.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<TaskKind>>,
    /// Situations per scene, as TASK=N (repeatable).
    #[arg(long = "situations", value_parser = parse_task_usize)]
    situations: Vec<(TaskKind, usize)>,
    /// Test fraction, as TASK=F (repeatable).
    #[arg(long = "test-fraction", value_parser = parse_task_f64)]
    test_fraction: Vec<(TaskKind, f64)>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    style: Option<PromptStyle>,
    /// offline or online
    #[arg(long, value_parser = parse_mode)]
    mode: Option<GenerationMode>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of scene JSON files.
    #[arg(long)]
    scenes: PathBuf,
    /// Violations listed in text mode.
    #[arg(long, default_value_t = 20)]
    show: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for train.jsonl and test.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test fraction, as TASK=F (repeatable).
    #[arg(long = "test-fraction", value_parser = parse_task_f64)]
    test_fraction: Vec<(TaskKind, f64)>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Sample a situation with this seed; scene only if omitted.
    #[arg(long)]
    situation_seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL of {key, question, prediction, reference, external_scores}.
    #[arg(long)]
    predictions: PathBuf,
    /// Questions starting with this prefix enter the direction audit.
    #[arg(long, default_value = DEFAULT_DIRECTION_PREFIX)]
    direction_prefix: String,
}

#[derive(Args)]
struct AlignCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random problems, seeds seed..seed+count.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 5)]
    objects: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(TaskKind, T), String>
where
    T::Err: std::fmt::Display,
{
    let (task, value) = s.split_once('=').ok_or_else(|| format!("expected TASK=VALUE, got `{s}`"))?;
    let task: TaskKind = task.trim().parse()?;
    let value = value.trim().parse::<T>().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((task, value))
}

fn parse_task_usize(s: &str) -> Result<(TaskKind, usize), String> {
    parse_pair(s)
}

fn parse_task_f64(s: &str) -> Result<(TaskKind, f64), String> {
    parse_pair(s)
}

fn parse_mode(s: &str) -> Result<GenerationMode, String> {
    match s {
        "offline" => Ok(GenerationMode::Offline),
        "online" => Ok(GenerationMode::Online),
        _ => Err(format!("unknown mode `{s}` (expected offline or online)")),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_scene(path: &Path) -> Result<Scene> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_scene(BufReader::new(f)).with_context(|| format!("loading scene {}", path.display()))
}

fn read_dataset(path: &Path) -> Result<Vec<DatasetExample>> {
    Ok(pipeline::read_dataset(path)?)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_ingest(a: &IngestArgs) -> Result<ExitCode> {
    let semseg = read_text(&a.semseg)?;
    let objects = a.objects.as_deref().map(read_text).transpose()?;
    let rels = a.relationships.as_deref().map(read_text).transpose()?;
    let scene = ingest_3rscan(&semseg, objects.as_deref(), rels.as_deref(), a.scene_id.as_deref())
        .with_context(|| format!("converting {}", a.semseg.display()))?;
    for w in scene.relation_warnings() {
        eprintln!("warning: {w}");
    }
    write_output(a.output.as_deref(), format!("{}\n", scene.to_json()).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_manifest(a: &GenerateArgs) -> Result<RunManifest> {
    let mut m = match &a.manifest {
        Some(path) => {
            let text = read_text(path)?;
            let mut m: RunManifest = toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            m.scene_dir = resolve(base, &m.scene_dir);
            m.output_dir = resolve(base, &m.output_dir);
            if let Some(log) = &m.client.audit_log {
                m.client.audit_log = Some(resolve(base, log));
            }
            m
        }
        None => RunManifest::default(),
    };
    if let Some(v) = a.seed {
        m.seed = v;
    }
    if let Some(v) = &a.scenes {
        m.scene_dir = v.clone();
    }
    if let Some(v) = &a.out {
        m.output_dir = v.clone();
    }
    if let Some(v) = &a.tasks {
        m.tasks = v.clone();
    }
    for (t, n) in &a.situations {
        m.situations.set(*t, *n);
    }
    for (t, f) in &a.test_fraction {
        m.split.test_fraction.insert(*t, *f);
    }
    if let Some(v) = a.split_seed {
        m.split.seed = v;
    }
    if let Some(v) = a.style {
        m.style = v;
    }
    if let Some(v) = a.mode {
        m.mode = v;
    }
    if let Some(v) = a.workers {
        m.workers = v;
    }
    if let Some(v) = &a.endpoint {
        m.client.endpoint = v.clone();
    }
    if let Some(v) = &a.model {
        m.client.model = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        m.client.api_key_env = Some(v.clone());
    }
    if let Some(v) = a.max_in_flight {
        m.client.max_in_flight = v;
    }
    if let Some(v) = a.max_retries {
        m.client.max_retries = v;
    }
    m.validate()?;
    Ok(m)
}

fn cmd_generate(a: &GenerateArgs, json: bool) -> Result<ExitCode> {
    let manifest = build_manifest(a)?;
    let summary = pipeline::run(&manifest, &RunOptions { stop_after: a.stop_after })?;
    if json {
        print_json(&summary);
    } else if summary.interrupted {
        println!(
            "stopped after {} of {} units ({} resumed); rerun to continue",
            summary.units_run, summary.units_total, summary.units_resumed
        );
    } else {
        println!(
            "{} scenes, {} units ({} resumed): {} examples, {} train / {} test, {} rejected, {} duplicates removed",
            summary.scenes,
            summary.units_total,
            summary.units_resumed,
            summary.examples,
            summary.train,
            summary.test,
            summary.rejected,
            summary.duplicates_removed
        );
        println!("output: {}", manifest.output_dir.display());
    }
    if !summary.warnings.is_empty() {
        eprintln!("{} warning(s); see {}", summary.warnings.len(), manifest.output_dir.join("run.log").display());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ValidateReport {
    total: usize,
    passed: usize,
    failed: usize,
    failures: Vec<ValidateFailure>,
}

#[derive(Serialize)]
struct ValidateFailure {
    line: usize,
    scene_id: String,
    question: String,
    answer: String,
    problems: Vec<String>,
}

fn cmd_validate(a: &ValidateArgs, json: bool) -> Result<ExitCode> {
    let examples = read_dataset(&a.dataset)?;
    let scenes: BTreeMap<String, Scene> = pipeline::load_scene_dir(&a.scenes)?
        .into_iter()
        .map(|s| (s.id.clone(), s))
        .collect();
    let mut report = ValidateReport {
        total: examples.len(),
        passed: 0,
        failed: 0,
        failures: Vec::new(),
    };
    let mut graphs = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        let problems: Vec<String> = match scenes.get(&ex.scene_id) {
            None => vec![format!("unknown scene `{}`", ex.scene_id)],
            Some(scene) => {
                let key = (ex.scene_id.clone(), ex.situation.digest());
                if !graphs.contains_key(&key) {
                    graphs.insert(key.clone(), build_situated_graph(scene, &ex.situation).map_err(|e| e.to_string()));
                }
                match &graphs[&key] {
                    Err(e) => vec![format!("situation does not fit the scene: {e}")],
                    Ok(graph) => {
                        let r = fidelity_check(ex, graph)?;
                        r.violations.iter().map(|v| format!("{:?}: {}", v.kind, v.detail)).collect()
                    }
                }
            }
        };
        if problems.is_empty() {
            report.passed += 1;
        } else {
            report.failed += 1;
            report.failures.push(ValidateFailure {
                line: i + 1,
                scene_id: ex.scene_id.clone(),
                question: ex.question.clone(),
                answer: ex.answer.clone(),
                problems,
            });
        }
    }
    if json {
        print_json(&report);
    } else {
        println!("{} examples: {} passed, {} failed", report.total, report.passed, report.failed);
        for f in report.failures.iter().take(a.show) {
            println!("line {} ({}): {}", f.line, f.scene_id, f.problems.join("; "));
        }
    }
    Ok(if report.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_split(a: &SplitArgs, json: bool) -> Result<ExitCode> {
    let examples = read_dataset(&a.dataset)?;
    let mut spec = SplitSpec {
        seed: a.seed,
        ..Default::default()
    };
    for (t, f) in &a.test_fraction {
        spec.test_fraction.insert(*t, *f);
    }
    let (train, test) = split(examples, &spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (name, part) in [("train.jsonl", &train), ("test.jsonl", &test)] {
        let path = a.out.join(name);
        let mut buf = Vec::new();
        emit_jsonl(part, &mut buf)?;
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let shares: BTreeMap<TaskKind, f64> = TaskKind::ALL
        .into_iter()
        .filter_map(|t| {
            let n_test = test.iter().filter(|e| e.task == t).count();
            let n = n_test + train.iter().filter(|e| e.task == t).count();
            (n > 0).then(|| (t, n_test as f64 / n as f64))
        })
        .collect();
    if json {
        print_json(&serde_json::json!({"train": train.len(), "test": test.len(), "test_share": shares}));
    } else {
        println!("{} train, {} test", train.len(), test.len());
        for (t, s) in shares {
            println!("  {t}: test share {:.3}", s);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(a: &StatsArgs, json: bool) -> Result<ExitCode> {
    let report = stats(&read_dataset(&a.dataset)?);
    if json {
        print_json(&report);
    } else {
        println!("{} examples", report.total);
        for (t, n) in &report.per_task {
            println!("  {t}: {n}");
        }
        println!("scenes: {}", report.situations_per_scene.len());
        println!("answer length (words):");
        for (b, n) in &report.answer_length_histogram {
            println!("  {b}: {n}");
        }
        println!("direction words in answers:");
        for (d, n) in &report.answer_direction_words {
            println!("  {d}: {n}");
        }
        println!(
            "fidelity: {} passed, {} failed, {} pending",
            report.fidelity_passed, report.fidelity_failed, report.fidelity_pending
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(a: &RenderArgs) -> Result<ExitCode> {
    let scene = read_scene(&a.scene)?;
    let situation = match a.situation_seed {
        None => None,
        Some(seed) => {
            let mut rng = situation_rng(seed, &scene.id, "render", 0);
            Some(sample_situation(&scene, &mut rng, &SituationConfig::default()).context("sampling a situation")?)
        }
    };
    write_output(a.output.as_deref(), render_svg(&scene, situation.as_ref()).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: &EvalArgs, json: bool) -> Result<ExitCode> {
    let f = File::open(&a.predictions).with_context(|| format!("opening {}", a.predictions.display()))?;
    let records = read_predictions(BufReader::new(f)).with_context(|| format!("reading {}", a.predictions.display()))?;
    let report = evaluate(&records, &a.direction_prefix);
    if json {
        print_json(&report);
    } else {
        println!("{} predictions", report.count);
        println!("exact match: {:.4}", report.exact_match);
        println!("bleu-4:      {:.4}", report.bleu4);
        println!("rouge-l:     {:.4}", report.rouge_l);
        for (name, v) in &report.external {
            println!("{name}: {v:.4}");
        }
        let d = &report.direction_distribution;
        println!("direction questions: {}", d.total);
        for (cat, frac) in &d.fractions {
            println!("  {cat}: {frac:.4} ({})", d.counts.get(cat).copied().unwrap_or(0));
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AlignCheckLine {
    seed: u64,
    loss: f64,
    max_relative_error: f64,
    worst: (String, usize),
}

fn cmd_align_check(a: &AlignCheckArgs, json: bool) -> Result<ExitCode> {
    if a.objects == 0 || a.dim == 0 || a.hidden == 0 || a.count == 0 {
        bail!("objects, dim, hidden and count must be positive");
    }
    let mut lines = Vec::new();
    for seed in a.seed..a.seed + a.count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = AlignProblem::random(a.objects, a.dim, &mut rng);
        let params = AttentionParams::random(a.dim, a.hidden, 0.5, &mut rng);
        let r = grad_check(&problem, &params, a.epsilon)?;
        lines.push(AlignCheckLine {
            seed,
            loss: r.loss,
            max_relative_error: r.max_relative_error,
            worst: r.worst,
        });
    }
    let max = lines.iter().map(|l| l.max_relative_error).fold(0.0, f64::max);
    let ok = max < a.tolerance;
    if json {
        print_json(&serde_json::json!({"max_relative_error": max, "tolerance": a.tolerance, "passed": ok, "checks": lines}));
    } else {
        for l in &lines {
            println!(
                "seed {}: loss {:.6e}, max relative error {:.3e} at {}[{}]",
                l.seed, l.loss, l.max_relative_error, l.worst.0, l.worst.1
            );
        }
        println!("max relative error {max:.3e} ({} tolerance {:.0e})", if ok { "within" } else { "exceeds" }, a.tolerance);
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let json = cli.json;
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Generate(a) => cmd_generate(a, json),
        Command::Validate(a) => cmd_validate(a, json),
        Command::Split(a) => cmd_split(a, json),
        Command::Stats(a) => cmd_stats(a, json),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a, json),
        Command::AlignCheck(a) => cmd_align_check(a, json),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
