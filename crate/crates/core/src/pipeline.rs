//! Batch generation: scenes x tasks x situations, with a resumable progress
//! ledger, fidelity filtering, dedup, scene-stratified split and emission.
//!
//! Output directory layout:
//!
//! ```text
//! dataset.jsonl   all examples that passed the fidelity audit, deduplicated
//! train.jsonl     scene-stratified split of dataset.jsonl
//! test.jsonl
//! rejected.jsonl  parse rejections and fidelity failures
//! stats.json
//! progress.jsonl  ledger of finished (scene, task, situation index) units
//! run.log         timestamped log lines
//! audit.jsonl     online mode only, one line per completion call
//! ```
//!
//! Everything except `progress.jsonl`, `run.log` and `audit.jsonl` is
//! byte-identical across runs with the same manifest in offline mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{dedup, emit_jsonl, fidelity_check, split, stats, DatasetError, DatasetExample, SplitSpec};
use crate::scene::{load_scene, Scene, SceneError};
use crate::situated::{build_situated_graph, sample_situation, situation_rng, SituationConfig};
use crate::taskgen::{
    offline_generate_with, parse_caption, parse_qa, render_prompt, ClientConfig, ClientError, LlmClient, OfflineConfig,
    PromptStyle, TaskKind,
};

pub const PROGRESS_FILE: &str = "progress.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Offline,
    Online,
}

/// Situations sampled per scene for each task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SituationCounts {
    pub captioning: usize,
    pub attr_rel: usize,
    pub affordance: usize,
    pub planning: usize,
}

impl Default for SituationCounts {
    fn default() -> Self {
        Self {
            captioning: 5,
            attr_rel: 10,
            affordance: 10,
            planning: 5,
        }
    }
}

impl SituationCounts {
    pub fn get(&self, task: TaskKind) -> usize {
        match task {
            TaskKind::Captioning => self.captioning,
            TaskKind::AttrRel => self.attr_rel,
            TaskKind::Affordance => self.affordance,
            TaskKind::Planning => self.planning,
        }
    }

    pub fn set(&mut self, task: TaskKind, n: usize) {
        match task {
            TaskKind::Captioning => self.captioning = n,
            TaskKind::AttrRel => self.attr_rel = n,
            TaskKind::Affordance => self.affordance = n,
            TaskKind::Planning => self.planning = n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub seed: u64,
    pub scene_dir: PathBuf,
    pub output_dir: PathBuf,
    pub tasks: Vec<TaskKind>,
    pub situations: SituationCounts,
    pub style: PromptStyle,
    pub mode: GenerationMode,
    /// Scene-level worker threads; 0 uses one per core.
    pub workers: usize,
    pub split: SplitSpec,
    pub offline: OfflineConfig,
    pub client: ClientConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_dir: PathBuf::from("scenes"),
            output_dir: PathBuf::from("out"),
            tasks: TaskKind::ALL.to_vec(),
            situations: SituationCounts::default(),
            style: PromptStyle::Spa,
            mode: GenerationMode::Offline,
            workers: 0,
            split: SplitSpec::default(),
            offline: OfflineConfig::default(),
            client: ClientConfig::default(),
        }
    }
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tasks.is_empty() {
            return Err(PipelineError::Config("task list is empty".into()));
        }
        let distinct: BTreeSet<TaskKind> = self.tasks.iter().copied().collect();
        if distinct.len() != self.tasks.len() {
            return Err(PipelineError::Config("task list has duplicates".into()));
        }
        for t in &self.tasks {
            if self.situations.get(*t) == 0 {
                return Err(PipelineError::Config(format!("situations per scene for {t} must be at least 1")));
            }
        }
        for (task, f) in &self.split.test_fraction {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(PipelineError::Config(format!("test fraction for {task} must be in (0, 1), got {f}")));
            }
        }
        if self.mode == GenerationMode::Online && self.client.max_in_flight == 0 {
            return Err(PipelineError::Config("client.max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid manifest: {0}")]
    Config(String),
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: io::Error },
    #[error("{}: {err}", path.display())]
    Scene { path: PathBuf, err: SceneError },
    #[error("progress ledger {path}: {message}")]
    Ledger { path: PathBuf, message: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |err| PipelineError::Io {
        path: path.to_path_buf(),
        err,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub scene_id: String,
    pub task: TaskKind,
    pub situation_index: u64,
    pub text: String,
    pub reason: String,
}

/// Everything produced for one (scene, task, situation index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub scene_id: String,
    pub task: TaskKind,
    pub index: u64,
    pub examples: Vec<DatasetExample>,
    pub rejected: Vec<Rejection>,
    pub warnings: Vec<String>,
}

pub enum Backend<'a> {
    Offline(&'a OfflineConfig),
    Online { client: &'a LlmClient, style: PromptStyle },
}

/// Samples situation `index` of `scene` for `task`, generates examples and
/// audits them. Examples failing the audit move to `rejected`.
pub fn generate_unit(scene: &Scene, task: TaskKind, index: u64, seed: u64, backend: &Backend) -> UnitRecord {
    let mut unit = UnitRecord {
        scene_id: scene.id.clone(),
        task,
        index,
        examples: Vec::new(),
        rejected: Vec::new(),
        warnings: Vec::new(),
    };
    let mut rng = situation_rng(seed, &scene.id, task.as_str(), index);
    let situation = match sample_situation(scene, &mut rng, &SituationConfig::default()) {
        Ok(s) => s,
        Err(e) => {
            unit.warnings.push(format!("{} {task} #{index}: no situation: {e}", scene.id));
            return unit;
        }
    };
    let graph = match build_situated_graph(scene, &situation) {
        Ok(g) => g,
        Err(e) => {
            unit.warnings.push(format!("{} {task} #{index}: graph failed: {e}", scene.id));
            return unit;
        }
    };
    let reject = |text: String, reason: String| Rejection {
        scene_id: scene.id.clone(),
        task,
        situation_index: index,
        text,
        reason,
    };

    let drafts = match backend {
        Backend::Offline(cfg) => offline_generate_with(task, &graph, &mut rng, cfg),
        Backend::Online { client, style } => {
            let bundle = render_prompt(task, scene, &graph, *style);
            let completion = match client.complete(&bundle) {
                Ok(c) => c,
                Err(e) => {
                    unit.warnings.push(format!("{} {task} #{index}: completion failed: {e}", scene.id));
                    return unit;
                }
            };
            let model = client.config().model.clone();
            let example = |question: String, answer: String, target_ids: Vec<String>| DatasetExample {
                scene_id: scene.id.clone(),
                task,
                situation: situation.clone(),
                question,
                answer,
                target_ids,
                provenance: model.clone(),
                fidelity: None,
            };
            if task == TaskKind::Captioning {
                match parse_caption(&completion.text) {
                    Some(c) => vec![example(String::new(), c, Vec::new())],
                    None => {
                        unit.rejected.push(reject(completion.text.clone(), "empty caption".into()));
                        Vec::new()
                    }
                }
            } else {
                let (pairs, fragments) = parse_qa(&completion.text, task, scene);
                unit.rejected.extend(fragments.into_iter().map(|f| reject(f.text, f.reason)));
                pairs.into_iter().map(|p| example(p.question, p.answer, p.target_ids)).collect()
            }
        }
    };

    for mut ex in drafts {
        let report = fidelity_check(&ex, &graph).expect("example built from this graph");
        if report.passed {
            ex.fidelity = Some(report);
            unit.examples.push(ex);
        } else {
            let reason = report
                .violations
                .iter()
                .map(|v| format!("{:?}: {}", v.kind, v.detail))
                .collect::<Vec<_>>()
                .join("; ");
            let text = if ex.question.is_empty() {
                ex.answer.clone()
            } else {
                format!("Q: {} A: {}", ex.question, ex.answer)
            };
            unit.rejected.push(reject(text, format!("fidelity: {reason}")));
        }
    }
    unit
}

/// Scenes from every `*.json` file in `dir`, in file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PipelineError::Config(format!("no *.json scenes in {}", dir.display())));
    }
    let mut seen = BTreeSet::new();
    let mut scenes = Vec::with_capacity(paths.len());
    for p in paths {
        let f = File::open(&p).map_err(io_err(&p))?;
        let scene = load_scene(BufReader::new(f)).map_err(|err| PipelineError::Scene { path: p.clone(), err })?;
        if !seen.insert(scene.id.clone()) {
            return Err(PipelineError::Config(format!("duplicate scene id `{}` in {}", scene.id, p.display())));
        }
        scenes.push(scene);
    }
    Ok(scenes)
}

type UnitKey = (String, TaskKind, u64);

#[derive(Serialize, Deserialize)]
struct LedgerHeader {
    manifest: String,
}

/// Digest of everything that determines the generated units.
fn manifest_digest(m: &RunManifest, scenes: &[Scene]) -> String {
    let ids: Vec<&str> = scenes.iter().map(|s| s.id.as_str()).collect();
    let model = (m.mode == GenerationMode::Online).then_some(m.client.model.as_str());
    let value = serde_json::json!({
        "seed": m.seed,
        "tasks": m.tasks,
        "situations": m.situations,
        "style": m.style,
        "mode": m.mode,
        "offline": m.offline,
        "model": model,
        "scenes": ids,
    });
    let hash = Sha256::digest(value.to_string().as_bytes());
    hash.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

/// Reads finished units. A torn final line (crash mid-write) is ignored.
fn load_ledger(path: &Path, digest: &str) -> Result<BTreeMap<UnitKey, UnitRecord>, PipelineError> {
    let mut done = BTreeMap::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err(path)(e)),
    };
    let ledger_err = |message: String| PipelineError::Ledger {
        path: path.to_path_buf(),
        message,
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let last = i + 1 == lines.len();
        if i == 0 {
            let header: LedgerHeader = match serde_json::from_str(line) {
                Ok(h) => h,
                Err(_) if last && !complete => return Ok(done),
                Err(e) => return Err(ledger_err(format!("bad header: {e}"))),
            };
            if header.manifest != digest {
                return Err(ledger_err(
                    "written by a run with a different manifest; remove it or use a fresh output directory".into(),
                ));
            }
            continue;
        }
        match serde_json::from_str::<UnitRecord>(line) {
            Ok(u) => {
                done.insert((u.scene_id.clone(), u.task, u.index), u);
            }
            Err(_) if last && !complete => {}
            Err(e) => return Err(ledger_err(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(done)
}

struct Ledger {
    file: Mutex<File>,
    path: PathBuf,
}

impl Ledger {
    fn open(path: &Path, digest: &str, existing: bool) -> Result<Self, PipelineError> {
        let mut file = if existing {
            let f = OpenOptions::new().read(true).append(true).open(path).map_err(io_err(path))?;
            // drop a torn tail before appending
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                f.set_len(keep as u64).map_err(io_err(path))?;
            }
            f
        } else {
            File::create(path).map_err(io_err(path))?
        };
        if file.metadata().map_err(io_err(path))?.len() == 0 {
            let header = serde_json::to_string(&LedgerHeader { manifest: digest.into() }).expect("plain struct");
            writeln!(file, "{header}").map_err(io_err(path))?;
        }
        Ok(Self {
            file: Mutex::new(file),
            path: path.to_path_buf(),
        })
    }

    fn append(&self, unit: &UnitRecord) -> Result<(), PipelineError> {
        let line = serde_json::to_string(unit).expect("unit serializes");
        let mut f = self.file.lock().expect("ledger poisoned");
        writeln!(f, "{line}").and_then(|_| f.flush()).map_err(io_err(&self.path))
    }
}

struct RunLog(Mutex<File>);

impl RunLog {
    fn line(&self, msg: &str) {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let mut f = self.0.lock().expect("log poisoned");
        let _ = writeln!(f, "{t:.3} {msg}");
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Stop after this many newly finished units (simulated interruption).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenes: usize,
    pub units_total: usize,
    pub units_resumed: usize,
    pub units_run: usize,
    /// True when `stop_after` cut the run short; no dataset files were written.
    pub interrupted: bool,
    pub examples: usize,
    pub train: usize,
    pub test: usize,
    pub rejected: usize,
    pub duplicates_removed: usize,
    pub warnings: Vec<String>,
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_examples(path: &Path, examples: &[DatasetExample]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    emit_jsonl(examples, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Runs (or resumes) a manifest end to end.
pub fn run(manifest: &RunManifest, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    manifest.validate()?;
    let scenes = load_scene_dir(&manifest.scene_dir)?;
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let log_path = out.join("run.log");
    let log = RunLog(Mutex::new(
        OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?,
    ));

    let client = match manifest.mode {
        GenerationMode::Offline => None,
        GenerationMode::Online => {
            let mut cfg = manifest.client.clone();
            if cfg.audit_log.is_none() {
                cfg.audit_log = Some(out.join("audit.jsonl"));
            }
            Some(LlmClient::new(cfg)?)
        }
    };
    let backend = match &client {
        None => Backend::Offline(&manifest.offline),
        Some(c) => Backend::Online {
            client: c,
            style: manifest.style,
        },
    };

    let digest = manifest_digest(manifest, &scenes);
    let ledger_path = out.join(PROGRESS_FILE);
    let mut done = load_ledger(&ledger_path, &digest)?;
    let ledger = Ledger::open(&ledger_path, &digest, ledger_path.exists())?;

    let mut all_keys: Vec<(usize, TaskKind, u64)> = Vec::new();
    for si in 0..scenes.len() {
        for &task in &manifest.tasks {
            for idx in 0..manifest.situations.get(task) as u64 {
                all_keys.push((si, task, idx));
            }
        }
    }
    let key_of = |&(si, task, idx): &(usize, TaskKind, u64)| (scenes[si].id.clone(), task, idx);
    let mut pending: Vec<(usize, TaskKind, u64)> =
        all_keys.iter().filter(|k| !done.contains_key(&key_of(k))).copied().collect();
    let mut summary = RunSummary {
        scenes: scenes.len(),
        units_total: all_keys.len(),
        units_resumed: all_keys.len() - pending.len(),
        ..Default::default()
    };
    log.line(&format!(
        "start: {} scenes, {} units, {} already done, mode {:?}",
        scenes.len(),
        all_keys.len(),
        summary.units_resumed,
        manifest.mode
    ));
    if let Some(k) = opts.stop_after {
        if k < pending.len() {
            pending.truncate(k);
            summary.interrupted = true;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let fresh: Vec<UnitRecord> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(si, task, idx)| {
                let unit = generate_unit(&scenes[si], task, idx, manifest.seed, &backend);
                ledger.append(&unit)?;
                Ok(unit)
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;
    summary.units_run = fresh.len();
    for unit in fresh {
        done.insert((unit.scene_id.clone(), unit.task, unit.index), unit);
    }
    if summary.interrupted {
        log.line(&format!("interrupted after {} units", summary.units_run));
        return Ok(summary);
    }

    let mut examples = Vec::new();
    let mut rejected = Vec::new();
    for k in &all_keys {
        let unit = &done[&key_of(k)];
        examples.extend(unit.examples.iter().cloned());
        rejected.extend(unit.rejected.iter().cloned());
        summary.warnings.extend(unit.warnings.iter().cloned());
    }
    let before = examples.len();
    let examples = dedup(examples);
    summary.duplicates_removed = before - examples.len();

    let (train, test) = match split(examples.clone(), &manifest.split) {
        Ok(parts) => parts,
        Err(DatasetError::InsufficientScenes { task, scenes }) => {
            summary.warnings.push(format!(
                "split skipped: {task} has examples from {scenes} scene(s); everything goes to train"
            ));
            (examples.clone(), Vec::new())
        }
        Err(e) => return Err(e.into()),
    };

    write_examples(&out.join("dataset.jsonl"), &examples)?;
    write_examples(&out.join("train.jsonl"), &train)?;
    write_examples(&out.join("test.jsonl"), &test)?;
    write_jsonl(&out.join("rejected.jsonl"), &rejected)?;
    let stats_path = out.join("stats.json");
    let report = serde_json::to_string_pretty(&stats(&examples)).expect("stats serialize");
    fs::write(&stats_path, report + "\n").map_err(io_err(&stats_path))?;

    summary.examples = examples.len();
    summary.train = train.len();
    summary.test = test.len();
    summary.rejected = rejected.len();
    for w in &summary.warnings {
        log.line(&format!("warning: {w}"));
    }
    log.line(&format!(
        "done: {} examples ({} train, {} test), {} rejected, {} warnings",
        summary.examples,
        summary.train,
        summary.test,
        summary.rejected,
        summary.warnings.len()
    ));
    Ok(summary)
}

/// Reads a dataset JSONL file.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetExample>, PipelineError> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(crate::dataset::read_jsonl(BufReader::new(f))?)
}

/// Reads `progress.jsonl` lines back without manifest checks, for inspection.
pub fn read_progress(path: &Path) -> Result<Vec<UnitRecord>, PipelineError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut units = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        if let Ok(u) = serde_json::from_str(&line) {
            units.push(u);
        }
    }
    Ok(units)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{fig4_scene, random_scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_scenes(dir: &Path, n: usize) {
        fs::create_dir_all(dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..n {
            let s = random_scene(&mut rng, &format!("scene_{i:02}"));
            fs::write(dir.join(format!("scene_{i:02}.json")), s.to_json()).unwrap();
        }
    }

    fn manifest(root: &Path, out: &str) -> RunManifest {
        RunManifest {
            seed: 7,
            scene_dir: root.join("scenes"),
            output_dir: root.join(out),
            situations: SituationCounts {
                captioning: 2,
                attr_rel: 3,
                affordance: 3,
                planning: 2,
            },
            workers: 3,
            ..Default::default()
        }
    }

    #[test]
    fn unit_examples_pass_audit() {
        let scene = fig4_scene();
        for task in TaskKind::ALL {
            let u = generate_unit(&scene, task, 0, 1, &Backend::Offline(&OfflineConfig::default()));
            assert!(!u.examples.is_empty(), "{task}");
            assert!(u.rejected.is_empty());
            assert!(u.examples.iter().all(|e| e.fidelity.as_ref().is_some_and(|f| f.passed)));
            let again = generate_unit(&scene, task, 0, 1, &Backend::Offline(&OfflineConfig::default()));
            assert_eq!(u, again);
        }
    }

    #[test]
    fn run_is_deterministic_and_resumable() {
        let tmp = tempfile::tempdir().unwrap();
        write_scenes(&tmp.path().join("scenes"), 4);
        let a = run(&manifest(tmp.path(), "a"), &RunOptions::default()).unwrap();
        assert!(!a.interrupted && a.examples > 0 && a.test > 0);
        let mut m = manifest(tmp.path(), "b");
        m.workers = 1;
        let part = run(&m, &RunOptions { stop_after: Some(5) }).unwrap();
        assert!(part.interrupted && part.units_run == 5);
        assert!(!m.output_dir.join("dataset.jsonl").exists());
        let rest = run(&m, &RunOptions::default()).unwrap();
        assert_eq!(rest.units_resumed, 5);
        for f in ["dataset.jsonl", "train.jsonl", "test.jsonl", "rejected.jsonl", "stats.json"] {
            let x = fs::read(tmp.path().join("a").join(f)).unwrap();
            let y = fs::read(tmp.path().join("b").join(f)).unwrap();
            assert!(x == y, "{f} differs");
        }
    }

    #[test]
    fn torn_ledger_tail_is_ignored_and_manifest_change_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_scenes(&tmp.path().join("scenes"), 2);
        let m = manifest(tmp.path(), "o");
        run(&m, &RunOptions { stop_after: Some(3) }).unwrap();
        let ledger = m.output_dir.join(PROGRESS_FILE);
        let mut f = OpenOptions::new().append(true).open(&ledger).unwrap();
        write!(f, "{{\"scene_id\": \"scene_0").unwrap();
        drop(f);
        let s = run(&m, &RunOptions::default()).unwrap();
        assert_eq!(s.units_resumed, 3);
        assert_eq!(read_progress(&ledger).unwrap().len(), s.units_total);

        let mut changed = m.clone();
        changed.seed = 8;
        assert!(matches!(run(&changed, &RunOptions::default()), Err(PipelineError::Ledger { .. })));
    }

    #[test]
    fn manifest_validation() {
        let mut m = RunManifest::default();
        m.situations.planning = 0;
        assert!(matches!(m.validate(), Err(PipelineError::Config(_))));
        let mut m = RunManifest::default();
        m.tasks = vec![TaskKind::AttrRel, TaskKind::AttrRel];
        assert!(m.validate().is_err());
        let m = RunManifest {
            tasks: vec![],
            ..Default::default()
        };
        assert!(m.validate().is_err());
        let text = r#"{"seed": 3, "situations": {"planning": 2}, "split": {"seed": 4}}"#;
        let m: RunManifest = serde_json::from_str(text).unwrap();
        assert_eq!((m.seed, m.situations.planning, m.situations.attr_rel, m.split.seed), (3, 2, 10, 4));
        assert_eq!(m.split.test_fraction.len(), 4);
        assert!(serde_json::from_str::<RunManifest>(r#"{"sead": 1}"#).is_err());
    }

    #[test]
    fn single_scene_run_warns_instead_of_failing() {
        let tmp = tempfile::tempdir().unwrap();
        write_scenes(&tmp.path().join("scenes"), 1);
        let s = run(&manifest(tmp.path(), "o"), &RunOptions::default()).unwrap();
        assert_eq!(s.test, 0);
        assert!(s.warnings.iter().any(|w| w.starts_with("split skipped")));
    }
}
