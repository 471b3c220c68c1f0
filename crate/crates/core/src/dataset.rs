//! Dataset examples, automated spatial-fidelity audit, deduplication,
//! scene-stratified splitting, JSONL emission and statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Write};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geometry::DirectionBin;
use crate::lexicon::{self, direction_mentions, first_direction_word, leading_direction, parse_count, plural};
use crate::situated::{Situation, SituatedSceneGraph};
use crate::taskgen::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub scene_id: String,
    pub task: TaskKind,
    pub situation: Situation,
    /// Empty for captioning.
    pub question: String,
    pub answer: String,
    pub target_ids: Vec<String>,
    /// LLM model name, or `offline-template`.
    pub provenance: String,
    /// `None` until audited.
    pub fidelity: Option<FidelityReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownObject,
    DirectionMismatch,
    CountMismatch,
    DistanceComparatorMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl FidelityReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("graph situation {graph} does not match example situation {example}")]
    GraphMismatch { example: String, graph: String },
    #[error("task {task} has examples from only {scenes} scene(s); at least 2 are needed to split")]
    InsufficientScenes { task: TaskKind, scenes: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

const AUXILIARIES: [&str; 14] = [
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "will", "would", "should", "shall", "have",
];

static HOW_MANY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^how\s+many\s+(?P<what>.+?)\s+(?:are|is|were|can|do)\b(?P<rest>.*)$").expect("valid regex"));
static WHERE_IS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^where\s+(?:is|are)\s+the\s+(?P<what>[a-z _-]+?)\s*\?*$").expect("valid regex"));

static THEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bthen\b").expect("valid regex"));

fn starts_with_auxiliary(lower: &str) -> bool {
    let first = lower.split_whitespace().next().unwrap_or("");
    AUXILIARIES.contains(&first)
}

fn spatial_scope(text: &str, task: TaskKind) -> &str {
    // later planning steps are relative to where the agent has moved
    if task == TaskKind::Planning {
        if let Some(m) = THEN.find(text) {
            return &text[..m.start()];
        }
    }
    text
}

/// Graph label named by `what` (singular or plural, possibly preceded by
/// attribute words).
fn resolve_label<'a>(what: &str, labels: &'a [String]) -> Option<&'a String> {
    labels
        .iter()
        .filter(|l| {
            let l = l.to_lowercase();
            what == l || what == plural(&l) || what.ends_with(&format!(" {l}")) || what.ends_with(&format!(" {}", plural(&l)))
        })
        .max_by_key(|l| l.len())
}

fn first_label_position(text: &str, label: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    let label = label.to_lowercase();
    let bytes = lower.as_bytes();
    lower.match_indices(&label).map(|(i, _)| i).find(|&i| {
        let end = i + label.len();
        (i == 0 || !bytes[i - 1].is_ascii_alphanumeric()) && (end == bytes.len() || !bytes[end].is_ascii_alphanumeric() || bytes[end] == b's')
    })
}

fn check_mentions(text: &str, graph: &SituatedSceneGraph, labels: &[String], out: &mut Vec<Violation>) {
    for m in direction_mentions(text, labels) {
        let label = labels
            .iter()
            .find(|l| l.to_lowercase() == m.label)
            .cloned()
            .unwrap_or(m.label.clone());
        if graph.count_label(m.direction, &label) == 0 {
            let present: Vec<String> = DirectionBin::ALL
                .into_iter()
                .filter(|d| graph.count_label(*d, &label) > 0)
                .map(|d| d.to_string())
                .collect();
            out.push(Violation {
                kind: ViolationKind::DirectionMismatch,
                detail: format!(
                    "{label} claimed {} but found in [{}]",
                    m.direction.phrase(),
                    present.join(", ")
                ),
            });
        }
    }
}

/// Rule-based spatial audit of one example against its situated graph.
///
/// Rules: directional label mentions must match a bucket holding that label;
/// count answers must equal the bucket count; closer/farther answers must
/// agree with graph distances; target ids must exist. Claims the rules
/// cannot ground are not flagged.
pub fn fidelity_check(example: &DatasetExample, graph: &SituatedSceneGraph) -> Result<FidelityReport, DatasetError> {
    let (ed, gd) = (example.situation.digest(), graph.situation.digest());
    if ed != gd {
        return Err(DatasetError::GraphMismatch { example: ed, graph: gd });
    }
    let labels = graph.labels();
    let mut violations = Vec::new();

    for id in &example.target_ids {
        if !graph.knows_id(id) {
            violations.push(Violation {
                kind: ViolationKind::UnknownObject,
                detail: format!("target id {id} is not in the scene"),
            });
        }
    }

    let question = example.question.trim();
    let q_lower = question.to_lowercase();
    if !(q_lower.starts_with("how many") || starts_with_auxiliary(&q_lower)) {
        check_mentions(spatial_scope(question, example.task), graph, &labels, &mut violations);
    }
    check_mentions(spatial_scope(&example.answer, example.task), graph, &labels, &mut violations);

    if let Some(c) = WHERE_IS.captures(&q_lower) {
        if let (Some(label), Some(dir)) = (resolve_label(&c["what"], &labels), leading_direction(&example.answer)) {
            if graph.count_label(dir, label) == 0 {
                violations.push(Violation {
                    kind: ViolationKind::DirectionMismatch,
                    detail: format!("no {label} {}", dir.phrase()),
                });
            }
        }
    }

    if let Some(c) = HOW_MANY.captures(&q_lower) {
        let label = resolve_label(c["what"].trim(), &labels);
        let dir = first_direction_word(&c["rest"]);
        let claimed = parse_count(&example.answer);
        if let (Some(label), Some(dir), Some(claimed)) = (label, dir, claimed) {
            let expected = graph.count_label(dir, label);
            if claimed != expected {
                violations.push(Violation {
                    kind: ViolationKind::CountMismatch,
                    detail: format!("expected {expected}"),
                });
            }
        }
    }

    check_comparator(question, &q_lower, &example.answer, graph, &labels, &mut violations);

    Ok(FidelityReport::from_violations(violations))
}

fn check_comparator(
    question: &str,
    q_lower: &str,
    answer: &str,
    graph: &SituatedSceneGraph,
    labels: &[String],
    out: &mut Vec<Violation>,
) {
    let closer = q_lower.contains("closer") || q_lower.contains("nearer");
    let farther = q_lower.contains("farther") || q_lower.contains("further");
    if closer == farther {
        return;
    }
    let mentions = direction_mentions(question, labels);
    if mentions.len() != 2 || mentions[0].label == mentions[1].label {
        return;
    }
    let mut objects = Vec::with_capacity(2);
    for m in &mentions {
        let hits: Vec<_> = graph
            .bucket(m.direction)
            .iter()
            .filter(|r| r.label.to_lowercase() == m.label)
            .collect();
        if hits.len() != 1 || graph.count_label(m.direction, &hits[0].label) != 1 {
            return;
        }
        objects.push(hits[0]);
    }
    let (a, b) = (objects[0], objects[1]);
    if a.distance == b.distance {
        return;
    }
    let chosen = match (first_label_position(answer, &a.label), first_label_position(answer, &b.label)) {
        (Some(_), None) => a,
        (None, Some(_)) => b,
        (Some(i), Some(j)) if i < j => a,
        (Some(_), Some(_)) => b,
        (None, None) => return,
    };
    let other = if std::ptr::eq(chosen, a) { b } else { a };
    let correct = if closer {
        chosen.distance < other.distance
    } else {
        chosen.distance > other.distance
    };
    if !correct {
        out.push(Violation {
            kind: ViolationKind::DistanceComparatorMismatch,
            detail: format!(
                "{} is {:.2} m away and {} is {:.2} m away",
                chosen.object_id, chosen.distance, other.object_id, other.distance
            ),
        });
    }
}

/// Removes repeats of (scene, situation, question, answer), keeping the
/// first occurrence.
pub fn dedup(examples: Vec<DatasetExample>) -> Vec<DatasetExample> {
    let mut seen = HashSet::new();
    examples
        .into_iter()
        .filter(|e| {
            seen.insert((
                e.scene_id.clone(),
                e.situation.digest(),
                e.question.clone(),
                e.answer.clone(),
            ))
        })
        .collect()
}

/// Per-task test fractions, defaulting to the published train/test counts.
pub const TABLE1_TRAIN_TEST: [(TaskKind, usize, usize); 4] = [
    (TaskKind::Captioning, 8_367, 1_350),
    (TaskKind::AttrRel, 61_254, 8_168),
    (TaskKind::Affordance, 35_070, 5_017),
    (TaskKind::Planning, 19_434, 2_819),
];

/// Approximate total example counts per task at full scale.
pub const TABLE1_APPROX_TOTALS: [(TaskKind, usize); 4] = [
    (TaskKind::Captioning, 10_000),
    (TaskKind::AttrRel, 62_000),
    (TaskKind::Affordance, 40_000),
    (TaskKind::Planning, 21_000),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: BTreeMap<TaskKind, f64>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: TABLE1_TRAIN_TEST
                .iter()
                .map(|&(t, train, test)| (t, test as f64 / (train + test) as f64))
                .collect(),
            seed: 0,
        }
    }
}

fn split_objective(test: &[bool], counts: &[Vec<usize>], totals: &[usize], targets: &[f64]) -> f64 {
    // both sides must hold at least one scene
    if !test.contains(&true) || !test.contains(&false) {
        return f64::INFINITY;
    }
    let mut err = 0.0;
    for t in 0..totals.len() {
        if totals[t] == 0 {
            continue;
        }
        let in_test: usize = counts.iter().zip(test).filter(|(_, &x)| x).map(|(c, _)| c[t]).sum();
        let share = in_test as f64 / totals[t] as f64;
        err += (share - targets[t]).powi(2);
    }
    err
}

/// Splits by whole scenes so that no scene appears on both sides, choosing
/// the scene set whose per-task test shares best match `spec`.
pub fn split(
    examples: Vec<DatasetExample>,
    spec: &SplitSpec,
) -> Result<(Vec<DatasetExample>, Vec<DatasetExample>), DatasetError> {
    for (task, f) in &spec.test_fraction {
        if !(*f > 0.0 && *f < 1.0) {
            return Err(DatasetError::InvalidSplit(format!("fraction for {task} must be in (0, 1), got {f}")));
        }
    }
    let mut scenes: Vec<String> = examples.iter().map(|e| e.scene_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    scenes.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let index: BTreeMap<&str, usize> = scenes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let tasks = TaskKind::ALL;
    let mut counts = vec![vec![0usize; tasks.len()]; scenes.len()];
    for e in &examples {
        let t = tasks.iter().position(|x| *x == e.task).expect("known task");
        counts[index[e.scene_id.as_str()]][t] += 1;
    }
    let totals: Vec<usize> = (0..tasks.len()).map(|t| counts.iter().map(|c| c[t]).sum()).collect();
    for (t, task) in tasks.iter().enumerate() {
        let n = counts.iter().filter(|c| c[t] > 0).count();
        if totals[t] > 0 && n < 2 {
            return Err(DatasetError::InsufficientScenes { task: *task, scenes: n });
        }
    }
    let default = SplitSpec::default();
    let targets: Vec<f64> = tasks
        .iter()
        .map(|t| spec.test_fraction.get(t).or_else(|| default.test_fraction.get(t)).copied().unwrap_or(0.1))
        .collect();

    let mut test = vec![false; scenes.len()];
    let mut best = split_objective(&test, &counts, &totals, &targets);
    for i in 0..scenes.len() {
        test[i] = true;
        let v = split_objective(&test, &counts, &totals, &targets);
        if v < best {
            best = v;
        } else {
            test[i] = false;
        }
    }
    // local search: single flips, then pairwise swaps
    for _ in 0..50 {
        let mut improved = false;
        for i in 0..scenes.len() {
            test[i] = !test[i];
            let v = split_objective(&test, &counts, &totals, &targets);
            if v + 1e-15 < best {
                best = v;
                improved = true;
            } else {
                test[i] = !test[i];
            }
        }
        for i in 0..scenes.len() {
            for j in (i + 1)..scenes.len() {
                if test[i] == test[j] {
                    continue;
                }
                test.swap(i, j);
                let v = split_objective(&test, &counts, &totals, &targets);
                if v + 1e-15 < best {
                    best = v;
                    improved = true;
                } else {
                    test.swap(i, j);
                }
            }
        }
        if !improved {
            break;
        }
    }

    let (test_ex, train_ex): (Vec<_>, Vec<_>) = examples.into_iter().partition(|e| test[index[e.scene_id.as_str()]]);
    Ok((train_ex, test_ex))
}

/// Writes one compact JSON object per line.
pub fn emit_jsonl<W: Write>(examples: &[DatasetExample], mut sink: W) -> io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut sink, e)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn read_jsonl<R: BufRead>(source: R) -> Result<Vec<DatasetExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|err| DatasetError::Parse {
            line: i + 1,
            message: err.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub per_task: BTreeMap<TaskKind, usize>,
    /// Distinct situations per scene.
    pub situations_per_scene: BTreeMap<String, usize>,
    /// Answer length in words, bucketed.
    pub answer_length_histogram: BTreeMap<String, usize>,
    /// Direction words used across answers.
    pub answer_direction_words: BTreeMap<String, usize>,
    pub fidelity_passed: usize,
    pub fidelity_failed: usize,
    pub fidelity_pending: usize,
}

const LENGTH_BUCKETS: [(usize, &str); 5] = [(5, "00-04"), (10, "05-09"), (20, "10-19"), (50, "20-49"), (usize::MAX, "50+")];

pub fn stats(examples: &[DatasetExample]) -> StatsReport {
    let mut per_task: BTreeMap<TaskKind, usize> = TaskKind::ALL.into_iter().map(|t| (t, 0)).collect();
    let mut situations: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut hist: BTreeMap<String, usize> = LENGTH_BUCKETS.iter().map(|(_, k)| (k.to_string(), 0)).collect();
    let mut dirs: BTreeMap<String, usize> = DirectionBin::ALL.into_iter().map(|d| (d.to_string(), 0)).collect();
    let (mut passed, mut failed, mut pending) = (0, 0, 0);
    for e in examples {
        *per_task.entry(e.task).or_default() += 1;
        situations.entry(e.scene_id.clone()).or_default().insert(e.situation.digest());
        let words = e.answer.split_whitespace().count();
        let bucket = LENGTH_BUCKETS.iter().find(|(lim, _)| words < *lim).expect("open-ended last bucket").1;
        *hist.get_mut(bucket).expect("prefilled") += 1;
        for d in lexicon::direction_words(&e.answer) {
            *dirs.get_mut(&d.to_string()).expect("prefilled") += 1;
        }
        match &e.fidelity {
            Some(r) if r.passed => passed += 1,
            Some(_) => failed += 1,
            None => pending += 1,
        }
    }
    StatsReport {
        total: examples.len(),
        per_task,
        situations_per_scene: situations.into_iter().map(|(k, v)| (k, v.len())).collect(),
        answer_length_histogram: hist,
        answer_direction_words: dirs,
        fidelity_passed: passed,
        fidelity_failed: failed,
        fidelity_pending: pending,
    }
}
