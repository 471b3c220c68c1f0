//! Exact match, BLEU-4, ROUGE-L and the direction-bias audit for prediction
//! files.
//!
//! Tokenization for BLEU and ROUGE is frozen: lowercase, then split on any
//! non-alphanumeric character.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geometry::DirectionBin;
use crate::lexicon::first_direction_word;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Unique within a file, typically `<scene_id>:<index>`.
    pub key: String,
    #[serde(default)]
    pub question: String,
    pub prediction: String,
    pub reference: String,
    /// Scores computed elsewhere (CIDEr, METEOR, ...) merged into reports.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: usize, key: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

/// Lowercase, drop punctuation, drop articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1 when the normalized strings are equal. Numerals are not canonicalized
/// ("two" and "2" differ).
pub fn exact_match(pred: &str, reference: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(reference))
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with clipped n-gram precisions up to order 4 and the
/// brevity penalty, unsmoothed.
///
/// Predictions shorter than four tokens use their own length as the
/// maximum order, so a nonempty prediction always scores 1 against itself.
pub fn bleu4<S: AsRef<str>, T: AsRef<str>>(pred: &[S], reference: &[T]) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let max_n = pred.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let p = ngrams(pred, n);
        let r = ngrams(reference, n);
        let matched: usize = p.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        let total = pred.len() + 1 - n;
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let (c, r) = (pred.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const DEFAULT_ROUGE_BETA2: f64 = 1.44;

/// LCS-based F-measure `(1+β²)PR / (R + β²P)` with β² = 1.44.
pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(pred: &[S], reference: &[T]) -> f64 {
    rouge_l_with(pred, reference, DEFAULT_ROUGE_BETA2)
}

pub fn rouge_l_with<S: AsRef<str>, T: AsRef<str>>(pred: &[S], reference: &[T], beta2: f64) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(pred, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / pred.len() as f64;
    let r = l / reference.len() as f64;
    (1.0 + beta2) * p * r / (r + beta2 * p)
}

pub const DIRECTION_CATEGORIES: [&str; 5] = ["left", "right", "forward", "backward", "other"];
pub const DEFAULT_DIRECTION_PREFIX: &str = "which direction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionDistribution {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    /// All zero when `undefined`.
    pub fractions: BTreeMap<String, f64>,
    /// Set when no record matched the question filter.
    pub undefined: bool,
}

pub fn direction_category(prediction: &str) -> &'static str {
    match first_direction_word(prediction) {
        Some(DirectionBin::Left) => "left",
        Some(DirectionBin::Right) => "right",
        Some(DirectionBin::Front) => "forward",
        Some(DirectionBin::Back) => "backward",
        None => "other",
    }
}

/// Distribution of the first direction keyword in predictions whose
/// question starts with `prefix` (case-insensitive).
pub fn direction_distribution(records: &[PredictionRecord], prefix: &str) -> DirectionDistribution {
    let prefix = prefix.to_lowercase();
    let mut counts: BTreeMap<String, usize> = DIRECTION_CATEGORIES.iter().map(|c| (c.to_string(), 0)).collect();
    let mut total = 0;
    for r in records {
        if r.question.trim_start().to_lowercase().starts_with(&prefix) {
            *counts.get_mut(direction_category(&r.prediction)).expect("prefilled") += 1;
            total += 1;
        }
    }
    let fractions = counts
        .iter()
        .map(|(k, v)| (k.clone(), if total == 0 { 0.0 } else { *v as f64 / total as f64 }))
        .collect();
    DirectionDistribution {
        total,
        counts,
        fractions,
        undefined: total == 0,
    }
}

pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    let mut keys = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !keys.insert(rec.key.clone()) {
            return Err(EvalError::DuplicateKey { line: i + 1, key: rec.key });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub exact_match: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    /// Means of externally supplied scores, over records that carry them.
    pub external: BTreeMap<String, f64>,
    pub direction_distribution: DirectionDistribution,
}

pub fn evaluate(records: &[PredictionRecord], direction_prefix: &str) -> EvalReport {
    let n = records.len();
    let (mut em, mut bleu, mut rouge) = (0.0, 0.0, 0.0);
    let mut ext: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        em += f64::from(exact_match(&r.prediction, &r.reference));
        let (p, g) = (tokenize(&r.prediction), tokenize(&r.reference));
        bleu += bleu4(&p, &g);
        rouge += rouge_l(&p, &g);
        for (k, v) in &r.external_scores {
            let e = ext.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    EvalReport {
        count: n,
        exact_match: mean(em),
        bleu4: mean(bleu),
        rouge_l: mean(rouge),
        external: ext.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        direction_distribution: direction_distribution(records, direction_prefix),
    }
}
