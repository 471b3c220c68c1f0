use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub target_ids: Vec<String>,
    pub answer: String,
}

/// Part of an LLM response that could not be turned into a [`QAPair`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedFragment {
    pub text: String,
    pub reason: String,
}

static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(Question|Answer|Q|T|A)\s*:").expect("valid regex"));
static TRAILING_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)\(?\d{1,3}[.)]\s*$").expect("valid regex"));
static LEADING_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(?\d{1,3}[.)]$").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Q,
    T,
    A,
}

struct Piece<'a> {
    marker: Marker,
    raw: &'a str,
    body: String,
}

fn clean(body: &str) -> String {
    let mut s = body.trim();
    if let Some(m) = TRAILING_NUMBER.find(s) {
        s = s[..m.start()].trim_end();
    }
    s.trim_matches(|c: char| c.is_whitespace() || c == '<' || c == '>').to_string()
}

fn split_ids(text: &str) -> Vec<String> {
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .map(|w| w.trim_matches(|c: char| matches!(c, '[' | ']' | '"' | '\'' | '<' | '>' | '.' | '(' | ')')))
        .filter(|w| !w.is_empty() && *w != "and" && !w.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}

struct Pending<'a> {
    start: &'a str,
    question: String,
    targets: Option<(String, Vec<String>)>,
}

/// Splits an LLM response into Q/T/A pairs.
///
/// `T:` is required for [`TaskKind::AttrRel`] and optional otherwise. Target
/// ids must exist in `scene`. Every piece of input that does not end up in a
/// pair is reported as a rejected fragment.
pub fn parse_qa(response: &str, task: TaskKind, scene: &Scene) -> (Vec<QAPair>, Vec<RejectedFragment>) {
    let mut pairs = Vec::new();
    let mut rejected = Vec::new();
    let marks: Vec<_> = MARKER.captures_iter(response).collect();

    let head_end = marks.first().map_or(response.len(), |c| c.get(0).expect("match").start());
    let head = response[..head_end].trim();
    if !head.is_empty() && !LEADING_NUMBER.is_match(head) {
        rejected.push(RejectedFragment {
            text: head.to_string(),
            reason: "text outside any Q/T/A marker".into(),
        });
    }

    let mut pieces = Vec::with_capacity(marks.len());
    for (i, caps) in marks.iter().enumerate() {
        let whole = caps.get(0).expect("match");
        let end = marks.get(i + 1).map_or(response.len(), |c| c.get(0).expect("match").start());
        let marker = match &caps[1] {
            "Question" | "Q" => Marker::Q,
            "T" => Marker::T,
            _ => Marker::A,
        };
        pieces.push(Piece {
            marker,
            raw: response[whole.start()..end].trim(),
            body: clean(&response[whole.end()..end]),
        });
    }

    let mut pending: Option<Pending> = None;
    let reject = |rejected: &mut Vec<RejectedFragment>, text: &str, reason: &str| {
        rejected.push(RejectedFragment {
            text: text.to_string(),
            reason: reason.to_string(),
        })
    };
    for piece in &pieces {
        match piece.marker {
            Marker::Q => {
                if let Some(p) = pending.take() {
                    reject(&mut rejected, p.start, "question without answer");
                }
                pending = Some(Pending {
                    start: piece.raw,
                    question: piece.body.clone(),
                    targets: None,
                });
            }
            Marker::T => match pending.as_mut() {
                Some(p) if p.targets.is_none() => p.targets = Some((piece.raw.to_string(), split_ids(&piece.body))),
                Some(_) => reject(&mut rejected, piece.raw, "repeated T: marker"),
                None => reject(&mut rejected, piece.raw, "T: without a preceding question"),
            },
            Marker::A => {
                let Some(p) = pending.take() else {
                    reject(&mut rejected, piece.raw, "answer without question");
                    continue;
                };
                let text = match &p.targets {
                    Some((t, _)) => format!("{} {} {}", p.start, t, piece.raw),
                    None => format!("{} {}", p.start, piece.raw),
                };
                if p.question.is_empty() {
                    reject(&mut rejected, &text, "empty question");
                    continue;
                }
                if piece.body.is_empty() {
                    reject(&mut rejected, &text, "empty answer");
                    continue;
                }
                let target_ids = match p.targets {
                    Some((_, ids)) => ids,
                    None if task == TaskKind::AttrRel => {
                        reject(&mut rejected, &text, "missing T: target ids");
                        continue;
                    }
                    None => Vec::new(),
                };
                if let Some(bad) = target_ids.iter().find(|id| !scene.contains_id(id)) {
                    reject(&mut rejected, &text, &format!("unknown object id {bad}"));
                    continue;
                }
                pairs.push(QAPair {
                    question: p.question,
                    target_ids,
                    answer: piece.body.clone(),
                });
            }
        }
    }
    if let Some(p) = pending {
        let text = match &p.targets {
            Some((t, _)) => format!("{} {}", p.start, t),
            None => p.start.to_string(),
        };
        reject(&mut rejected, &text, "question without answer");
    }
    (pairs, rejected)
}

/// Serializes pairs in the Q/T/A layout understood by [`parse_qa`].
pub fn format_qa(pairs: &[QAPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str("Q: ");
        out.push_str(&p.question);
        out.push_str(" T: ");
        out.push_str(&p.target_ids.join(", "));
        out.push_str(" A: ");
        out.push_str(&p.answer);
        out.push('\n');
    }
    out
}

/// A captioning response is free text; returns it trimmed, or `None` if empty.
pub fn parse_caption(response: &str) -> Option<String> {
    let t = response.trim();
    let t = t.strip_prefix("Caption:").map(str::trim).unwrap_or(t);
    (!t.is_empty()).then(|| t.to_string())
}
