//! Direction vocabulary shared by the generator, the fidelity checker and
//! the evaluator.
//!
//! Agent-relative direction phrases recognized (case-insensitive):
//!
//! | direction | phrases |
//! |-----------|---------|
//! | left/right | `on/to your/my left`, `(to the) left of you/me` |
//! | front | `in front of you/me`, `ahead of you/me` |
//! | back | `behind you/me`, `on/to your/my back` |
//!
//! Phrases such as "on the left" with no explicit agent are not treated as
//! agent-relative.

use std::sync::LazyLock;

use regex::Regex;

use crate::geometry::DirectionBin;

/// Pluralizes the last word of a label ("trash bin" -> "trash bins").
pub fn plural(label: &str) -> String {
    let (head, last) = match label.rsplit_once(' ') {
        Some((h, l)) => (Some(h), l),
        None => (None, label),
    };
    let p = if last.ends_with('s')
        || last.ends_with('x')
        || last.ends_with('z')
        || last.ends_with("ch")
        || last.ends_with("sh")
    {
        format!("{last}es")
    } else if last.ends_with("lf") {
        format!("{}ves", &last[..last.len() - 1])
    } else if last.ends_with('y') && !last.ends_with("ay") && !last.ends_with("ey") && !last.ends_with("oy") {
        format!("{}ies", &last[..last.len() - 1])
    } else {
        format!("{last}s")
    };
    match head {
        Some(h) => format!("{h} {p}"),
        None => p,
    }
}

/// Parses the leading count of an answer: digits, number words up to
/// twelve, or "none"/"no"/"zero".
pub fn parse_count(answer: &str) -> Option<usize> {
    let first = answer
        .trim()
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())?
        .to_lowercase();
    if let Ok(n) = first.parse::<usize>() {
        return Some(n);
    }
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    match first.as_str() {
        "none" | "no" => Some(0),
        w => WORDS.iter().position(|x| *x == w),
    }
}

pub fn count_word(n: usize) -> String {
    if n == 0 {
        "none".to_string()
    } else {
        n.to_string()
    }
}

const AGENT_DIRECTION: &str = r"(?:(?:on|to)\s+(?:your|my)\s+(?P<lr1>left|right)\b|(?:to\s+the\s+)?(?P<lr2>left|right)\s+of\s+(?:you|me)\b|(?P<front>in\s+front\s+of|ahead\s+of)\s+(?:you|me)\b|(?P<back>behind\s+(?:you|me)\b|(?:on|to)\s+(?:your|my)\s+back\b))";

static AFTER_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^\s+(?:(?:that|which)\s+(?:is|are)\s+|(?:is|are)\s+)?{AGENT_DIRECTION}"
    ))
    .expect("valid regex")
});

static LEADING_DIRECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^(?:it\s+is\s+|it's\s+|they\s+are\s+)?{AGENT_DIRECTION}")).expect("valid regex")
});

static ANY_DIRECTION_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?P<left>left)\b|\b(?P<right>right)\b|\b(?P<front>front|ahead|forward)\b|\b(?P<back>behind|backwards?|back)\b")
        .expect("valid regex")
});

fn direction_from_caps(caps: &regex::Captures<'_>) -> DirectionBin {
    if let Some(m) = caps.name("lr1").or_else(|| caps.name("lr2")) {
        if m.as_str() == "left" {
            DirectionBin::Left
        } else {
            DirectionBin::Right
        }
    } else if caps.name("front").is_some() {
        DirectionBin::Front
    } else {
        DirectionBin::Back
    }
}

/// Direction phrase at the very start of `text` ("On your left.", "Behind you").
pub fn leading_direction(text: &str) -> Option<DirectionBin> {
    let lower = text.trim().to_lowercase();
    LEADING_DIRECTION.captures(&lower).map(|c| direction_from_caps(&c))
}

/// First direction word anywhere in `text`, agent-relative or not.
pub fn first_direction_word(text: &str) -> Option<DirectionBin> {
    direction_words(text).first().copied()
}

/// Every direction word in `text`, in order.
pub fn direction_words(text: &str) -> Vec<DirectionBin> {
    let lower = text.to_lowercase();
    ANY_DIRECTION_WORD
        .captures_iter(&lower)
        .map(|caps| {
            if caps.name("left").is_some() {
                DirectionBin::Left
            } else if caps.name("right").is_some() {
                DirectionBin::Right
            } else if caps.name("front").is_some() {
                DirectionBin::Front
            } else {
                DirectionBin::Back
            }
        })
        .collect()
}

/// A label immediately followed by an agent-relative direction phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub label: String,
    pub direction: DirectionBin,
    /// Byte span of the label occurrence in the lowercased text.
    pub start: usize,
    pub end: usize,
}

const NEGATORS: [&str; 6] = ["no", "not", "never", "without", "none", "nothing"];

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn negated_before(text: &str, start: usize) -> bool {
    text[..start]
        .rsplit(|c: char| c.is_whitespace())
        .filter(|w| !w.is_empty())
        .take(4)
        .any(|w| {
            let w = w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            NEGATORS.contains(&w) || w.ends_with("n't")
        })
}

/// Label mentions that claim an agent-relative direction.
///
/// Longer labels win over labels they contain ("coffee table" over
/// "table"); plural forms are recognized; negated mentions ("no chair on
/// your left") are skipped.
pub fn direction_mentions<S: AsRef<str>>(text: &str, labels: &[S]) -> Vec<Mention> {
    let lower = text.to_lowercase();
    let mut sorted: Vec<String> = labels.iter().map(|l| l.as_ref().to_lowercase()).collect();
    sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    sorted.dedup();

    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut found: Vec<(usize, usize, String)> = Vec::new();
    for label in &sorted {
        if label.is_empty() {
            continue;
        }
        let forms = [plural(label), label.clone()];
        for form in &forms {
            for (start, _) in lower.match_indices(form.as_str()) {
                let end = start + form.len();
                let bytes = lower.as_bytes();
                if start > 0 && is_word_byte(bytes[start - 1]) {
                    continue;
                }
                if end < bytes.len() && is_word_byte(bytes[end]) {
                    continue;
                }
                if taken.iter().any(|&(s, e)| start < e && s < end) {
                    continue;
                }
                taken.push((start, end));
                found.push((start, end, label.clone()));
            }
        }
    }
    found.sort();
    found
        .into_iter()
        .filter_map(|(start, end, label)| {
            let caps = AFTER_LABEL.captures(&lower[end..])?;
            if negated_before(&lower, start) {
                return None;
            }
            Some(Mention {
                label,
                direction: direction_from_caps(&caps),
                start,
                end,
            })
        })
        .collect()
}

/// Replaces the first agent-relative phrase for `from` in `text` with the
/// phrase for `to`. Used to build spatial mutations.
pub fn swap_direction_phrase(text: &str, from: DirectionBin, to: DirectionBin) -> Option<String> {
    let pos = text.find(from.phrase())?;
    Some(format!("{}{}{}", &text[..pos], to.phrase(), &text[pos + from.phrase().len()..]))
}
