//! Deterministic constraint parsing for follow-up messages.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::OnceLock;

use chrono::{Days, Months, NaiveDate};
use regex::Regex;

/// Phrases that force a web search for the current turn.
pub const RECENCY_PHRASES: [&str; 4] = ["last week", "recently posted", "this week", "just announced"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Constraints {
    pub min_end_date: Option<NaiveDate>,
    pub max_end_date: Option<NaiveDate>,
    pub agencies: BTreeSet<String>,
    pub recency: bool,
    /// The message with every recognized constraint phrase removed.
    pub residual: String,
}

impl Constraints {
    pub fn has_deadline(&self) -> bool {
        self.min_end_date.is_some() || self.max_end_date.is_some()
    }
}

const NUMBER: &str = r"(\d{1,3}|an?|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|eighteen|twenty[- ]four)";
const UNIT: &str = r"(day|week|month|year)s?";

fn word_number(raw: &str) -> Option<u32> {
    let raw = raw.to_ascii_lowercase().replace('-', " ");
    Some(match raw.as_str() {
        "a" | "an" | "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "eighteen" => 18,
        "twenty four" => 24,
        digits => digits.parse().ok()?,
    })
}

fn shift(today: NaiveDate, n: u32, unit: &str) -> Option<NaiveDate> {
    match unit.to_ascii_lowercase().as_str() {
        "day" => today.checked_add_days(Days::new(n.into())),
        "week" => today.checked_add_days(Days::new(u64::from(n) * 7)),
        "month" => today.checked_add_months(Months::new(n)),
        "year" => today.checked_add_months(Months::new(n.checked_mul(12)?)),
        _ => None,
    }
}

struct Patterns {
    beyond: Regex,
    within: Regex,
    after: Regex,
    before: Regex,
}

fn patterns() -> &'static Patterns {
    static CELL: OnceLock<Patterns> = OnceLock::new();
    CELL.get_or_init(|| Patterns {
        beyond: Regex::new(&format!(
            r"(?i)\b(?:more than|over|at least|beyond)\s+{NUMBER}\s+{UNIT}\s+(?:away|out|from now|ahead|off)\b"
        ))
        .expect("valid regex"),
        within: Regex::new(&format!(r"(?i)\b(?:within|in)\s+(?:the\s+next\s+)?{NUMBER}\s+{UNIT}\b")).expect("valid regex"),
        after: Regex::new(r"(?i)\b(?:after|later than|on or after)\s+(\d{4}-\d{2}-\d{2})\b").expect("valid regex"),
        before: Regex::new(r"(?i)\b(?:before|by|no later than|on or before)\s+(\d{4}-\d{2}-\d{2})\b").expect("valid regex"),
    })
}

fn later(a: Option<NaiveDate>, b: NaiveDate) -> Option<NaiveDate> {
    Some(a.map_or(b, |a| a.max(b)))
}

fn earlier(a: Option<NaiveDate>, b: NaiveDate) -> Option<NaiveDate> {
    Some(a.map_or(b, |a| a.min(b)))
}

/// Parses deadline windows relative to `today`, agency mentions among
/// `known_agencies` (whole word, case-insensitive) and recency phrases.
pub fn parse_constraints(text: &str, known_agencies: &BTreeSet<String>, today: NaiveDate) -> Constraints {
    let p = patterns();
    let mut c = Constraints::default();
    let mut spans: Vec<Range<usize>> = Vec::new();

    for caps in p.beyond.captures_iter(text) {
        if let Some(d) = word_number(&caps[1]).and_then(|n| shift(today, n, &caps[2])) {
            c.min_end_date = later(c.min_end_date, d);
            spans.push(caps.get(0).expect("match").range());
        }
    }
    for caps in p.within.captures_iter(text) {
        if let Some(d) = word_number(&caps[1]).and_then(|n| shift(today, n, &caps[2])) {
            c.max_end_date = earlier(c.max_end_date, d);
            spans.push(caps.get(0).expect("match").range());
        }
    }
    for caps in p.after.captures_iter(text) {
        if let Ok(d) = NaiveDate::parse_from_str(&caps[1], "%Y-%m-%d") {
            c.min_end_date = later(c.min_end_date, d);
            spans.push(caps.get(0).expect("match").range());
        }
    }
    for caps in p.before.captures_iter(text) {
        if let Ok(d) = NaiveDate::parse_from_str(&caps[1], "%Y-%m-%d") {
            c.max_end_date = earlier(c.max_end_date, d);
            spans.push(caps.get(0).expect("match").range());
        }
    }

    for label in known_agencies {
        if label.trim().is_empty() {
            continue;
        }
        if let Some(r) = find_word(text, label.trim()) {
            c.agencies.insert(label.clone());
            spans.push(r);
        }
    }

    let lower = text.to_lowercase();
    let folded: String = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    c.recency = RECENCY_PHRASES.iter().any(|ph| folded.contains(ph));
    for ph in RECENCY_PHRASES {
        // lowercasing ASCII phrases keeps byte offsets aligned for ASCII text
        if lower.len() == text.len() {
            let mut from = 0;
            while let Some(i) = lower[from..].find(ph) {
                spans.push(from + i..from + i + ph.len());
                from += i + ph.len();
            }
        }
    }

    spans.sort_by_key(|r| r.start);
    let mut residual = String::new();
    let mut at = 0;
    for span in spans {
        if span.start > at {
            residual.push_str(&text[at..span.start]);
            residual.push(' ');
        }
        at = at.max(span.end);
    }
    if at < text.len() {
        residual.push_str(&text[at..]);
    }
    c.residual = residual.split_whitespace().collect::<Vec<_>>().join(" ");
    c
}

/// First whole-word, ASCII-case-insensitive occurrence of `word`.
fn find_word(text: &str, word: &str) -> Option<std::ops::Range<usize>> {
    let (hay, needle) = (text.as_bytes(), word.as_bytes());
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    let is_word = |b: Option<&u8>| b.is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_' || *b >= 0x80);
    (0..=hay.len() - needle.len()).find_map(|i| {
        let end = i + needle.len();
        let hit = hay[i..end].eq_ignore_ascii_case(needle)
            && !is_word(i.checked_sub(1).and_then(|j| hay.get(j)))
            && !is_word(hay.get(end));
        hit.then_some(i..end)
    })
}
