use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::{parse_http_url, FieldMap};

fn bullet_re() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| Regex::new(r"^\s*(?:[-*•]|\d{1,2}[.)])\s+").expect("valid regex"))
}

fn pair_re() -> &'static Regex {
    static CELL: OnceLock<Regex> = OnceLock::new();
    CELL.get_or_init(|| Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$").expect("valid regex"))
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
}

fn strip_bullet(line: &str) -> &str {
    match bullet_re().find(line) {
        Some(m) => &line[m.end()..],
        None => line,
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('`', '`'), ('<', '>')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

/// `key: value` lines. Lines that do not fit are ignored; the reply is
/// structured only if at least one pair was found. First occurrence wins.
pub fn parse_field_map(text: &str) -> Option<FieldMap> {
    let mut map = FieldMap::new();
    for line in content_lines(text) {
        let Some(caps) = pair_re().captures(strip_bullet(line)) else { continue };
        let value = caps[2].trim();
        // "https://..." on its own line is a URL, not a key named "https".
        if value.starts_with("//") {
            continue;
        }
        map.entry(caps[1].to_ascii_lowercase()).or_insert_with(|| unquote(value).to_string());
    }
    (!map.is_empty()).then_some(map)
}

/// One absolute http(s) URL per line; bullets and numbering are tolerated.
pub fn parse_url_list(text: &str) -> Option<Vec<String>> {
    let urls: Vec<String> = content_lines(text)
        .map(|l| unquote(strip_bullet(l)))
        .filter(|l| parse_http_url(l).is_some())
        .map(String::from)
        .collect();
    (!urls.is_empty()).then_some(urls)
}

const MAX_KEYWORD_CHARS: usize = 80;
const MAX_KEYWORD_WORDS: usize = 8;

/// One keyword per line, or a single comma-separated line. Sentences are
/// not keywords: any over-long item makes the whole reply unstructured.
pub fn parse_keyword_list(text: &str) -> Option<Vec<String>> {
    let lines: Vec<&str> = content_lines(text).map(strip_bullet).collect();
    let items: Vec<String> = if lines.len() == 1 && lines[0].contains(',') {
        lines[0].split(',').map(|s| unquote(s).to_string()).collect()
    } else {
        lines.iter().map(|s| unquote(s).to_string()).collect()
    };
    let items: Vec<String> = items.into_iter().filter(|s| !s.is_empty()).collect();
    if items.is_empty()
        || items
            .iter()
            .any(|s| s.chars().count() > MAX_KEYWORD_CHARS || s.split_whitespace().count() > MAX_KEYWORD_WORDS)
    {
        return None;
    }
    Some(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_map_grammar() {
        let m = parse_field_map("```\ntitle: AI Institutes\nurl: https://nsf.gov/x\n- end_date: \"2026-05-20\"\nTitle: dup\n```").unwrap();
        assert_eq!(m["title"], "AI Institutes");
        assert_eq!(m["url"], "https://nsf.gov/x");
        assert_eq!(m["end_date"], "2026-05-20");
        assert_eq!(m.len(), 3);
        assert_eq!(parse_field_map("This page describes a program for ocean research."), None);
        assert_eq!(parse_field_map("https://nsf.gov/x"), None);
        assert_eq!(parse_field_map(""), None);
    }

    #[test]
    fn url_list_grammar() {
        let l = parse_url_list("1. https://a.org/grants\n- <https://a.org/apply>\nnot a url\n/relative").unwrap();
        assert_eq!(l, ["https://a.org/grants", "https://a.org/apply"]);
        assert_eq!(parse_url_list("no urls here"), None);
    }

    #[test]
    fn keyword_grammar() {
        assert_eq!(
            parse_keyword_list("- climate adaptation\n- \"crop resilience\"\n- irrigation").unwrap(),
            ["climate adaptation", "crop resilience", "irrigation"]
        );
        assert_eq!(parse_keyword_list("solar, grid storage, wind").unwrap(), ["solar", "grid storage", "wind"]);
        assert_eq!(
            parse_keyword_list("I think the best keywords for this document would be the following ones here"),
            None
        );
        assert_eq!(parse_keyword_list("\n\n"), None);
    }
}
