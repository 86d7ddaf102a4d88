//! Just enough HTML handling for link discovery and the heuristic extractor.
//! Not a parser: tags are matched with regexes and scripts/styles are dropped.

use std::sync::OnceLock;

use regex::Regex;
use url::Url;

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static CELL: OnceLock<Regex> = OnceLock::new();
            CELL.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(script_re, r"(?is)<(script|style|noscript)\b.*?</(script|style|noscript)\s*>");
re!(comment_re, r"(?s)<!--.*?-->");
re!(block_re, r"(?i)</?(p|div|br|li|ul|ol|h[1-6]|tr|td|th|section|article|header|footer|dt|dd|table)\b[^>]*>");
re!(tag_re, r"(?s)<[^>]*>");
re!(href_re, r#"(?i)<a\b[^>]*?\bhref\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#);
re!(title_re, r"(?is)<title\b[^>]*>(.*?)</title\s*>");
re!(h1_re, r"(?is)<h1\b[^>]*>(.*?)</h1\s*>");
re!(p_re, r"(?is)<p\b[^>]*>(.*?)</p\s*>");
re!(meta_re, r#"(?is)<meta\b[^>]*>"#);
re!(attr_re, r#"(?is)\b([a-z:-]+)\s*=\s*(?:"([^"]*)"|'([^']*)')"#);

pub fn decode_entities(s: &str) -> String {
    s.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn inline_text(fragment: &str) -> String {
    let stripped = tag_re().replace_all(fragment, " ");
    decode_entities(&stripped).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Visible text, one line per block element.
pub fn to_text(html: &str) -> String {
    let s = comment_re().replace_all(html, " ");
    let s = script_re().replace_all(&s, " ");
    let s = block_re().replace_all(&s, "\n");
    let s = tag_re().replace_all(&s, " ");
    decode_entities(&s)
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// `<h1>` when present (page titles tend to carry site chrome), else `<title>`.
pub fn title(html: &str) -> Option<String> {
    [h1_re(), title_re()]
        .into_iter()
        .filter_map(|re| re.captures(html).map(|c| inline_text(&c[1])))
        .find(|t| !t.is_empty())
}

/// Content of `<meta name="{name}" content="...">`.
pub fn meta(html: &str, name: &str) -> Option<String> {
    meta_re().find_iter(html).find_map(|tag| {
        let mut key = None;
        let mut content = None;
        for c in attr_re().captures_iter(tag.as_str()) {
            let value = c.get(2).or_else(|| c.get(3)).map_or("", |m| m.as_str());
            match c[1].to_ascii_lowercase().as_str() {
                "name" | "property" => key = Some(value.to_string()),
                "content" => content = Some(value.to_string()),
                _ => {}
            }
        }
        let content = content?;
        key?.eq_ignore_ascii_case(name).then(|| decode_entities(&content).trim().to_string())
    })
}

pub fn first_paragraph(html: &str) -> Option<String> {
    p_re().captures_iter(html).map(|c| inline_text(&c[1])).find(|t| !t.is_empty())
}

/// Absolute http(s) link targets in document order, fragments removed.
pub fn links(html: &str, base: &str) -> Vec<String> {
    let base = Url::parse(base).ok();
    href_re()
        .captures_iter(html)
        .filter_map(|c| {
            let raw = decode_entities(c.get(1).or_else(|| c.get(2)).or_else(|| c.get(3))?.as_str().trim());
            let mut url = match &base {
                Some(b) => b.join(&raw).ok()?,
                None => Url::parse(&raw).ok()?,
            };
            url.set_fragment(None);
            matches!(url.scheme(), "http" | "https").then(|| url.to_string())
        })
        .collect()
}
