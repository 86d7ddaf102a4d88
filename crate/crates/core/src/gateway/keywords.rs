use std::collections::HashMap;

use serde::Serialize;

use super::{CompletionRequest, Gateway, Purpose};
use crate::index::tokenize;

pub const MAX_KEYWORDS: usize = 10;
const FALLBACK_KEYWORDS: usize = 8;
const FALLBACK_MIN_CHARS: usize = 4;

/// Function words skipped by the fallback extractor. Shorter words never
/// reach the list because of the length floor.
pub const FUNCTION_WORDS: [&str; 50] = [
    "about", "above", "after", "again", "against", "also", "among", "because", "been", "before",
    "being", "below", "between", "both", "could", "does", "doing", "down", "during", "each",
    "from", "further", "have", "having", "here", "into", "itself", "just", "more", "most",
    "only", "other", "over", "same", "should", "some", "such", "than", "that", "their",
    "them", "then", "there", "these", "they", "this", "those", "through", "with", "would",
];

const KEYWORD_PROMPT: &str = "\
You help researchers find funding opportunities. Read the attached research text and list \
the domain-specific search keywords or short phrases (at most 10) that best describe the \
research, most important first. Reply with one keyword per line and nothing else.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeywordError {
    #[error("document text is empty")]
    EmptyDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordSource {
    Model,
    Fallback,
}

/// Asks the model for keywords, passing the full text as context. Any
/// gateway failure or unstructured reply falls back to [`fallback_keywords`].
pub fn extract_keywords(document_text: &str, gateway: &Gateway) -> Result<Vec<String>, KeywordError> {
    extract_keywords_traced(document_text, gateway).map(|(k, _)| k)
}

pub fn extract_keywords_traced(
    document_text: &str,
    gateway: &Gateway,
) -> Result<(Vec<String>, KeywordSource), KeywordError> {
    if document_text.trim().is_empty() {
        return Err(KeywordError::EmptyDocument);
    }
    let req = CompletionRequest::new(Purpose::ExtractKeywords, KEYWORD_PROMPT)
        .with_context(document_text)
        .with_max_reply_tokens(128);
    if let Ok(reply) = gateway.complete(&req) {
        if let Some(list) = reply.list() {
            let mut out: Vec<String> = Vec::new();
            for kw in list {
                let kw = kw.split_whitespace().collect::<Vec<_>>().join(" ");
                if !kw.is_empty() && !out.iter().any(|k| k.eq_ignore_ascii_case(&kw)) {
                    out.push(kw);
                }
            }
            out.truncate(MAX_KEYWORDS);
            if !out.is_empty() {
                return Ok((out, KeywordSource::Model));
            }
        }
    }
    Ok((fallback_keywords(document_text, FALLBACK_KEYWORDS), KeywordSource::Fallback))
}

/// Deterministic extractor: case-folded tokens of at least four characters,
/// minus [`FUNCTION_WORDS`], ranked by frequency then alphabetically.
pub fn fallback_keywords(text: &str, limit: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for token in tokenize(text) {
        if token.chars().count() >= FALLBACK_MIN_CHARS && !FUNCTION_WORDS.contains(&token.as_str()) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(limit).map(|(t, _)| t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayError, ScriptedBackend};

    struct Down;
    impl crate::gateway::Backend for Down {
        fn id(&self) -> &str {
            "down"
        }
        fn complete_text(&self, _: &CompletionRequest) -> Result<String, GatewayError> {
            Err(GatewayError::Timeout)
        }
    }

    #[test]
    fn function_words_are_distinct() {
        let mut w = FUNCTION_WORDS.to_vec();
        w.sort();
        w.dedup();
        assert_eq!(w.len(), 50);
        assert!(FUNCTION_WORDS.iter().all(|w| w.len() >= FALLBACK_MIN_CHARS));
    }

    #[test]
    fn scripted_reply_is_used_verbatim() {
        let text = "We study climate adaptation for smallholder farms.";
        let req = CompletionRequest::new(Purpose::ExtractKeywords, KEYWORD_PROMPT)
            .with_context(text)
            .with_max_reply_tokens(128);
        let gw = Gateway::new(
            ScriptedBackend::default().with_reply(&req, "climate adaptation\ncrop resilience\nirrigation\nIrrigation"),
        );
        assert_eq!(extract_keywords(text, &gw).unwrap(), ["climate adaptation", "crop resilience", "irrigation"]);
    }

    #[test]
    fn gateway_down_uses_frequency_fallback() {
        let gw = Gateway::new(Down);
        assert_eq!(
            extract_keywords("grant grant proposal proposal proposal solar", &gw).unwrap(),
            ["proposal", "grant", "solar"]
        );
    }

    #[test]
    fn empty_document() {
        let gw = Gateway::new(Down);
        assert_eq!(extract_keywords("", &gw), Err(KeywordError::EmptyDocument));
        assert_eq!(extract_keywords(" \n ", &gw), Err(KeywordError::EmptyDocument));
    }

    #[test]
    fn fallback_skips_short_and_function_words() {
        let out = fallback_keywords("This is about the ocean and the ocean floor with AI", 8);
        assert_eq!(out, ["ocean", "floor"]);
        assert!(fallback_keywords("a b c", 8).is_empty());
    }
}
