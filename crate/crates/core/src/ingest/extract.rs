use url::Url;

use super::fetch::PageFetch;
use crate::corpus::{FieldMap, SourceDescriptor};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, Purpose};

/// Keys the extraction prompt asks for. Anything else in a reply is dropped.
pub const SCHEMA_FIELDS: [&str; 6] = ["title", "description", "url", "end_date", "agency", "funding_amount"];
const REQUIRED_KEYS: [&str; 4] = ["title", "description", "url", "end_date"];
const MAX_BODY_CHARS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("page {0} was not fetched successfully")]
    PageNotOk(String),
    #[error("extraction request failed: {0}")]
    Gateway(#[from] GatewayError),
    #[error("extraction reply is not a field map")]
    UnparseableReply,
}

pub fn extraction_request(page: &PageFetch, source: &SourceDescriptor) -> CompletionRequest {
    let prompt = format!(
        "Extract the funding opportunity described by the attached web page.\n\
         Reply with one `key: value` line per field, using only these keys:\n\
         title: the program or solicitation name\n\
         description: one or two sentences on what the program funds\n\
         url: the canonical link to the opportunity\n\
         end_date: the application deadline as written on the page\n\
         agency: the funding organization\n\
         funding_amount: the award amount in US dollars\n\
         Omit a key when the page does not state it. Do not guess.\n\n\
         Source: {} ({})\nPage URL: {}",
        source.source_id, source.agency_label, page.url
    );
    let body: String = page.body.chars().take(MAX_BODY_CHARS).collect();
    CompletionRequest::new(Purpose::ExtractFields, prompt).with_context(body).with_max_reply_tokens(600)
}

/// Sends the page to the model and parses its field map. The returned map
/// always has `title`, `description`, `url` and `end_date` keys; a missing
/// URL defaults to the page's own, and relative URLs resolve against it.
pub fn extract_record(page: &PageFetch, source: &SourceDescriptor, gateway: &Gateway) -> Result<FieldMap, ExtractError> {
    if !page.ok {
        return Err(ExtractError::PageNotOk(page.url.clone()));
    }
    let reply = gateway.complete(&extraction_request(page, source))?;
    let parsed = reply.fields().ok_or(ExtractError::UnparseableReply)?;
    let mut map: FieldMap = parsed
        .iter()
        .filter(|(k, _)| SCHEMA_FIELDS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if map.is_empty() {
        return Err(ExtractError::UnparseableReply);
    }
    for key in REQUIRED_KEYS {
        map.entry(key.to_string()).or_default();
    }
    let url = map["url"].trim().to_string();
    let resolved = if url.is_empty() {
        page.url.clone()
    } else {
        match Url::parse(&url) {
            Ok(_) => url,
            Err(_) => Url::parse(&page.url).and_then(|base| base.join(&url)).map(|u| u.to_string()).unwrap_or(url),
        }
    };
    map.insert("url".into(), resolved);
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use crate::gateway::ScriptedBackend;
    use chrono::Utc;

    fn setup(reply: &str) -> (PageFetch, SourceDescriptor, Gateway) {
        let page = PageFetch::success("https://www.nsf.gov/funding/ai", "<h1>AI Institutes</h1>", Utc::now());
        let src = SourceDescriptor::new("nsf", SourceKind::FederalPortal, "https://www.nsf.gov", "NSF");
        let gw = Gateway::new(ScriptedBackend::default().with_reply(&extraction_request(&page, &src), reply));
        (page, src, gw)
    }

    #[test]
    fn structured_reply() {
        let (page, src, gw) = setup("title: AI Institutes\nurl: https://www.nsf.gov/funding/ai\nend_date: 2026-05-20\nnote: ignored");
        let map = extract_record(&page, &src, &gw).unwrap();
        assert_eq!(map["title"], "AI Institutes");
        assert_eq!(map["end_date"], "2026-05-20");
        assert_eq!(map["description"], "");
        assert!(!map.contains_key("note"));
    }

    #[test]
    fn missing_url_defaults_to_page() {
        let (page, src, gw) = setup("title: AI Institutes");
        assert_eq!(extract_record(&page, &src, &gw).unwrap()["url"], page.url);
        let (page, src, gw) = setup("title: AI Institutes\nurl: /funding/ai-2");
        assert_eq!(extract_record(&page, &src, &gw).unwrap()["url"], "https://www.nsf.gov/funding/ai-2");
    }

    #[test]
    fn prose_reply_is_an_error() {
        let (page, src, gw) = setup("This page describes an AI program run by the NSF.");
        assert_eq!(extract_record(&page, &src, &gw), Err(ExtractError::UnparseableReply));
        let (page, src, gw) = setup("Note: I could not find anything.");
        assert_eq!(extract_record(&page, &src, &gw), Err(ExtractError::UnparseableReply));
    }

    #[test]
    fn no_script_is_a_gateway_error() {
        let (mut page, src, gw) = setup("title: x");
        page.body.push('!');
        assert!(matches!(extract_record(&page, &src, &gw), Err(ExtractError::Gateway(GatewayError::NoScript { .. }))));
    }
}
