use std::collections::BTreeMap;

use chrono::{Days, NaiveDate, Utc};
use grantforge_core::agent::{check_event_log, run_turn, EventPayload, Tool, TurnContext};
use grantforge_core::gateway::{Gateway, HeuristicBackend};
use grantforge_core::web::{DisabledWebSearch, FixtureWebSearch, WebResult, WebSearch};
use grantforge_core::{AgentEvent, Clock, FixedClock, Opportunity, Provenance, SessionState, SourceKind, UnifiedIndex};
use proptest::prelude::*;

// kept separate from the implementation's list on purpose
const RECENT: [&str; 4] = ["last week", "recently posted", "this week", "just announced"];

fn today() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, 1).unwrap()
}

fn record(i: usize, title: &str, agency: &str, end: Option<NaiveDate>) -> Opportunity {
    let url = format!("https://{}.example.gov/opp/{i}", agency.to_lowercase());
    Opportunity {
        id: grantforge_core::corpus::dedup_key(title, &url),
        title: title.to_string(),
        description: format!("{title} program"),
        url,
        agency: agency.to_string(),
        source_kind: SourceKind::Fixture,
        end_date: end,
        funding_amount: None,
        fetched_at: Utc::now(),
        warnings: vec![],
    }
}

fn build_index(matching: usize, offsets: &[Option<u64>]) -> UnifiedIndex {
    let mut records = Vec::new();
    for i in 0..matching {
        let end = offsets.get(i).copied().flatten().map(|d| today() + Days::new(d));
        records.push(record(i, &format!("Ocean sensing call {i}"), ["NSF", "NOAA"][i % 2], end));
    }
    for i in 0..5 {
        records.push(record(100 + i, &format!("Rural broadband pilot {i}"), "USDA", None));
    }
    UnifiedIndex::from_records(records)
}

fn web() -> FixtureWebSearch {
    let results = (0..3)
        .map(|i| WebResult {
            title: format!("Ocean sensing news {i}"),
            snippet: String::new(),
            url: format!("https://news.example.org/{i}"),
            published_at: None,
        })
        .collect();
    FixtureWebSearch::from_map(BTreeMap::from([("ocean sensing funding opportunity".to_string(), results)]))
}

fn message() -> impl Strategy<Value = String> {
    let constraint = prop::sample::select(vec![
        "",
        "deadlines more than six months away",
        "within 3 months",
        "only NOAA",
        "before 2026-12-31",
        "anything else",
    ]);
    let recency = prop::option::of(prop::sample::select(RECENT.to_vec()));
    (constraint, recency).prop_map(|(c, r)| match r {
        Some(r) => format!("{c} posted {r}").trim().to_string(),
        None if c.is_empty() => "show more".to_string(),
        None => c.to_string(),
    })
}

fn check_turn(text: &str, events: &[AgentEvent], index: &UnifiedIndex) -> Result<(), TestCaseError> {
    prop_assert!(check_event_log(events).is_empty(), "{:?}", check_event_log(events));
    let calls: Vec<Tool> = events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::ToolCall { tool, .. } => Some(*tool),
            _ => None,
        })
        .collect();
    prop_assert_eq!(calls.first(), Some(&Tool::SearchIndex));
    let index_count = events
        .iter()
        .find_map(|e| match &e.payload {
            EventPayload::ToolResult { tool: Tool::SearchIndex, count, .. } => Some(*count),
            _ => None,
        })
        .expect("index result");
    let lower = text.to_lowercase();
    let wants_web = index_count < 3 || RECENT.iter().any(|p| lower.contains(p));
    let web_calls = calls.iter().filter(|t| **t == Tool::WebSearch).count();
    prop_assert_eq!(web_calls, usize::from(wants_web), "{:?} count {}", text, index_count);

    let urls: Vec<String> = index.records().into_iter().map(|r| r.url).collect();
    let mut seen_web = false;
    for e in events {
        if let EventPayload::ResultItem { card, .. } = &e.payload {
            match card.provenance {
                Provenance::Index => {
                    prop_assert!(!seen_web, "index card after web card");
                    prop_assert!(urls.contains(&card.url));
                }
                Provenance::Web => seen_web = true,
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn policy_invariants_hold(
        matching in 0usize..9,
        offsets in prop::collection::vec(prop::option::of(0u64..400), 9),
        follow_ups in prop::collection::vec(message(), 0..4),
        opener_recent in any::<bool>(),
        web_down in any::<bool>(),
    ) {
        let index = build_index(matching, &offsets);
        let gateway = Gateway::new(HeuristicBackend);
        let clock = FixedClock::on(today());
        let fixture = web();
        let web: &dyn WebSearch = if web_down { &DisabledWebSearch } else { &fixture };
        let ctx = TurnContext { index: &index, web, gateway: &gateway, clock: &clock as &dyn Clock, limit: 10 };
        let mut state = SessionState::new("prop");
        let opener = if opener_recent { "ocean sensing grants posted this week" } else { "ocean sensing grants" };
        let mut messages = vec![opener.to_string()];
        messages.extend(follow_ups);
        for (turn, text) in messages.iter().enumerate() {
            let mut events = Vec::new();
            run_turn(&mut state, text, &ctx, &mut |e| events.push(e)).unwrap();
            check_turn(text, &events, &index)?;
            prop_assert_eq!(events[0].seq, 1);
            prop_assert_eq!(state.turn_count, turn as u64 + 1);
            prop_assert!(!state.plan.keywords.is_empty());
        }
    }
}
