use std::sync::Arc;
use std::time::Duration;

use chrono::{NaiveDate, TimeZone, Utc};
use futures::StreamExt;
use grantforge_core::gateway::{Gateway, HeuristicBackend};
use grantforge_core::web::{FixtureWebSearch, SearchError, WebResult, WebSearch};
use grantforge_core::{Clock, FixedClock, Opportunity, SourceKind, UnifiedIndex};
use grantforge_service::{serve, AppState, ServiceSettings};
use grantforge_testkit::{SseFrame, SseReader};
use serde_json::{json, Value};
use tokio::sync::oneshot;

fn today() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, 1).unwrap()
}

fn record(title: &str, agency: &str, end: Option<NaiveDate>) -> Opportunity {
    let url = format!("https://{}.example.gov/{}", agency.to_lowercase(), title.to_lowercase().replace(' ', "-"));
    Opportunity {
        id: grantforge_core::corpus::dedup_key(title, &url),
        title: title.into(),
        description: format!("{title} support for research teams"),
        url,
        agency: agency.into(),
        source_kind: SourceKind::Fixture,
        end_date: end,
        funding_amount: Some(50_000),
        fetched_at: Utc.with_ymd_and_hms(2026, 2, 20, 0, 0, 0).unwrap(),
        warnings: vec![],
    }
}

fn corpus() -> Vec<Opportunity> {
    vec![
        record("Ocean sensing networks", "NOAA", NaiveDate::from_ymd_opt(2026, 9, 1)),
        record("Ocean sensing fellowships", "NSF", NaiveDate::from_ymd_opt(2026, 5, 1)),
        record("Ocean sensing instruments", "NSF", None),
        record("Ocean sensing archive", "NOAA", NaiveDate::from_ymd_opt(2025, 12, 1)),
        record("Rural clinics", "NIH", None),
    ]
}

/// Sleeps before answering so a turn stays active for a while.
struct SlowWeb(Duration);

impl WebSearch for SlowWeb {
    fn search(&self, _: &str, _: usize) -> Result<Vec<WebResult>, SearchError> {
        std::thread::sleep(self.0);
        Ok(vec![WebResult {
            title: "Ocean sensing news".into(),
            snippet: "Applications due 2026-07-01".into(),
            url: "https://news.example.org/ocean".into(),
            published_at: None,
        }])
    }
}

struct Server {
    base: String,
    client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Server {
    async fn start(web: Arc<dyn WebSearch>) -> Self {
        let index = Arc::new(UnifiedIndex::from_records(corpus()));
        let clock: Arc<dyn Clock> = Arc::new(FixedClock::on(today()));
        let state = AppState::new(index, Gateway::new(HeuristicBackend), web, clock, ServiceSettings::default());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = oneshot::channel();
        let task = tokio::spawn(serve(listener, state, async {
            let _ = stopped.await;
        }));
        Self { base, client: reqwest::Client::new(), stop: Some(stop), task }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn session(&self) -> String {
        let resp = self.client.post(self.url("/v1/sessions")).send().await.unwrap();
        assert_eq!(resp.status(), 201);
        let body: Value = resp.json().await.unwrap();
        body["session_id"].as_str().unwrap().to_string()
    }

    async fn turn(&self, id: &str, text: &str) -> Vec<SseFrame> {
        let resp = self.client.post(self.url(&format!("/v1/sessions/{id}/messages"))).json(&json!({"text": text})).send().await.unwrap();
        assert_eq!(resp.status(), 200);
        collect(resp).await
    }

    async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }
}

async fn collect(resp: reqwest::Response) -> Vec<SseFrame> {
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut reader = SseReader::default();
    let mut frames = Vec::new();
    let mut body = resp.bytes_stream();
    while let Some(chunk) = body.next().await {
        frames.extend(reader.push(&chunk.unwrap()));
    }
    frames
}

fn data(frame: &SseFrame) -> Value {
    serde_json::from_str(&frame.data).unwrap()
}

#[tokio::test]
async fn sessions_are_created_with_distinct_ids() {
    let server = Server::start(Arc::new(FixtureWebSearch::default())).await;
    let a = server.session().await;
    let b = server.session().await;
    assert_ne!(a, b);
    let view: Value = server.client.get(server.url(&format!("/v1/sessions/{a}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["turn_count"], 0);
    for path in ["/v1/sessions/nope", "/v1/opportunities/nope"] {
        assert_eq!(server.client.get(server.url(path)).send().await.unwrap().status(), 404);
    }
    let resp = server.client.post(server.url("/v1/sessions/nope/messages")).json(&json!({"text": "x"})).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    server.shutdown().await;
}

#[tokio::test]
async fn turn_streams_frames_in_order() {
    let server = Server::start(Arc::new(FixtureWebSearch::default())).await;
    let id = server.session().await;
    let frames = server.turn(&id, "ocean sensing").await;
    let kinds: Vec<&str> = frames.iter().map(|f| f.event.as_str()).collect();
    assert_eq!(kinds[..3], ["thought", "tool_call", "tool_result"]);
    assert_eq!(kinds.iter().filter(|k| **k == "result_item").count(), 4);
    assert_eq!(kinds[kinds.len() - 2..], ["summary", "done"]);
    let mut last = 0;
    for f in &frames {
        let d = data(f);
        assert_eq!(d["kind"], f.event.as_str());
        let seq = d["seq"].as_u64().unwrap();
        assert!(seq > last);
        last = seq;
    }
    assert_eq!(data(&frames[1])["tool"], "search_index");
    let first_card = &data(&frames[3])["card"];
    assert_eq!(first_card["provenance"], "index");

    let frames = server.turn(&id, "only NOAA").await;
    let items: Vec<Value> = frames.iter().filter(|f| f.event == "result_item").map(data).collect();
    assert!(items.len() < 4);
    assert!(items.iter().filter(|i| i["card"]["provenance"] == "index").all(|i| i["card"]["agency"] == "NOAA"));
    assert_eq!(data(&frames[0])["seq"], 1);

    let view: Value = server.client.get(server.url(&format!("/v1/sessions/{id}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["turn_count"], 2);
    assert!(!view["plan"]["keywords"].as_array().unwrap().is_empty());
    server.shutdown().await;
}

#[tokio::test]
async fn second_message_during_a_turn_is_rejected() {
    let server = Server::start(Arc::new(SlowWeb(Duration::from_millis(600)))).await;
    let id = server.session().await;
    let url = server.url(&format!("/v1/sessions/{id}/messages"));
    let first = server.client.post(&url).json(&json!({"text": "ocean sensing posted this week"})).send().await.unwrap();
    assert_eq!(first.status(), 200);
    let second = server.client.post(&url).json(&json!({"text": "again"})).send().await.unwrap();
    assert_eq!(second.status(), 409);
    let frames = collect(first).await;
    assert_eq!(frames.last().unwrap().event, "done");
    let last_index = frames.iter().rposition(|f| f.event == "result_item" && data(f)["card"]["provenance"] == "index").unwrap();
    let first_web = frames.iter().position(|f| f.event == "result_item" && data(f)["card"]["provenance"] == "web").unwrap();
    assert!(last_index < first_web);
    let resp = server.client.post(&url).json(&json!({"text": ""})).send().await.unwrap();
    assert_eq!(resp.status(), 400);
    let resp = server.client.post(&url).header("content-type", "application/json").body("{").send().await.unwrap();
    assert_eq!(resp.status(), 400);
    server.shutdown().await;
}

#[tokio::test]
async fn document_upload_rules() {
    let server = Server::start(Arc::new(FixtureWebSearch::default())).await;
    let id = server.session().await;
    let url = server.url(&format!("/v1/sessions/{id}/documents"));
    let text = "We propose ocean sensing networks for coastal monitoring and ocean sensing data sharing.";
    let resp = server
        .client
        .post(&url)
        .header("content-type", "text/plain; charset=utf-8")
        .header("x-filename", "proposal.txt")
        .body(text)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let body: Value = resp.json().await.unwrap();
    assert!(!body["keywords"].as_array().unwrap().is_empty());
    assert_eq!(body["filename"], "proposal.txt");

    let pdf = server.client.post(&url).header("content-type", "application/pdf").body("%PDF").send().await.unwrap();
    assert_eq!(pdf.status(), 415);
    let bare = server.client.post(&url).body("text").send().await.unwrap();
    assert_eq!(bare.status(), 415);
    let empty = server.client.post(&url).header("content-type", "text/markdown").body("  ").send().await.unwrap();
    assert_eq!(empty.status(), 400);
    let binary = server.client.post(&url).header("content-type", "text/plain").body(vec![0xff, 0xfe, 0x00]).send().await.unwrap();
    assert_eq!(binary.status(), 400);
    let missing = server
        .client
        .post(server.url("/v1/sessions/nope/documents"))
        .header("content-type", "text/plain")
        .body("x")
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);

    let view: Value = server.client.get(server.url(&format!("/v1/sessions/{id}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["uploaded_keywords"], body["keywords"]);
    server.shutdown().await;
}

#[tokio::test]
async fn opportunity_lookup_and_health() {
    let server = Server::start(Arc::new(FixtureWebSearch::default())).await;
    let archive = &corpus()[3];
    let resp = server.client.get(server.url(&format!("/v1/opportunities/{}", archive.id))).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["status"], "expired");
    assert_eq!(body["url"], archive.url.as_str());
    let open = &corpus()[0];
    let body: Value =
        server.client.get(server.url(&format!("/v1/opportunities/{}", open.id))).send().await.unwrap().json().await.unwrap();
    assert_eq!(body["status"], "open");

    let health: Value = server.client.get(server.url("/v1/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["doc_count"], 5);
    assert_eq!(health["per_agency_counts"], json!({"NIH": 1, "NOAA": 2, "NSF": 2}));
    assert!(health["last_modified"].is_string());
    server.shutdown().await;
}
