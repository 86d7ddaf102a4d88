use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Output, Stdio};

use grantforge_testkit::{ground_truth, FixtureEnv};
use serde_json::Value;

fn grantforge(env: &FixtureEnv, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grantforge"))
        .args(args)
        .arg("--config")
        .arg(&env.config_path)
        .env_remove("GRANTFORGE_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ingested() -> FixtureEnv {
    let env = FixtureEnv::new();
    let o = grantforge(&env, &["ingest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    env
}

fn field(line: &str, name: &str) -> u64 {
    let key = format!("{name}:");
    line.split_whitespace().find_map(|w| w.strip_prefix(&key)).unwrap().parse().unwrap()
}

#[test]
fn ingest_reports_new_records_then_skips() {
    let env = FixtureEnv::new();
    let o = grantforge(&env, &["ingest"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let truth = ground_truth();
    let expected = truth["first_run"].as_object().unwrap();
    assert_eq!(out.lines().count(), expected.len());
    for line in out.lines() {
        let id = line.split_whitespace().next().unwrap().strip_prefix("source=").unwrap();
        assert_eq!(field(line, "new"), expected[id]["new"].as_u64().unwrap(), "{line}");
        assert_eq!(field(line, "rejected"), expected[id]["rejected"].as_u64().unwrap(), "{line}");
    }

    let again = grantforge(&env, &["ingest"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stdout(&again).lines().all(|l| l.ends_with("skipped (not due)")));

    let forced = grantforge(&env, &["ingest", "--force", "--source", "nih"]);
    let line = stdout(&forced);
    assert_eq!(line.lines().count(), 1);
    assert_eq!(field(&line, "new"), 0);
    assert_eq!(field(&line, "unchanged"), 5);
}

#[test]
fn configuration_errors_exit_one() {
    let env = FixtureEnv::new();
    let o = grantforge(&env, &["ingest", "--source", "nowhere"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown source"));

    std::fs::write(&env.config_path, "{ not json").unwrap();
    assert_eq!(grantforge(&env, &["ingest"]).status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_grantforge")).arg("stats").env_remove("GRANTFORGE_CONFIG").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_snapshot_exits_one() {
    let env = FixtureEnv::new();
    for args in [&["stats"][..], &["query", "climate"][..]] {
        let o = grantforge(&env, args);
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stderr).contains("no snapshot"));
    }
}

#[test]
fn stats_match_ground_truth_and_config_falls_back_to_env() {
    let env = ingested();
    let o = Command::new(env!("CARGO_BIN_EXE_grantforge"))
        .args(["stats", "--json"])
        .env("GRANTFORGE_CONFIG", &env.config_path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    let truth = ground_truth();
    assert_eq!(stats["doc_count"], truth["doc_count"]);
    assert_eq!(stats["per_agency_counts"], truth["per_agency_counts"]);

    let text = stdout(&grantforge(&env, &["stats"]));
    assert!(text.starts_with(&format!("doc_count: {}\n", truth["doc_count"])));
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["Foundation", "36"]));
}

fn rows(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn query_ranks_limits_and_filters() {
    let env = ingested();
    let query = ground_truth()["proposal_keywords"].as_array().unwrap().iter().map(|k| k.as_str().unwrap()).collect::<Vec<_>>().join(" ");
    let all = rows(&grantforge(&env, &["query", &query, "--json", "--limit", "50"]));
    assert_eq!(all.len() as u64, ground_truth()["proposal_query_hits"].as_u64().unwrap());
    for pair in all.windows(2) {
        let (a, b) = (pair[0]["score"].as_f64().unwrap(), pair[1]["score"].as_f64().unwrap());
        assert!(a > b || (a == b && pair[0]["id"].as_str() < pair[1]["id"].as_str()));
    }
    assert_eq!(all[0]["rank"], 1);

    let one = rows(&grantforge(&env, &["query", &query, "--json", "--limit", "1"]));
    assert_eq!(one.len(), 1);
    assert_eq!(one[0]["id"], all[0]["id"]);

    let later = rows(&grantforge(&env, &["query", &query, "--json", "--limit", "50", "--min-deadline", "2026-09-01"]));
    assert_eq!(later.len() as u64, ground_truth()["six_months_away_hits"].as_u64().unwrap());
    for r in &later {
        assert!(r["end_date"].as_str().unwrap() >= "2026-09-01");
        assert!(all.iter().any(|a| a["id"] == r["id"]));
    }

    let table = stdout(&grantforge(&env, &["query", &query, "--limit", "3"]));
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().next().unwrap().trim_start().starts_with("1 "));

    let none = grantforge(&env, &["query", "zzzz qqqq"]);
    assert_eq!(none.status.code(), Some(0));
    assert_eq!(stdout(&none).trim(), "no results");
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).unwrap();
    buf
}

#[test]
fn serve_answers_health_and_refuses_a_taken_port() {
    let env = ingested();
    let mut child = Command::new(env!("CARGO_BIN_EXE_grantforge"))
        .args(["serve", "--port", "0", "--config"])
        .arg(&env.config_path)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on http://").expect("listening line").to_string();
    let reply = http_get(&addr, "/v1/healthz");
    child.kill().unwrap();
    let _ = child.wait();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    let body: Value = serde_json::from_str(reply.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["doc_count"], ground_truth()["doc_count"]);

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = grantforge(&env, &["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot listen"));
}
