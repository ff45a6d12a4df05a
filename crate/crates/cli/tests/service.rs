mod common;

use std::sync::Arc;

use common::{mock_engine, DownEmbedder, Server};
use mathsearch_cli::config::Config;
use mathsearch_cli::service::TIMING_HEADER;
use reqwest::blocking::Client;
use serde_json::{json, Value};

fn config() -> Config {
    Config {
        mock_providers: true,
        ..Config::default()
    }
}

fn post(client: &Client, server: &Server, body: &str) -> (u16, Option<String>, String) {
    let r = client
        .post(server.url("/search"))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .unwrap();
    let status = r.status().as_u16();
    let timing = r.headers().get(TIMING_HEADER).map(|v| v.to_str().unwrap().to_string());
    (status, timing, r.text().unwrap())
}

fn error_code(body: &str) -> String {
    let v: Value = serde_json::from_str(body).unwrap();
    assert!(v["error"]["message"].is_string(), "{body}");
    v["error"]["code"].as_str().unwrap().to_string()
}

#[test]
fn health_reports_corpus_and_index() {
    let server = Server::start(config(), common::engine_with(40, Arc::new(DownEmbedder)));
    let v: Value = reqwest::blocking::get(server.url("/health")).unwrap().json().unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["corpus_size"], 60);
    assert_eq!(v["indexed"], 40);
    assert_eq!(v["index"]["m"], 16);
    assert_eq!(v["index"]["ef_search"], 100);
}

#[test]
fn identical_requests_get_identical_bodies() {
    let server = Server::start(config(), mock_engine(120));
    let client = Client::new();
    let body = r#"{"query": "every compact group divides a finite ring", "k": 7, "augment": false}"#;
    let (s1, t1, b1) = post(&client, &server, body);
    let (s2, _, b2) = post(&client, &server, body);
    assert_eq!((s1, s2), (200, 200));
    assert_eq!(b1, b2);
    assert!(t1.unwrap().parse::<f64>().unwrap() >= 0.0);
    let v: Value = serde_json::from_str(&b1).unwrap();
    assert!(v.get("timing_ms").is_none());
    assert!(v.get("augmented_query").is_none());
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 7);
    let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for (i, r) in results.iter().enumerate() {
        assert_eq!(r["rank"], i + 1);
        for field in ["theorem_id", "name", "formal_statement", "informal_name", "informal_statement"] {
            assert!(r[field].is_string(), "missing {field}");
        }
    }
}

#[test]
fn augmentation_is_reported_and_timing_can_go_in_body() {
    let cfg = Config {
        timing_in_body: true,
        ..config()
    };
    let server = Server::start(cfg, mock_engine(30));
    let (status, _, body) = post(&Client::new(), &server, r#"{"query": "bounded monotone sequence"}"#);
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["augmented_query"]["augmented"], true);
    assert_eq!(v["augmented_query"]["original"], "bounded monotone sequence");
    assert!(v["timing_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["results"].as_array().unwrap().len(), 20);
}

#[test]
fn bad_requests_are_400() {
    let cfg = Config {
        max_query_chars: 50,
        ..config()
    };
    let server = Server::start(cfg, mock_engine(20));
    let client = Client::new();
    let long = json!({"query": "x".repeat(51)}).to_string();
    let cases = [
        (r#"{"query": ""}"#, "empty_query"),
        (r#"{"query": "   \n"}"#, "empty_query"),
        (long.as_str(), "query_too_long"),
        (r#"{"query": "group", "k": 0}"#, "invalid_k"),
        (r#"{"query": "group", "k": 101}"#, "invalid_k"),
        (r#"{"query": "#, "invalid_request"),
        (r#"{"k": 3}"#, "invalid_request"),
    ];
    for (body, code) in cases {
        let (status, _, text) = post(&client, &server, body);
        assert_eq!(status, 400, "{body}");
        assert_eq!(error_code(&text), code, "{body}");
    }
    let at_limit = json!({"query": "y".repeat(50), "augment": false}).to_string();
    assert_eq!(post(&client, &server, &at_limit).0, 200);
}

#[test]
fn embedding_provider_failure_is_502() {
    let server = Server::start(config(), common::engine_with(20, Arc::new(DownEmbedder)));
    let (status, _, body) = post(&Client::new(), &server, r#"{"query": "prime divisor", "augment": false}"#);
    assert_eq!(status, 502);
    assert_eq!(error_code(&body), "embedding_provider_error");
    let health = reqwest::blocking::get(server.url("/health")).unwrap();
    assert_eq!(health.status().as_u16(), 200);
}

#[test]
fn theorem_lookup() {
    let server = Server::start(config(), mock_engine(10));
    let v: Value = reqwest::blocking::get(server.url("/theorem/Synth.Prop3")).unwrap().json().unwrap();
    assert_eq!(v["kind"], "definition");
    assert!(v["informal_name"].is_null());
    let search: Value = Client::new()
        .post(server.url("/search"))
        .json(&json!({"query": "normal ring", "k": 1, "augment": false}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = search["results"][0]["theorem_id"].as_str().unwrap().to_string();
    let v: Value = reqwest::blocking::get(server.url(&format!("/theorem/{id}"))).unwrap().json().unwrap();
    assert_eq!(v["id"], id.as_str());
    assert_eq!(v["informal_statement"], search["results"][0]["informal_statement"]);
    let missing = reqwest::blocking::get(server.url("/theorem/No.such")).unwrap();
    assert_eq!(missing.status().as_u16(), 404);
    assert_eq!(error_code(&missing.text().unwrap()), "not_found");
}

#[test]
fn cors_is_opt_in() {
    let plain = Server::start(config(), mock_engine(5));
    let open = Server::start(Config { cors: true, ..config() }, mock_engine(5));
    let get = |s: &Server| {
        Client::new()
            .get(s.url("/health"))
            .header("origin", "http://localhost:5173")
            .send()
            .unwrap()
            .headers()
            .contains_key("access-control-allow-origin")
    };
    assert!(!get(&plain));
    assert!(get(&open));
}
