mod common;

use std::path::Path;

use common::{run_cli, stderr, stdout, Server};
use mathsearch_cli::artifacts;
use mathsearch_cli::config::Config;
use serde_json::Value;

const MOCK: &str = "--mock-providers";

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run_cli(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let o = run_cli(dir, args);
    (o.status.code().unwrap(), stderr(&o))
}

/// Synthesizes a corpus and runs every stage with the mock providers.
fn pipeline(dir: &Path, docs: usize) {
    ok(dir, &["synth", "--docs", &docs.to_string(), "--corpus", "raw.jsonl", "--benchmark", "bench.json"]);
    ok(dir, &[MOCK, "--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    ok(dir, &[MOCK, "--out", "art", "informalize"]);
    ok(dir, &[MOCK, "--out", "art", "embed"]);
    ok(dir, &[MOCK, "--out", "art", "index"]);
}

#[test]
fn ingest_reports_counts_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (c, err) = code(d, &["--out", "art", "ingest", "--corpus", "missing.jsonl"]);
    assert_eq!(c, 2);
    assert!(err.contains("missing.jsonl"), "{err}");

    let good = r#"{"id":"a","name":"a","kind":"theorem","statement":"theorem a : True","source_path":"A.lean"}"#;
    let text = format!("{good}\nnot json\n{{\"id\":\"b\"}}\n{{\"id\":\"\",\"name\":\"c\",\"kind\":\"theorem\",\"statement\":\"s\",\"source_path\":\"p\"}}\n");
    std::fs::write(d.join("raw.jsonl"), text).unwrap();
    let out = ok(d, &["--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    assert!(out.contains("ingested 1 records"), "{out}");
    assert!(out.contains("3 diagnostics"), "{out}");
    let diags = std::fs::read_to_string(d.join("art").join(artifacts::DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(diags.lines().count(), 3);

    let (c, err) = code(d, &["--out", "strict", "ingest", "--corpus", "raw.jsonl", "--strict"]);
    assert_eq!(c, 2);
    assert!(err.contains("3 diagnostics"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["frobnicate"]).0, 1);
    assert_eq!(code(dir.path(), &["ingest"]).0, 1);
    assert_eq!(code(dir.path(), &[MOCK, "--preset", "nope", "embed"]).0, 1);
    assert_eq!(code(dir.path(), &[MOCK, "search", "q", "--k", "0"]).0, 1);
    assert_eq!(code(dir.path(), &["embed"]).0, 2, "stale before provider check");
    assert!(run_cli(dir.path(), &["--help"]).status.success());
}

#[test]
fn stages_refuse_when_prior_stage_is_missing_or_stale() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (c, err) = code(d, &[MOCK, "--out", "art", "embed"]);
    assert_eq!(c, 2);
    assert!(err.contains("`ingest`"), "{err}");

    pipeline(d, 30);
    ok(d, &["synth", "--docs", "31", "--corpus", "raw.jsonl", "--benchmark", "bench.json"]);
    ok(d, &[MOCK, "--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    let (c, err) = code(d, &[MOCK, "--out", "art", "search", "group"]);
    assert_eq!(c, 2);
    assert!(err.contains("`informalize` is out of date"), "{err}");
    let (c, err) = code(d, &[MOCK, "--out", "art", "index"]);
    assert_eq!(c, 2);
    assert!(err.contains("`informalize`"), "{err}");

    ok(d, &[MOCK, "--out", "art", "informalize"]);
    ok(d, &[MOCK, "--out", "art", "embed"]);
    ok(d, &[MOCK, "--out", "art", "index"]);
    std::fs::write(d.join("art").join(artifacts::INDEX_FILE), b"tampered").unwrap();
    let (c, err) = code(d, &[MOCK, "--out", "art", "search", "group"]);
    assert_eq!(c, 2);
    assert!(err.contains("`index`") && err.contains("modified"), "{err}");
}

#[test]
fn reruns_reuse_caches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, 40);
    let out = ok(d, &[MOCK, "--out", "art", "embed"]);
    assert!(out.contains("up to date (0 provider calls)"), "{out}");
    assert!(ok(d, &[MOCK, "--out", "art", "informalize"]).contains("up to date"));
    assert!(ok(d, &[MOCK, "--out", "art", "index"]).contains("up to date"));

    let manifest = std::fs::read_to_string(d.join("art/manifest.toml")).unwrap();
    std::fs::remove_file(d.join("art").join(artifacts::VECTORS_FILE)).unwrap();
    let out = ok(d, &[MOCK, "--out", "art", "embed"]);
    assert!(out.contains("(0 provider calls, 40 cache hits)"), "{out}");
    assert_eq!(std::fs::read_to_string(d.join("art/manifest.toml")).unwrap(), manifest);

    std::fs::remove_file(d.join("art/manifest.toml")).unwrap();
    ok(d, &[MOCK, "--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    let out = ok(d, &[MOCK, "--out", "art", "informalize"]);
    assert!(out.contains("(40 reused, 0 generated)"), "{out}");
}

#[test]
fn index_prints_recall_audit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--docs", "250", "--corpus", "raw.jsonl", "--benchmark", "bench.json"]);
    ok(d, &[MOCK, "--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    ok(d, &[MOCK, "--out", "art", "informalize"]);
    ok(d, &[MOCK, "--out", "art", "embed"]);
    let out = ok(d, &[MOCK, "--out", "art", "index"]);
    let recall: f64 = out
        .split("recall audit: ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(out.contains("on 3 sampled queries"), "{out}");
    assert!(recall >= 0.95, "{out}");
}

#[test]
fn search_output_matches_service_body() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, 50);
    let args = [MOCK, "--out", "art", "search", "every finite group", "--k", "5", "--no-augment", "--json"];
    let first = ok(d, &args);
    assert_eq!(first, ok(d, &args));

    let config = Config {
        mock_providers: true,
        artifacts: d.join("art"),
        ..Config::default()
    };
    let engine = artifacts::load_engine(&config).unwrap();
    let server = Server::start(config, engine);
    let body = reqwest::blocking::Client::new()
        .post(server.url("/search"))
        .body(r#"{"query": "every finite group", "k": 5, "augment": false}"#)
        .send()
        .unwrap()
        .text()
        .unwrap();
    assert_eq!(first.trim_end(), body);

    let table = ok(d, &[MOCK, "--out", "art", "search", "every finite group", "--k", "3"]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("augmented: "), "{table}");
    assert!(lines[1].contains("rank") && lines[1].contains("name") && lines[1].contains("score"));
    assert!(lines[1].contains("informal name"));
    assert_eq!(lines.len(), 5);
    assert!(lines[2].trim_start().starts_with("1  Synth."));
}

#[test]
fn bench_engines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, 30);
    let table = ok(d, &[MOCK, "--out", "art", "bench", "bench.json", "--engine", "bm25"]);
    for needle in ["engine: bm25", "nDCG@20", "P@10", "R@10", "All", "ND", "LT", "fixture-scale"] {
        assert!(table.contains(needle), "{needle} in {table}");
    }
    let json: Value = serde_json::from_str(&ok(d, &[MOCK, "--out", "art", "bench", "bench.json", "--no-augment", "--json"])).unwrap();
    assert_eq!(json["queries"], 60);
    assert!((json["overall"]["ndcg"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let groups: Value = serde_json::from_str(&std::fs::read_to_string(d.join("bench.json")).unwrap()).unwrap();
    let mut run = String::new();
    for g in groups["groups"].as_array().unwrap() {
        for q in g["queries"].as_array().unwrap() {
            let entry = serde_json::json!({"query": q["text"], "ranking": ["nobody", g["group_id"]]});
            run.push_str(&entry.to_string());
            run.push('\n');
        }
    }
    std::fs::write(d.join("run.jsonl"), run).unwrap();
    let json: Value = serde_json::from_str(&ok(
        d,
        &["--out", "art", "bench", "bench.json", "--engine", "runfile", "--run", "run.jsonl", "--json"],
    ))
    .unwrap();
    let expected = 1.0 / 3f64.log2();
    assert!((json["overall"]["ndcg"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!((json["overall"]["precision"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(code(d, &["--out", "art", "bench", "bench.json", "--engine", "runfile"]).0, 1);
    let global = ok(d, &["--out", "art", "bench", "bench.json", "--engine", "runfile", "--run", "run.jsonl", "--idcg-mode", "global"]);
    assert!(global.contains("idcg: Global"), "{global}");
}

#[test]
fn provider_failures_exit_3_and_keep_progress() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--docs", "5", "--corpus", "raw.jsonl", "--benchmark", "bench.json"]);
    ok(d, &["--out", "art", "ingest", "--corpus", "raw.jsonl"]);
    std::fs::write(
        d.join("down.toml"),
        "[generation]\nendpoint = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\ntimeout_secs = 2\n\
         [embedding]\nendpoint = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\ndim = 256\ntimeout_secs = 2\n",
    )
    .unwrap();
    let (c, err) = code(d, &["--config", "down.toml", "--out", "art", "informalize"]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("rerun `mathsearch informalize`"), "{err}");

    ok(d, &[MOCK, "--out", "art", "informalize"]);
    let (c, err) = code(d, &["--config", "down.toml", "--out", "art", "embed"]);
    assert_eq!(c, 3, "{err}");
}

#[test]
fn config_file_and_environment_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, 20);
    std::fs::write(d.join("c.toml"), "default_k = 2\nartifacts = \"art\"\nmock_providers = true\n").unwrap();
    let json = |o: std::process::Output| -> Value { serde_json::from_slice(&o.stdout).unwrap() };
    let v = json(run_cli(d, &["--config", "c.toml", "search", "ring", "--json"]));
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    let o = std::process::Command::new(common::bin())
        .current_dir(d)
        .env("MATHSEARCH_DEFAULT_K", "4")
        .env("MATHSEARCH_AUGMENT", "false")
        .args(["--config", "c.toml", "search", "ring", "--json"])
        .output()
        .unwrap();
    let v = json(o);
    assert_eq!(v["results"].as_array().unwrap().len(), 4);
    assert!(v.get("augmented_query").is_none());
    let v = json(run_cli(d, &["--config", "c.toml", "search", "ring", "--json", "--k", "3"]));
    assert_eq!(v["results"].as_array().unwrap().len(), 3);
}
