use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use xmec_core::config::EngineConfig;
use xmec_core::eval::{collection_retrieval, EvalSubset, EvaluationReport};
use xmec_core::load_manifest;
use xmec_core::tamper::TamperedTestSet;

fn xmec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = xmec(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--kind", "overlapping", "--seed", "4", "--documents", "60", "--out", s(&raw)]);
    let summary = ok(&["ingest", s(&raw), "--out", s(&corpus)]);
    assert!(summary.contains("60 documents"), "{summary}");

    let stats: serde_json::Value = serde_json::from_str(&ok(&["stats", s(&corpus), "--json"])).unwrap();
    assert_eq!(stats["context"]["documents"], 60);

    let ts = dir.path().join("ts.json");
    ok(&[
        "tamper", "--corpus", s(&corpus), "--type", "location", "--strategy", "gcd", "--seed", "8",
        "--dmin", "1", "--dmax", "20000", "--out", s(&ts),
    ]);
    let report_a = dir.path().join("a.json");
    let report_b = dir.path().join("b.json");
    let csv = dir.path().join("a.csv");
    ok(&[
        "evaluate", "--corpus", s(&corpus), "--testset", s(&ts), "--subset", "top50", "--out",
        s(&report_a), "--csv", s(&csv),
    ]);
    ok(&[
        "evaluate", "--corpus", s(&corpus), "--type", "location", "--strategy", "gcd", "--seed",
        "8", "--dmin", "1", "--dmax", "20000", "--subset", "top50", "--out", s(&report_b),
    ]);
    let a = fs::read_to_string(&report_a).unwrap();
    assert_eq!(a, fs::read_to_string(&report_b).unwrap());

    let manifest = load_manifest(&corpus).unwrap();
    let set = TamperedTestSet::from_json(&fs::read_to_string(&ts).unwrap()).unwrap();
    let expected = collection_retrieval(
        &manifest,
        &set,
        &EngineConfig::default().eval_config(EvalSubset::Top(0.5)),
    )
    .unwrap();
    assert_eq!(EvaluationReport::from_json(&a).unwrap(), expected);
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        EvaluationReport::to_csv(&[expected])
    );
}

#[test]
fn score_and_rank_agree() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    ok(&["synth", "--kind", "separable", "--seed", "2", "--documents", "25", "--out", s(&corpus)]);
    let scores: serde_json::Value =
        serde_json::from_str(&ok(&["score", s(&corpus), "--doc", "doc-00004"])).unwrap();
    let value = scores[0]["cmes"]["value"].as_f64().unwrap();

    let table = ok(&["rank", "--corpus", s(&corpus), "--type", "event"]);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    let row = rows.iter().find(|r| r.contains("doc-00004")).unwrap();
    let shown: f64 = row.split('\t').nth(3).unwrap().parse().unwrap();
    assert!((shown - value).abs() < 1e-6);
}

#[test]
fn exit_codes() {
    assert_eq!(xmec(&["evaluate", "--corpus", "x", "--type", "event", "--strategy", "esp"]).status.code(), Some(2));
    assert_eq!(xmec(&["tamper", "--corpus", "x", "--out", "y"]).status.code(), Some(2));
    assert_eq!(xmec(&["stats", "/nonexistent/corpus"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    ok(&["synth", "--kind", "separable", "--seed", "1", "--documents", "10", "--out", s(&corpus)]);
    let bad_strategy = xmec(&[
        "tamper", "--corpus", s(&corpus), "--type", "event", "--strategy", "gcd", "--seed", "1",
        "--out", s(&dir.path().join("t.json")),
    ]);
    assert_eq!(bad_strategy.status.code(), Some(2));
    let bad_subset = xmec(&[
        "evaluate", "--corpus", s(&corpus), "--type", "event", "--strategy", "random", "--seed",
        "1", "--subset", "top10",
    ]);
    assert_eq!(bad_subset.status.code(), Some(2));
}
