use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn redr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redr"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn redr")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The error object is the last stderr line.
fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("stderr not empty");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("{e}: {text}"))
}

const CONFIG: &str = "hidden_size = 8\nemb_dim = 8\nreasoning_layers = 2\nbatch_size = 2\nmax_epochs = 3\n\
dropout = 0.0\nbeam_size = 2\nmax_decode_len = 6\nrl_max_updates = 4\nrl_eval_every = 2\n";

fn story(id: &str, text: &str, qa: &[(&str, &str)]) -> Value {
    json!({
        "id": id,
        "story": text,
        "questions": qa.iter().enumerate().map(|(i, (q, _))| json!({"input_text": q, "turn_id": i + 1})).collect::<Vec<_>>(),
        "answers": qa.iter().map(|(_, a)| json!({"input_text": a, "span_start": -1, "span_end": -1})).collect::<Vec<_>>(),
    })
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let coqa = json!({"data": [
        story("s1", "Anna found the kite. The kite was red. Ben lived in the farm.",
              &[("what did anna find?", "the kite"), ("what color was the kite?", "red"), ("where did ben live?", "the farm")]),
        story("s2", "Cara lost the cup. Dev met Emil at the park.",
              &[("what did cara lose?", "the cup"), ("who did dev meet?", "emil")]),
    ]});
    let squad = json!({"data": [{"title": "t", "paragraphs": [
        {"context": "Anna found the kite. The kite was red."},
        {"context": "Ben lived in the farm."},
    ]}]});
    std::fs::write(dir.path().join("coqa.json"), coqa.to_string()).unwrap();
    std::fs::write(dir.path().join("squad.json"), squad.to_string()).unwrap();
    std::fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_two() {
    let dir = workspace();
    let out = redr(dir.path(), &["bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn train_without_corpus_names_the_flag() {
    let dir = workspace();
    let out = redr(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["flag"], "--train");
    assert_eq!(err["error"]["kind"], "usage");

    let out = redr(dir.path(), &["train", "--train", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["flag"], "--train");
}

#[test]
fn invalid_config_is_reported() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.toml"), "hidden_size = 7\n").unwrap();
    let out = redr(dir.path(), &["--config", "bad.toml", "train", "--train", "coqa.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("hidden_size"));
}

#[test]
fn zero_turns_is_a_validation_error() {
    let dir = workspace();
    let out = redr(
        dir.path(),
        &[
            "generate",
            "--model",
            "m.ckpt",
            "--passages",
            "squad.json",
            "--turns",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["flag"], "--turns");
}

#[test]
fn train_finetune_generate_round_trip() {
    let dir = workspace();
    let d = dir.path();
    let out = redr(
        d,
        &[
            "--config",
            "cfg.toml",
            "train",
            "--train",
            "coqa.json",
            "--dev",
            "coqa.json",
            "--out",
            "m.ckpt",
            "--log",
            "log.jsonl",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["epochs"].as_array().unwrap().len(), 3);
    let steps = summary["steps"].as_u64().unwrap();
    let log = std::fs::read_to_string(d.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count() as u64, steps);

    let out = redr(
        d,
        &[
            "--config",
            "cfg.toml",
            "finetune-rl",
            "--model",
            "m.ckpt",
            "--train",
            "coqa.json",
            "--oracle",
            "gold",
            "--out",
            "rl.ckpt",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["updates"], 4);

    let generate = |name: &str| {
        let out = redr(
            d,
            &[
                "generate",
                "--model",
                "rl.ckpt",
                "--passages",
                "squad.json",
                "--turns",
                "3",
                "--out",
                name,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(d.join(name)).unwrap()
    };
    let first = generate("a.json");
    assert_eq!(first, generate("b.json"));
    let coqa: Value = serde_json::from_slice(&first).unwrap();
    let data = coqa["data"].as_array().unwrap();
    assert_eq!(data.len(), 2);
    for story in data {
        assert_eq!(story["questions"].as_array().unwrap().len(), 3);
        assert_eq!(story["answers"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn evaluate_and_analyze_write_reports() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(d.join("h.txt"), "what did anna find ?\nwhere ?\n").unwrap();
    std::fs::write(d.join("r.txt"), "what did anna find ?\nwhere did ben live ?\n").unwrap();
    let out = redr(d, &["evaluate", "--hyp", "h.txt", "--ref", "r.txt", "--out", "m.json"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    for key in ["bleu", "rouge_l", "dist1", "dist2", "ent4"] {
        let v = report[key].as_f64().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{key}");
    }
    assert_eq!(report["counts"]["pairs"], 2);

    std::fs::write(d.join("short.txt"), "where ?\n").unwrap();
    let out = redr(d, &["evaluate", "--hyp", "h.txt", "--ref", "short.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["flag"], "--ref");

    let out = redr(d, &["analyze", "--questions", "h.txt"]);
    assert!(out.status.success());
    let profile = stdout_json(&out);
    assert_eq!(profile["questions"], 2);
    assert_eq!(profile["where"], 0.5);
    assert_eq!(profile["what"], 0.5);
}

#[test]
fn gradcheck_exit_code_follows_the_reported_error() {
    let dir = workspace();
    let out = redr(dir.path(), &["gradcheck", "--seeds", "1"]);
    let report = stdout_json(&out);
    let max = report["max_relative_error"].as_f64().unwrap();
    assert!(max.is_finite());
    assert_eq!(report["passed"].as_bool().unwrap(), max < 1e-4);
    assert_eq!(out.status.success(), max < 1e-4);
    if !out.status.success() {
        assert_eq!(error_json(&out)["error"]["kind"], "check");
    }
}
