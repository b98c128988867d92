//! End-to-end tests that drive the compiled `vixen` binary.

use std::path::Path;
use std::process::{Command, Output};

fn vixen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vixen"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn vixen")
}

fn record(id: &str, summary: &str, score: f64) -> String {
    serde_json::json!({
        "id": id,
        "src_image": format!("{id}_a.png"),
        "edit_image": format!("{id}_b.png"),
        "caption_src": "A dog on a beach.",
        "caption_edit": "A cat on a beach.",
        "edit_instruction": "Replace the dog with a cat.",
        "change_summary": summary,
        "correspondence_score": score,
    })
    .to_string()
}

fn write_manifest(dir: &Path, rows: &[String]) -> std::path::PathBuf {
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, rows.join("\n") + "\n").unwrap();
    path
}

#[test]
fn filter_min_score_keeps_two_of_four() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        tmp.path(),
        &[
            record("p1", "the box moved", 2.0),
            record("p2", "the sky darkened", 3.0),
            record("p3", "a tree appeared", 4.33),
            record("p4", "the dog became a cat", 5.0),
        ],
    );
    let out = tmp.path().join("out");
    let r = vixen(
        &[
            "dataset",
            "filter",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--min-score",
            "4",
        ],
        tmp.path(),
    );
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));

    let kept = std::fs::read_to_string(out.join("filtered.jsonl")).unwrap();
    let ids: Vec<String> = kept
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().into())
        .collect();
    assert_eq!(ids, vec!["p3", "p4"]);
}

#[test]
fn eval_perfect_match_scores_bleu_100() {
    let tmp = tempfile::tempdir().unwrap();
    let summaries = [
        ("p1", "the red box was added here", 3.0),
        ("p2", "a green circle was removed today", 4.0),
        ("p3", "the cat became a dog instead", 5.0),
    ];
    let manifest = write_manifest(
        tmp.path(),
        &summaries.map(|(id, s, sc)| record(id, s, sc)),
    );
    let preds = tmp.path().join("preds.jsonl");
    let pred_lines: Vec<String> = summaries
        .iter()
        .map(|(id, s, _)| serde_json::json!({ "id": id, "candidate": s }).to_string())
        .collect();
    std::fs::write(&preds, pred_lines.join("\n")).unwrap();

    let out = tmp.path().join("out");
    let r = vixen(
        &[
            "eval",
            "--predictions",
            preds.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["overall"]["bleu4"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert!((report["overall"]["rouge_l"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    // default thresholds 3/4/5 give nested subset counts 3, 2, 1
    let counts: Vec<u64> = report["subsets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["count"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![3, 2, 1]);
    // every run echoes its resolved config
    assert!(out.join("cli_manifest.json").exists());
}

#[test]
fn validate_reports_every_problem_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("bad.jsonl");
    std::fs::write(
        &manifest,
        concat!(
            "{\"id\": \"a\", \"src_image\": \"a.png\"}\n",
            "not json at all\n",
        ),
    )
    .unwrap();
    let r = vixen(
        &["dataset", "validate", "--manifest", manifest.to_str().unwrap()],
        tmp.path(),
    );
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 1"), "stderr: {err}");
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn split_partitions_are_disjoint_and_exhaustive() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..10).map(|i| record(&format!("r{i}"), "s", 3.0)).collect();
    let manifest = write_manifest(tmp.path(), &rows);
    let out = tmp.path().join("out");
    let r = vixen(
        &[
            "dataset",
            "split",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--fractions",
            "train=0.8,val=0.2",
            "--seed",
            "1",
        ],
        tmp.path(),
    );
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let count = |name: &str| {
        std::fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(count("train.jsonl"), 8);
    assert_eq!(count("val.jsonl"), 2);
}
