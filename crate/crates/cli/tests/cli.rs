use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hintgen_core::pipeline::{Checkpoint, Stage};
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config() -> String {
    root()
        .join("fixtures/pipeline/run.toml")
        .to_str()
        .unwrap()
        .to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hintgen"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn resume_after_stop_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, split) = (tmp.path().join("full"), tmp.path().join("split"));
    ok(&[
        "run-all",
        "--config",
        &config(),
        "--out",
        s(&full),
        "--offline",
    ]);

    let v: Value = serde_json::from_slice(&ok(&[
        "run-all",
        "--config",
        &config(),
        "--out",
        s(&split),
        "--offline",
        "--stop-after",
        "hints",
    ]))
    .unwrap();
    assert_eq!(v["stopped_after"], "hints");
    assert!(!split.join("final.jsonl").exists());
    let cp: Checkpoint = serde_json::from_slice(&read(&split.join("checkpoint.json"))).unwrap();
    assert_eq!(cp.last(), Some(Stage::Hints));

    ok(&[
        "run-all",
        "--config",
        &config(),
        "--out",
        s(&split),
        "--offline",
        "--resume",
    ]);
    assert_eq!(
        read(&full.join("final.jsonl")),
        read(&split.join("final.jsonl"))
    );
    for stage in Stage::ALL {
        let f = format!("stages/{}", stage.file_name());
        assert_eq!(read(&full.join(&f)), read(&split.join(&f)), "{f}");
    }
}

#[test]
fn resume_refuses_a_different_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "run-all",
        "--config",
        &config(),
        "--out",
        s(&out),
        "--offline",
        "--stop-after",
        "sample",
    ]);
    let changed = Command::new(env!("CARGO_BIN_EXE_hintgen"))
        .args([
            "run-all",
            "--config",
            &config(),
            "--out",
            s(&out),
            "--offline",
            "--resume",
        ])
        .env("HINTGEN_SEED", "8")
        .output()
        .unwrap();
    assert!(!changed.status.success());
    assert!(String::from_utf8_lossy(&changed.stderr).contains("checkpoint"));
}

#[test]
fn stage_commands_chain_to_the_same_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    ok(&[
        "run-all",
        "--config",
        &config(),
        "--out",
        s(&full),
        "--offline",
    ]);

    let step = |name: &str, input: &Path, output: &Path| {
        ok(&[
            name,
            "--config",
            &config(),
            "--offline",
            "--in",
            s(input),
            "--out",
            s(output),
        ]);
    };
    let p = |f: &str| tmp.path().join(f);
    step(
        "sample",
        &root().join("fixtures/pipeline/questions.jsonl"),
        &p("1.jsonl"),
    );
    step("generate-hints", &p("1.jsonl"), &p("2.jsonl"));
    step("filter-hints", &p("2.jsonl"), &p("3.jsonl"));
    step("score-hicos", &p("3.jsonl"), &p("4.jsonl"));
    step("score-hifas", &p("4.jsonl"), &p("5.jsonl"));
    assert_eq!(read(&p("5.jsonl")), read(&full.join("final.jsonl")));
}

#[test]
fn sample_flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s.jsonl");
    let input = root().join("fixtures/pipeline/questions.jsonl");
    let reports: Value = serde_json::from_slice(&ok(&[
        "sample",
        "--config",
        &config(),
        "--offline",
        "--in",
        s(&input),
        "--out",
        s(&out),
        "--fraction",
        "0.5",
        "--seed",
        "3",
    ]))
    .unwrap();
    let stages: Vec<&str> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["filter", "classify", "sample"]);
    let kept = reports[2]["output"].as_u64().unwrap() as usize;
    assert_eq!(String::from_utf8(read(&out)).unwrap().lines().count(), kept);
    assert!(kept < reports[2]["input"].as_u64().unwrap() as usize);
}

#[test]
fn stats_writes_report_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("stats.json");
    let sample = root().join("fixtures/dataset/sample.jsonl");
    let printed: Value =
        serde_json::from_slice(&ok(&["stats", "--in", s(&sample), "--out", s(&out)])).unwrap();
    let written: Value = serde_json::from_slice(&read(&out)).unwrap();
    assert_eq!(printed, written);
    assert_eq!(printed["n_questions"], 12);
}

/// Ratings that track the stored scores, so both metrics correlate
/// positively with them.
fn ratings_from_scores(dataset: &Path, out: &Path) {
    let records = hintgen_core::record::read_dataset(dataset).unwrap();
    let mut lines = String::new();
    for r in &records {
        for (i, h) in r.hints.iter().enumerate() {
            for (attribute, score) in [("convergence", h.hicos), ("familiarity", h.hifas)] {
                let Some(v) = score else { continue };
                let rating = 1 + (4.0 * v).round() as u8;
                lines.push_str(&format!(
                    "{{\"annotator_id\":\"a\",\"q_id\":\"{}\",\"hint_idx\":{i},\"attribute\":\"{attribute}\",\"rating\":{rating}}}\n",
                    r.q_id
                ));
            }
        }
    }
    std::fs::write(out, lines).unwrap();
}

#[test]
fn correlate_against_ratings() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = root().join("fixtures/dataset/sample.jsonl");
    let ratings = tmp.path().join("ratings.jsonl");
    ratings_from_scores(&sample, &ratings);
    for metric in ["hicos", "hifas"] {
        let v: Value = serde_json::from_slice(&ok(&[
            "correlate",
            "--in",
            s(&sample),
            "--human",
            s(&ratings),
            "--metric",
            metric,
        ]))
        .unwrap();
        let r = v["pearson_r"].as_f64().unwrap();
        assert!(r > 0.8 && r <= 1.0, "{metric}: {v}");
        assert!(v["mse"].as_f64().unwrap() < 0.02, "{metric}: {v}");
    }
    let v: Value = serde_json::from_slice(&ok(&[
        "correlate",
        "--in",
        s(&sample),
        "--human",
        s(&ratings),
        "--metric",
        "hifas",
        "--compare-modes",
    ]))
    .unwrap();
    assert_eq!(v["modes"].as_array().unwrap().len(), 3);
    assert_eq!(v["best"], "avg");

    let bad = run(&[
        "correlate",
        "--in",
        s(&sample),
        "--human",
        s(&ratings),
        "--metric",
        "hicos",
        "--compare-modes",
    ]);
    assert!(!bad.status.success());
}

#[test]
fn sweep_writes_csv_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("curve.csv");
    let dir = root().join("fixtures/sweep");
    ok(&[
        "sweep",
        "--in",
        s(&dir.join("records.jsonl")),
        "--human",
        s(&dir.join("ratings.jsonl")),
        "--n",
        "1..20",
        "--fixture",
        s(&dir.join("services.jsonl")),
        "--csv",
        s(&csv),
    ]);
    let text = String::from_utf8(read(&csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,pearson_r,n_samples"));
    let ns: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, (1..=20).map(|n| n.to_string()).collect::<Vec<_>>());
}

#[test]
fn calibrate_offline_from_recorded_pageviews() {
    let tmp = tempfile::tempdir().unwrap();
    let titles = tmp.path().join("titles.txt");
    std::fs::write(
        &titles,
        "# entity titles\nIndia\nMaryland\nVirginia\nWorld Bank\nPotomac River\n",
    )
    .unwrap();
    let (corpus, norm) = (tmp.path().join("cal.jsonl"), tmp.path().join("norm.json"));
    ok(&[
        "calibrate",
        "--config",
        &config(),
        "--offline",
        "--titles",
        s(&titles),
        "--corpus",
        s(&corpus),
        "--normalizer",
        s(&norm),
    ]);
    assert_eq!(String::from_utf8(read(&corpus)).unwrap().lines().count(), 5);
    let n: Value = serde_json::from_slice(&read(&norm)).unwrap();
    assert_eq!(n["corpus_size"], 5);
    assert!(n["q1"].as_f64().unwrap() <= n["q3"].as_f64().unwrap());
}

#[test]
fn usage_errors_exit_non_zero() {
    assert!(!run(&["sweep", "--in", "x", "--human", "y"])
        .status
        .success());
    assert!(!run(&["difficulty", "--in", "missing.jsonl"])
        .status
        .success());
    assert!(!run(&["run-all", "--config", "missing.toml"])
        .status
        .success());
    assert!(!run(&["frobnicate"]).status.success());
}
