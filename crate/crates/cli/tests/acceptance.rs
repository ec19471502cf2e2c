//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hintgen_core::analytics::{
    answer_difficulty, mse, pearson, question_difficulty, DifficultyLevel,
};
use hintgen_core::convergence::{hicos, hicos_ratio};
use hintgen_core::familiarity::FamiliarityNormalizer;
use hintgen_core::hints::leakage::{answer_lemma_set, lemma_set};
use hintgen_core::hints::{filter_hints, DropReason, Embedder};
use hintgen_core::pipeline::{Manifest, PipelineConfig, Stage};
use hintgen_core::questions::stratified_sample;
use hintgen_core::record::{read_dataset, FinalRules};
use hintgen_core::services::{EmbeddingVector, ServiceError};
use hintgen_core::{Hint, MajorType};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hintgen(args: &[&str]) -> (Vec<u8>, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_hintgen"))
        .args(args)
        .output()
        .expect("spawn hintgen");
    let took = start.elapsed();
    assert!(
        out.status.success(),
        "hintgen {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    (out.stdout, took)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Enumerates every verdict bitmask and compares against a rational
/// evaluator written from the definition: one minus the share of
/// surviving candidates other than the answer.
fn hicos_oracle() {
    let start = Instant::now();
    let mut cases = 0;
    for n in 1..=8usize {
        for mask in 0u32..(1 << n) {
            let valid: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let survivors = mask.count_ones() as i64;
            for ea_valid in [false, true] {
                cases += 1;
                let got = hicos_ratio(&valid, ea_valid);
                if ea_valid && survivors == 0 {
                    // the answer is one of the candidates, so this input is inconsistent
                    assert!(got.is_err(), "n={n} mask={mask:b}");
                    assert!(hicos(&valid, ea_valid).is_err());
                    continue;
                }
                let expected = if ea_valid {
                    Ratio::from_integer(1) - Ratio::new(survivors - 1, n as i64)
                } else {
                    Ratio::from_integer(0)
                };
                let (num, den) = got.unwrap();
                assert_eq!(
                    Ratio::new(num as i64, den as i64),
                    expected,
                    "n={n} mask={mask:b} ea={ea_valid}"
                );
                let f = hicos(&valid, ea_valid).unwrap();
                assert_eq!(f, *expected.numer() as f64 / *expected.denom() as f64);
                // candidate order does not matter
                let mut rev = valid.clone();
                rev.reverse();
                assert_eq!(hicos(&rev, ea_valid).unwrap(), f);
            }
        }
    }
    assert_eq!(cases, (1..=8).map(|n| 2usize << n).sum::<usize>());
    assert!(
        start.elapsed() < Duration::from_secs(1),
        "took {:?}",
        start.elapsed()
    );
}

fn hicos_pinned() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=20 {
        let v: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        assert_eq!(hicos(&v, false).unwrap(), 0.0);
    }
    let mut one = vec![false; 11];
    one[3] = true;
    assert_eq!(hicos(&one, true).unwrap(), 1.0);
    let four: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
    assert_eq!(four.iter().filter(|v| **v).count(), 4);
    assert!(close(hicos(&four, true).unwrap(), 0.7, 1e-12));
}

fn iqr_normalizer() {
    let corpus: Vec<f64> = (1..=100).map(f64::from).collect();
    let n = FamiliarityNormalizer::fit(&corpus).unwrap();
    for (got, want) in [
        (n.q1, 25.75),
        (n.q3, 75.25),
        (n.lower, -48.5),
        (n.upper, 149.5),
    ] {
        assert!(close(got, want, 1e-9), "{got} vs {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draw = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
        0 => rng.random_range(-1e6..1e6),
        1 => rng.random_range(-100.0..250.0),
        2 => rng.random_range(0.0..1e12),
        _ => rng.random_range(-60.0..160.0f64).round(),
    };
    for _ in 0..10_000 {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let (na, nb) = (n.normalize(a), n.normalize(b));
        assert!((0.0..=1.0).contains(&na) && (0.0..=1.0).contains(&nb));
        if a <= b {
            assert!(na <= nb, "{a}->{na} {b}->{nb}");
        } else {
            assert!(na >= nb, "{a}->{na} {b}->{nb}");
        }
    }
    for v in [f64::NEG_INFINITY, f64::INFINITY, 0.0, 1e300] {
        assert!((0.0..=1.0).contains(&n.normalize(v)));
    }
}

fn pearson_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..50).map(|_| rng.random_range(-10.0..10.0)).collect();
    let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!(close(pearson(&lin, &x).unwrap(), 1.0, 1e-9));
    assert!(close(pearson(&neg, &x).unwrap(), -1.0, 1e-9));
    let mut checked = 0;
    while checked < 1000 {
        let len = rng.random_range(3..40);
        let xs: Vec<f64> = (0..len).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ys: Vec<f64> = (0..len).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a = rng.random_range(0.1..20.0) * if rng.random() { 1.0 } else { -1.0 };
        let b = rng.random_range(-50.0..50.0);
        let r = pearson(&xs, &ys).unwrap();
        let t: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
        assert!(close(pearson(&t, &ys).unwrap(), a.signum() * r, 1e-9));
        assert!((-1.0..=1.0).contains(&r));
        checked += 1;
    }
    assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(mse(&[1.0, 2.0], &[3.0, 5.0]).unwrap(), 6.5);
    assert_eq!(mse(&[0.5], &[0.0]).unwrap(), 0.25);
    assert_eq!(
        mse(&[0.0, 1.0, 0.5, 0.25], &[1.0, 0.0, 0.5, 0.75]).unwrap(),
        0.5625
    );
}

#[derive(Deserialize)]
struct PlantedHint {
    text: String,
    planted: String,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct FilterGroup {
    question: String,
    answer: String,
    question_embedding: Vec<f64>,
    hints: Vec<PlantedHint>,
}

struct Table(HashMap<String, Vec<f64>>);

impl Embedder for Table {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ServiceError> {
        EmbeddingVector::new(
            self.0
                .get(text)
                .cloned()
                .unwrap_or_else(|| panic!("no embedding for {text:?}")),
        )
    }
}

fn bare_hint(text: &str) -> Hint {
    Hint {
        text: text.to_owned(),
        source_indices: Vec::new(),
        entities: Vec::new(),
        h_popularity: Vec::new(),
        candidate_verdicts: Vec::new(),
        hicos: None,
        hifas: None,
        leak_flag: false,
        question_similarity: None,
    }
}

fn filtering() {
    let groups: Vec<FilterGroup> =
        hintgen_core::jsonl::read(&root().join("fixtures/filter/hints.jsonl")).unwrap();
    let (mut total, mut leaks, mut rephrases, mut kept_total) = (0, 0, 0, 0);
    for g in &groups {
        let mut table: HashMap<String, Vec<f64>> = g
            .hints
            .iter()
            .map(|h| (h.text.clone(), h.embedding.clone()))
            .collect();
        table.insert(g.question.clone(), g.question_embedding.clone());
        let hints: Vec<Hint> = g.hints.iter().map(|h| bare_hint(&h.text)).collect();
        let out = filter_hints(hints, &g.answer, &g.question, 0.72, &Table(table)).unwrap();
        let mut dropped: BTreeMap<usize, DropReason> = BTreeMap::new();
        for (i, _, reason) in &out.dropped {
            dropped.insert(*i, *reason);
        }
        for (i, h) in g.hints.iter().enumerate() {
            total += 1;
            let expected = match h.planted.as_str() {
                "leak" => Some(DropReason::Leak),
                "rephrase" => Some(DropReason::Rephrase),
                "clean" => None,
                other => panic!("unknown plant {other}"),
            };
            leaks += usize::from(expected == Some(DropReason::Leak));
            rephrases += usize::from(expected == Some(DropReason::Rephrase));
            assert_eq!(
                dropped.get(&i).copied(),
                expected,
                "{:?} in group {:?}",
                h.text,
                g.answer
            );
        }
        let answer = answer_lemma_set(&g.answer);
        for h in &out.kept {
            assert!(
                lemma_set(&h.text).is_disjoint(&answer),
                "{:?} shares a lemma with {:?}",
                h.text,
                g.answer
            );
            assert!(h.question_similarity.unwrap() < 0.72);
        }
        kept_total += out.kept.len();
    }
    assert_eq!((total, leaks, rephrases, kept_total), (200, 40, 20, 140));
}

fn pipeline_determinism() {
    let config = root().join("fixtures/pipeline/run.toml");
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for out in &runs {
        hintgen(&[
            "run-all",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--offline",
        ]);
    }
    let read = |p: &Path| std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    for file in ["final.jsonl", "manifest.json"] {
        assert_eq!(
            read(&runs[0].join(file)),
            read(&runs[1].join(file)),
            "{file} differs between runs"
        );
    }

    let cfg = PipelineConfig::load(&config).unwrap();
    let rules = FinalRules {
        min_hints: cfg.min_hints,
        similarity_threshold: cfg.similarity_threshold,
    };
    let records = read_dataset(&runs[0].join("final.jsonl")).unwrap();
    assert_eq!(records.len(), 12);
    for r in &records {
        r.validate().unwrap();
        r.validate_final(&rules).unwrap();
    }

    let manifest: Manifest = serde_json::from_slice(&read(&runs[0].join("manifest.json"))).unwrap();
    assert!(manifest.balanced());
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    for (s, want) in manifest.stages.iter().zip(Stage::ALL) {
        assert_eq!(s.stage, want);
        assert_eq!(s.input, s.output + s.rejected, "{}", s.stage);
        assert_eq!(s.rejected, s.rejections.len());
    }
    for pair in manifest.stages.windows(2) {
        assert_eq!(
            pair[0].output, pair[1].input,
            "{} -> {}",
            pair[0].stage, pair[1].stage
        );
    }
    assert_eq!(manifest.stages[0].input, 20);
    assert_eq!(manifest.final_count, records.len());
    let prune = manifest.stage(Stage::Prune).unwrap();
    assert!(
        prune.rejections.iter().any(|r| r.q_id == "q13"),
        "{:?}",
        prune.rejections
    );
    let h = manifest.hint_filter;
    assert_eq!(h.input, h.kept + h.leaked + h.rephrased);
}

fn stratified_sampler() {
    let sizes = [
        (MajorType::Human, 4000usize),
        (MajorType::Entity, 3000),
        (MajorType::Location, 2000),
        (MajorType::Other, 1000),
    ];
    // interleave the classes so that input order carries no class structure
    let mut items: Vec<(usize, MajorType)> = Vec::new();
    for (class, n) in sizes {
        items.extend((0..n).map(|_| (0, class)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
    for (i, it) in items.iter_mut().enumerate() {
        it.0 = i;
    }
    assert_eq!(items.len(), 10_000);
    let fraction = 1.0 / 3.0;
    for seed in [0u64, 1, 42, 2024] {
        let a = stratified_sample(&items, |x| x.1, fraction, seed).unwrap();
        let b = stratified_sample(&items, |x| x.1, fraction, seed).unwrap();
        assert_eq!(a, b, "seed {seed} is not deterministic");
        assert!(a.len() == 3333 || a.len() == 3334, "total {}", a.len());
        for (class, n) in sizes {
            let got = a.iter().filter(|x| x.1 == class).count() as f64;
            let want = n as f64 * fraction;
            assert!((got - want).abs() <= 1.0, "{class:?}: {got} vs {want}");
        }
        assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

fn difficulty_grid() {
    let mut mismatches = 0;
    for i in 0..=1000u32 {
        let p = f64::from(i) / 1000.0;
        // thresholds in thousandths: easy above 660, medium from 330 to 660
        let want = if i > 660 {
            DifficultyLevel::Easy
        } else if i >= 330 {
            DifficultyLevel::Medium
        } else {
            DifficultyLevel::Hard
        };
        mismatches += usize::from(answer_difficulty(p).unwrap().level != want);
        // fractions: hard below one third, easy from two thirds
        let want = if 3 * i < 1000 {
            DifficultyLevel::Hard
        } else if 3 * i < 2000 {
            DifficultyLevel::Medium
        } else {
            DifficultyLevel::Easy
        };
        mismatches += usize::from(question_difficulty(p).unwrap().level != want);
    }
    assert_eq!(mismatches, 0);
    assert_eq!(
        question_difficulty(1.0 / 3.0).unwrap().level,
        DifficultyLevel::Medium
    );
    assert_eq!(
        question_difficulty(2.0 / 3.0).unwrap().level,
        DifficultyLevel::Easy
    );
    assert!(answer_difficulty(1.5).is_err() && question_difficulty(-0.1).is_err());
}

fn sweep() {
    let dir = root().join("fixtures/sweep");
    let p = |f: &str| dir.join(f).to_str().unwrap().to_owned();
    let (stdout, took) = hintgen(&[
        "sweep",
        "--in",
        &p("records.jsonl"),
        "--human",
        &p("ratings.jsonl"),
        "--n",
        "1..20",
        "--fixture",
        &p("services.jsonl"),
    ]);
    assert!(took < Duration::from_secs(30), "took {took:?}");
    let v: Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(v["best_n"], 11);
    let points = v["points"].as_array().unwrap();
    let ns: Vec<u64> = points.iter().map(|p| p["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, (1..=20).collect::<Vec<u64>>());
    for pt in points {
        let r = pt["pearson_r"].as_f64().expect("every n has a correlation");
        assert!((-1.0..=1.0).contains(&r), "{pt}");
    }
}

fn stats() {
    let sample = root().join("fixtures/dataset/sample.jsonl");
    let (stdout, _) = hintgen(&["stats", "--in", sample.to_str().unwrap()]);
    let got: Value = serde_json::from_slice(&stdout).unwrap();
    let golden: Value = serde_json::from_str(
        &std::fs::read_to_string(root().join("fixtures/dataset/golden_stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(got, golden);
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        (
            "hicos matches brute-force rational oracle, n 1..8",
            hicos_oracle,
        ),
        ("hicos pinned points", hicos_pinned),
        ("IQR normalizer fit, range and monotonicity", iqr_normalizer),
        ("pearson and mse", pearson_mse),
        ("leak and rephrase filter on 200 planted hints", filtering),
        (
            "run-all --offline determinism and accounting",
            pipeline_determinism,
        ),
        ("stratified sampler proportions", stratified_sampler),
        ("difficulty threshold grids", difficulty_grid),
        ("sweep 1..20 peaks at n=11", sweep),
        ("stats matches golden report", stats),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        println!(
            "{} [{:>2}] {name} ({:.2?})",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed()
        );
        failed += usize::from(!ok);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
