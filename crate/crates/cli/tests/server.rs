use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use hintgen_cli::server::{router, AppState};
use hintgen_core::annotation::{AnnotationStore, AnswerRow, AssignmentPlan, EventLog, RatingRow};
use hintgen_core::record::{read_dataset, QuestionRecord};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn dataset_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/dataset/sample.jsonl")
}

fn records() -> Vec<QuestionRecord> {
    read_dataset(&dataset_path()).unwrap()
}

fn app_with(log: &std::path::Path, token: Option<&str>) -> Router {
    let store = AnnotationStore::new(records(), AssignmentPlan::default())
        .unwrap()
        .with_log(EventLog::open(log).unwrap())
        .unwrap();
    router(AppState::new(store, token.map(str::to_owned)).with_clock(Arc::new(|| 1_000)))
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<&str>,
    token: Option<&str>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_owned())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_owned());
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

async fn open_session(app: &Router, who: &str, phase: &str) -> String {
    let r = call(
        app,
        "POST",
        "/v1/sessions",
        Some(&json!({"annotator_id": who, "phase": phase}).to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.json()["id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn hint_gating_in_answer_phase() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(&dir.path().join("events.jsonl"), None);
    let recs = records();
    let sid = open_session(&app, "ann1", "answer_with_hints").await;

    let next = call(
        &app,
        "GET",
        &format!("/v1/sessions/{sid}/next-question"),
        None,
        None,
    )
    .await;
    assert_eq!(next.status, StatusCode::OK);
    let view = next.json();
    let q = view["q_id"].as_str().unwrap().to_owned();
    assert_eq!(q, recs[0].q_id);
    assert_eq!(view["hints"], json!([]));
    let base = format!("/v1/sessions/{sid}/questions/{q}");

    // No hint before the first attempt.
    let r = call(&app, "POST", &format!("{base}/reveal"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "protocol_violation");

    let r = call(
        &app,
        "POST",
        &format!("{base}/attempt"),
        Some(r#"{"answer": "Paris"}"#),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["correct"], false);
    assert_eq!(r.json()["can_reveal"], true);

    let r = call(&app, "POST", &format!("{base}/reveal"), None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({"k": 0, "hint": recs[0].hints[0].text}));

    // Hint 2 needs an attempt with hint 1 first.
    let r = call(&app, "GET", &format!("{base}/hints/2"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = call(&app, "GET", &format!("{base}/hints/1"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = call(
        &app,
        "POST",
        &format!("{base}/attempt"),
        Some(r#"{"answer": ""}"#),
        None,
    )
    .await;
    assert_eq!(r.json()["correct"], false);
    let r = call(&app, "GET", &format!("{base}/hints/1"), None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["hint"], recs[0].hints[1].text);

    let r = call(&app, "POST", &format!("{base}/skip"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let answer = json!({"answer": recs[0].exact_answer}).to_string();
    let r = call(
        &app,
        "POST",
        &format!("{base}/attempt"),
        Some(&answer),
        None,
    )
    .await;
    assert_eq!(r.json()["correct"], true);
    assert_eq!(r.json()["answered_before_hints"], false);
    assert_eq!(r.json()["revealed_hint_count"], 2);

    // Next question answered straight away.
    let view = call(
        &app,
        "GET",
        &format!("/v1/sessions/{sid}/next-question"),
        None,
        None,
    )
    .await
    .json();
    let q2 = view["q_id"].as_str().unwrap();
    assert_eq!(q2, recs[1].q_id);
    let answer = json!({"answer": recs[1].exact_answer}).to_string();
    let r = call(
        &app,
        "POST",
        &format!("/v1/sessions/{sid}/questions/{q2}/attempt"),
        Some(&answer),
        None,
    )
    .await;
    assert_eq!(r.json()["answered_before_hints"], true);
    let r = call(
        &app,
        "POST",
        &format!("/v1/sessions/{sid}/questions/{q2}/attempt"),
        Some(&answer),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let r = call(&app, "GET", "/v1/export/answers.jsonl", None, None).await;
    assert_eq!(r.content_type.as_deref(), Some("application/x-ndjson"));
    let rows: Vec<AnswerRow> = std::str::from_utf8(&r.body)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let first = rows.iter().find(|a| a.q_id == recs[0].q_id).unwrap();
    assert_eq!(
        (
            first.revealed_hint_count,
            first.answered_before_hints,
            first.attempts.len()
        ),
        (2, false, 3)
    );
    assert!(first.attempts.iter().all(|a| a.at_ms == 1_000));
    assert!(rows
        .iter()
        .any(|a| a.q_id == recs[1].q_id && a.answered_before_hints));
}

#[tokio::test]
async fn skip_after_all_hints_then_session_completes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let plan_recs = records();
    let q = plan_recs[2].q_id.clone();
    let store = AnnotationStore::new(
        plan_recs.clone(),
        AssignmentPlan {
            assignments: [("solo".to_owned(), vec![q.clone()])].into_iter().collect(),
        },
    )
    .unwrap()
    .with_log(EventLog::open(&log).unwrap())
    .unwrap();
    let app = router(AppState::new(store, None));
    let sid = open_session(&app, "solo", "answer_with_hints").await;
    let base = format!("/v1/sessions/{sid}/questions/{q}");
    for k in 0..plan_recs[2].hints.len() {
        call(
            &app,
            "POST",
            &format!("{base}/attempt"),
            Some(r#"{"answer": "no idea"}"#),
            None,
        )
        .await;
        let r = call(&app, "POST", &format!("{base}/reveal"), None, None).await;
        assert_eq!(r.json()["k"], k);
    }
    let r = call(&app, "POST", &format!("{base}/reveal"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = call(&app, "POST", &format!("{base}/skip"), None, None).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let r = call(
        &app,
        "GET",
        &format!("/v1/sessions/{sid}/next-question"),
        None,
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);

    // A restarted service rebuilds the same session from the log.
    let before = call(&app, "GET", &format!("/v1/sessions/{sid}"), None, None)
        .await
        .json();
    drop(app);
    let again = app_with(&log, None);
    let after = call(&again, "GET", &format!("/v1/sessions/{sid}"), None, None)
        .await
        .json();
    assert_eq!(before, after);
}

#[tokio::test]
async fn rating_phase_validation_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(&dir.path().join("events.jsonl"), None);
    let recs = records();
    let sid = open_session(&app, "ann2", "rate_attributes").await;
    let view = call(
        &app,
        "GET",
        &format!("/v1/sessions/{sid}/next-question"),
        None,
        None,
    )
    .await
    .json();
    let q = &recs[0];
    assert_eq!(view["hints"].as_array().unwrap().len(), q.hints.len());
    let base = format!("/v1/sessions/{sid}/questions/{}", q.q_id);
    let good = json!({"relevance": 5, "readability": 4, "ambiguity": 2, "convergence": 3, "familiarity": 1,
                      "google_found": true, "bing_found": false});

    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/0/ratings"),
        Some("{not json"),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "bad_request");
    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/0/ratings"),
        Some(r#"{"relevance": 5}"#),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let mut out_of_range = good.clone();
    out_of_range["familiarity"] = json!(6);
    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/0/ratings"),
        Some(&out_of_range.to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/x/ratings"),
        Some(&good.to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/99/ratings"),
        Some(&good.to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/0/ratings"),
        Some(&good.to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let r = call(
        &app,
        "POST",
        &format!("{base}/hints/0/ratings"),
        Some(&good.to_string()),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    // Answer-phase actions are refused in the rating phase.
    let r = call(
        &app,
        "POST",
        &format!("{base}/attempt"),
        Some(r#"{"answer": "x"}"#),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let r = call(&app, "GET", "/v1/export/ratings.jsonl", None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    let rows: Vec<RatingRow> = std::str::from_utf8(&r.body)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows
        .iter()
        .all(|r| r.q_id == q.q_id && r.hint_idx == 0 && r.annotator_id == "ann2"));
    let mut got: Vec<u8> = rows.iter().map(|r| r.rating).collect();
    got.sort();
    assert_eq!(got, vec![1, 2, 3, 4, 5]);
}

#[tokio::test]
async fn bearer_token_and_unknown_routes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(&dir.path().join("events.jsonl"), Some("s3cret"));
    let body = r#"{"annotator_id": "a", "phase": "rate_attributes"}"#;
    let r = call(&app, "POST", "/v1/sessions", Some(body), None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(r.json()["error"], "unauthorized");
    let r = call(&app, "POST", "/v1/sessions", Some(body), Some("wrong")).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = call(&app, "POST", "/v1/sessions", Some(body), Some("s3cret")).await;
    assert_eq!(r.status, StatusCode::CREATED);

    let r = call(&app, "GET", "/v1/sessions/nope", None, Some("s3cret")).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "not_found");
    let r = call(&app, "GET", "/sessions", None, None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(r#"{"annotator_id": "a", "phase": "later"}"#),
        Some("s3cret"),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn exported_answers_feed_difficulty() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(&dir.path().join("events.jsonl"), None);
    let recs = records();
    let sid = open_session(&app, "ann3", "answer_with_hints").await;
    for r in recs.iter().take(3) {
        let answer = json!({"answer": r.exact_answer}).to_string();
        call(
            &app,
            "POST",
            &format!("/v1/sessions/{sid}/questions/{}/attempt", r.q_id),
            Some(&answer),
            None,
        )
        .await;
    }
    let export = call(&app, "GET", "/v1/export/answers.jsonl", None, None).await;
    let answers = dir.path().join("answers.jsonl");
    std::fs::write(&answers, &export.body).unwrap();

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_hintgen"))
        .args(["difficulty", "--in"])
        .arg(dataset_path())
        .arg("--answers")
        .arg(&answers)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let levels = v["answerability"].as_object().unwrap();
    let questions: u64 = levels
        .values()
        .map(|l| l["questions"].as_u64().unwrap())
        .sum();
    let before: u64 = levels
        .values()
        .map(|l| l["answered_before_hints"].as_u64().unwrap())
        .sum();
    assert_eq!((questions, before), (3, 3));
    assert_eq!(v["labels"].as_array().unwrap().len(), recs.len());
}
