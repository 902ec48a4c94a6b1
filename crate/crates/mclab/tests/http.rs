use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mclab::config::AppConfig;
use mclab::server::{router, AppState};
use mclab_core::synth::GridSpec;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(dir: &Path) -> AppConfig {
    AppConfig {
        cache_dir: dir.join("cache"),
        sessions_dir: dir.join("sessions"),
        grid: GridSpec::new(32, 32, 8.0, 100.0),
        seed: 5,
        ..Default::default()
    }
}

fn app(dir: &Path) -> (Router, Arc<AppState>) {
    let state = AppState::open(config(dir)).unwrap();
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn new_session(app: &Router, body: Value) -> String {
    let (s, v) = call_json(app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn respond(trial_id: u64, choice: &str) -> Value {
    json!({ "trial_id": trial_id, "choice": choice, "rt_ms": 512.0 })
}

#[tokio::test]
async fn default_session_exhausts_after_250_trials() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = new_session(&app, json!({})).await;
    let mut served = 0;
    loop {
        let (s, next) = call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await;
        assert_eq!(s, StatusCode::OK);
        if next["done"] == json!(true) {
            assert_eq!(next["n_completed"], 250);
            break;
        }
        assert_eq!(next["trial_id"], served);
        assert_eq!(next["stimulus_ms"], 250.0);
        assert_eq!(next["isi_ms"], 250.0);
        assert_ne!(next["stim_a"]["stimulus_id"], next["stim_b"]["stimulus_id"]);
        let choice = if served % 3 == 0 { "second" } else { "first" };
        let (s, ack) = call_json(&app, "POST", &format!("/api/sessions/{id}/responses"), Some(respond(served, choice))).await;
        assert_eq!(s, StatusCode::OK, "{ack}");
        assert_eq!(ack["accepted"], true);
        served += 1;
        assert!(served <= 250);
    }
    assert_eq!(served, 250);

    let (s, res) = call_json(&app, "GET", &format!("/api/sessions/{id}/results"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(res["status"], "complete");
    let cells = res["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 25);
    assert!(cells.iter().all(|c| c["n"] == 10));
    assert!(res["fit"].is_object() || res["fit_error"].is_string());

    let (s, _) = call_json(&app, "POST", &format!("/api/sessions/{id}/responses"), Some(respond(249, "first"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn frames_body_is_exact_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = new_session(&app, json!({ "reps_per_cell": 1 })).await;
    let (_, next) = call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await;
    let stim = next["stim_a"]["stimulus_id"].as_str().unwrap().to_string();

    let (s, meta) = call_json(&app, "GET", &format!("/api/stimuli/{stim}/meta"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(meta["width"], 32);
    assert_eq!(meta["height"], 32);
    assert_eq!(meta["n_frames"], 25);
    assert_eq!(meta["fps"], 100.0);
    assert_eq!(meta["quantization"]["offset"], 128.0);

    let (s, first) = call(&app, "GET", &format!("/api/stimuli/{stim}/frames"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first.len(), 25 * 32 * 32);
    assert!(dir.path().join("cache").join(format!("{stim}.u8")).is_file());
    let (_, second) = call(&app, "GET", &format!("/api/stimuli/{stim}/frames"), None).await;
    assert_eq!(first, second);

    // a fresh service with an empty cache renders the same bytes
    let other = tempfile::tempdir().unwrap();
    let cfg = AppConfig {
        cache_dir: other.path().join("cache"),
        ..config(dir.path())
    };
    let app2 = router(AppState::open(cfg).unwrap());
    let (_, third) = call(&app2, "GET", &format!("/api/stimuli/{stim}/frames"), None).await;
    assert_eq!(first, third);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (s, _) = call_json(&app, "GET", "/api/sessions/nope/trials/next", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "POST", "/api/sessions/nope/responses", Some(respond(0, "first"))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "GET", "/api/sessions/nope/results", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "GET", "/api/stimuli/deadbeef/meta", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/api/stimuli/deadbeef/frames", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call_json(&app, "POST", "/api/sessions", Some(json!({ "delta_u": [-6.0] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", "/api/sessions", Some(json!({ "nonsense": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let id = new_session(&app, json!({ "reps_per_cell": 1 })).await;
    let url = format!("/api/sessions/{id}/responses");
    let (s, _) = call_json(&app, "POST", &url, Some(json!({ "trial_id": 0, "choice": "third", "rt_ms": 1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", &url, Some(respond(1, "first"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(&app, "POST", &url, Some(respond(0, "first"))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call_json(&app, "POST", &url, Some(respond(0, "second"))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, _) = call_json(&app, "POST", &url, Some(respond(999, "first"))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_resumes_at_next_trial() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = new_session(&app, json!({ "reps_per_cell": 2 })).await;
    let (_, before) = call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await;
    for t in 0..7 {
        let (s, _) = call_json(&app, "POST", &format!("/api/sessions/{id}/responses"), Some(respond(t, "first"))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, expected) = call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await;
    drop(app);

    let (app, _) = self::app(dir.path());
    let (s, resumed) = call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(resumed, expected);
    assert_eq!(resumed["trial_id"], 7);
    assert_eq!(resumed["n_completed"], 7);
    // stimulus ids survive the restart
    let stim = before["stim_a"]["stimulus_id"].as_str().unwrap();
    let (s, _) = call_json(&app, "GET", &format!("/api/stimuli/{stim}/meta"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn explicit_seed_reproduces_schedule_across_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let a = new_session(&app, json!({ "seed": 42, "reps_per_cell": 1 })).await;
    let b = new_session(&app, json!({ "seed": 42, "reps_per_cell": 1 })).await;
    let c = new_session(&app, json!({ "reps_per_cell": 1 })).await;
    assert_ne!(a, b);
    let next = |id: String| {
        let app = app.clone();
        async move { call_json(&app, "GET", &format!("/api/sessions/{id}/trials/next"), None).await.1 }
    };
    let (na, nb) = (next(a.clone()).await, next(b.clone()).await);
    assert_eq!(na["stim_a"], nb["stim_a"]);
    // answering one session leaves the other untouched
    call_json(&app, "POST", &format!("/api/sessions/{a}/responses"), Some(respond(0, "first"))).await;
    assert_eq!(next(b).await["trial_id"], 0);
    assert_eq!(next(a).await["trial_id"], 1);
    assert_eq!(next(c).await["trial_id"], 0);
}

#[tokio::test]
async fn timing_flag_reported_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = new_session(&app, json!({ "reps_per_cell": 1 })).await;
    let url = format!("/api/sessions/{id}/responses");
    let body = json!({ "trial_id": 0, "choice": "first", "rt_ms": 300.0, "presentation_ms": [250.0, 330.0] });
    let (_, ack) = call_json(&app, "POST", &url, Some(body)).await;
    assert_eq!(ack["timing_flagged"], true);
    let (_, res) = call_json(&app, "GET", &format!("/api/sessions/{id}/results"), None).await;
    assert_eq!(res["n_timing_flagged"], 1);
    assert_eq!(res["status"], "active");
    assert!(res["fit"].is_null());
}
