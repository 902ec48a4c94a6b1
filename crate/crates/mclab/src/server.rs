//! JSON-over-HTTP experiment service. All session state lives in the
//! JSONL files; the in-memory maps are caches rebuilt on startup.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mclab_core::experiment::{
    aggregate, frames_per_interval, observations, CellSummary, ExperimentConfig, Response as TrialResponse,
    SessionStatus, SessionStore, StimulusSpec,
};
use mclab_core::inference::{fit_psychometric, recover_prior_likelihood, AStar, Choice, PsychometricFit, Recovery};
use mclab_core::synth::{GridSpec, Quantization, SynthState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{write_atomic, AppConfig};

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<mclab_core::Error> for ApiError {
    fn from(e: mclab_core::Error) -> Self {
        use mclab_core::Error::*;
        let status = match &e {
            NotFound(_) => StatusCode::NOT_FOUND,
            Conflict(_) => StatusCode::CONFLICT,
            Domain(_) | Config(_) | Parse { .. } | Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone)]
struct Stimulus {
    spec: StimulusSpec,
    grid: GridSpec,
    n_frames: usize,
}

/// Content address of a rendered stimulus.
pub fn stimulus_id(spec: &StimulusSpec, grid: &GridSpec, n_frames: usize) -> String {
    let key = json!({
        "params": spec.params,
        "grid": spec.effective_grid(grid),
        "seed": spec.seed,
        "n_frames": n_frames,
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

type Session = Arc<Mutex<SessionStore>>;

pub struct AppState {
    config: AppConfig,
    sessions: RwLock<HashMap<String, Session>>,
    stimuli: RwLock<HashMap<String, Stimulus>>,
}

impl AppState {
    /// Loads every session file in the sessions directory.
    pub fn open(config: AppConfig) -> anyhow::Result<Arc<Self>> {
        config.prepare()?;
        let state = Arc::new(Self {
            config,
            sessions: RwLock::new(HashMap::new()),
            stimuli: RwLock::new(HashMap::new()),
        });
        let mut paths: Vec<PathBuf> = fs::read_dir(&state.config.sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            let store = SessionStore::load(&p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
            state.insert(store);
        }
        Ok(state)
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.config.sessions_dir.join(format!("{id}.jsonl"))
    }

    fn insert(&self, store: SessionStore) {
        let grid = store.grid().copied().unwrap_or(self.config.grid);
        let n_frames = frames_per_interval(store.config(), &grid);
        {
            let mut stimuli = self.stimuli.write().unwrap();
            for t in store.schedule() {
                for spec in [t.first, t.second] {
                    stimuli
                        .entry(stimulus_id(&spec, &grid, n_frames))
                        .or_insert(Stimulus { spec, grid, n_frames });
                }
            }
        }
        let id = store.session_id().to_string();
        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(store)));
    }

    fn session(&self, id: &str) -> ApiResult<Session> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| not_found("session", id))
    }

    fn stimulus(&self, id: &str) -> ApiResult<Stimulus> {
        self.stimuli
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| not_found("stimulus", id))
    }

    fn stimulus_ref(&self, store: &SessionStore, spec: &StimulusSpec) -> Value {
        let grid = store.grid().copied().unwrap_or(self.config.grid);
        let id = stimulus_id(spec, &grid, frames_per_interval(store.config(), &grid));
        json!({
            "stimulus_id": id,
            "meta": format!("/api/stimuli/{id}/meta"),
            "frames": format!("/api/stimuli/{id}/frames"),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id/trials/next", get(next_trial))
        .route("/api/sessions/:id/responses", post(post_response))
        .route("/api/sessions/:id/results", get(results))
        .route("/api/stimuli/:id/meta", get(stimulus_meta))
        .route("/api/stimuli/:id/frames", get(stimulus_frames))
        .with_state(state)
}

fn derive_seed(master: u64, session_id: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(session_id.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Overlays the request's fields on the service's protocol defaults.
fn merge_config(base: &ExperimentConfig, overrides: &serde_json::Map<String, Value>) -> ApiResult<ExperimentConfig> {
    let mut value = serde_json::to_value(base).map_err(|e| bad_request(e.to_string()))?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| bad_request(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let mut overrides = if body.iter().all(u8::is_ascii_whitespace) {
        serde_json::Map::new()
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(bad_request("session request must be a JSON object")),
            Err(e) => return Err(bad_request(format!("invalid JSON: {e}"))),
        }
    };
    let seed = match overrides.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| bad_request("seed must be a non-negative integer"))?),
    };
    let config = merge_config(&state.config.experiment, &overrides)?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let seed = seed.unwrap_or_else(|| derive_seed(state.config.seed, &session_id));
    let store = SessionStore::new(session_id.clone(), config, seed, Some(state.config.grid))?;
    let n_trials = store.schedule().len();
    let path = state.session_path(&session_id);
    tokio::task::spawn_blocking(move || store.persist(&path).map(|_| store))
        .await
        .map_err(|e| anyhow::anyhow!(e))?
        .map(|store| state.insert(store))?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session_id, "seed": seed, "n_trials": n_trials })),
    ))
}

async fn next_trial(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let store = session.lock().unwrap();
    let done = store.trials().len();
    let total = store.schedule().len();
    Ok(Json(match store.next_trial() {
        None => json!({ "done": true, "n_completed": done, "n_total": total }),
        Some(t) => json!({
            "trial_id": t.trial_id,
            "stim_a": state.stimulus_ref(&store, &t.first),
            "stim_b": state.stimulus_ref(&store, &t.second),
            "stimulus_ms": store.config().stimulus_ms,
            "isi_ms": store.config().isi_ms,
            "n_completed": done,
            "n_total": total,
        }),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    trial_id: usize,
    choice: Choice,
    rt_ms: f64,
    #[serde(default)]
    timing_flagged: bool,
    #[serde(default)]
    presentation_ms: Option<[f64; 2]>,
}

async fn post_response(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: ResponseBody = serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid response: {e}")))?;
    let session = state.session(&id)?;
    let path = state.session_path(&id);
    // One writer per session: the lock is held across the write so the
    // file and memory never disagree.
    tokio::task::spawn_blocking(move || -> ApiResult<Json<Value>> {
        let mut store = session.lock().unwrap();
        let mut next = store.clone();
        let flagged = next
            .record(
                body.trial_id,
                TrialResponse {
                    response: body.choice,
                    response_time_ms: body.rt_ms,
                    timing_flagged: body.timing_flagged,
                    presentation_ms: body.presentation_ms,
                },
            )?
            .timing_flagged;
        next.persist(&path)?;
        *store = next;
        Ok(Json(json!({
            "accepted": true,
            "trial_id": body.trial_id,
            "timing_flagged": flagged,
            "n_completed": store.trials().len(),
            "done": store.status() == SessionStatus::Complete,
        })))
    })
    .await
    .map_err(|e| anyhow::anyhow!(e))?
}

#[derive(Debug, Serialize)]
struct FitReport {
    fits: Vec<PsychometricFit>,
    recovery: Recovery,
}

fn fit_session(store: &SessionStore, cells: &[CellSummary]) -> mclab_core::Result<FitReport> {
    let fits = observations(store.config(), cells)?
        .into_iter()
        .map(|(cond, obs)| fit_psychometric(cond, &obs))
        .collect::<mclab_core::Result<Vec<_>>>()?;
    let recovery = recover_prior_likelihood(&fits, AStar::Auto)?;
    Ok(FitReport { fits, recovery })
}

async fn results(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let store = session.lock().unwrap().clone();
    let cells = aggregate(store.trials());
    let mut out = json!({
        "session_id": store.session_id(),
        "status": store.status(),
        "n_completed": store.trials().len(),
        "n_total": store.schedule().len(),
        "n_timing_flagged": store.trials().iter().filter(|t| t.timing_flagged).count(),
        "cells": cells,
        "fit": Value::Null,
    });
    if store.status() == SessionStatus::Complete {
        match fit_session(&store, &cells) {
            Ok(report) => out["fit"] = serde_json::to_value(report).map_err(|e| anyhow::anyhow!(e))?,
            Err(e) => out["fit_error"] = Value::String(e.to_string()),
        }
    }
    Ok(Json(out))
}

#[derive(Debug, Serialize)]
struct StimulusMeta {
    width: usize,
    height: usize,
    n_frames: usize,
    fps: f64,
    quantization: Quantization,
}

fn meta_of(s: &Stimulus) -> mclab_core::Result<StimulusMeta> {
    let grid = s.spec.effective_grid(&s.grid);
    let sigma_i = SynthState::new(&s.spec.params, &grid, s.spec.seed)?.sigma_i();
    Ok(StimulusMeta {
        width: grid.nx,
        height: grid.ny,
        n_frames: s.n_frames,
        fps: grid.fps,
        quantization: Quantization::new(sigma_i),
    })
}

async fn stimulus_meta(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let s = state.stimulus(&id)?;
    let meta = tokio::task::spawn_blocking(move || meta_of(&s))
        .await
        .map_err(|e| anyhow::anyhow!(e))??;
    Ok(Json(serde_json::to_value(meta).map_err(|e| anyhow::anyhow!(e))?))
}

/// Rendered 8-bit frames, from the cache when present.
pub fn stimulus_bytes(cache_dir: &Path, id: &str, spec: &StimulusSpec, grid: &GridSpec, n_frames: usize) -> anyhow::Result<Vec<u8>> {
    let path = cache_dir.join(format!("{id}.u8"));
    if let Ok(bytes) = fs::read(&path) {
        let expected = n_frames * grid.nx * grid.ny;
        if bytes.len() == expected {
            return Ok(bytes);
        }
    }
    let bytes = spec.render(grid, n_frames)?.quantized();
    write_atomic(&path, &bytes)?;
    Ok(bytes)
}

async fn stimulus_frames(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = state.stimulus(&id)?;
    let cache = state.config.cache_dir.clone();
    let bytes = tokio::task::spawn_blocking(move || stimulus_bytes(&cache, &id, &s.spec, &s.grid, s.n_frames))
        .await
        .map_err(|e| anyhow::anyhow!(e))??;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_overrides_only_given_fields() {
        let base = ExperimentConfig::default();
        let mut o = serde_json::Map::new();
        o.insert("reps_per_cell".into(), json!(2));
        let m = merge_config(&base, &o).unwrap();
        assert_eq!(m.reps_per_cell, 2);
        assert_eq!(m.delta_u, base.delta_u);
        o.insert("bogus".into(), json!(1));
        assert_eq!(merge_config(&base, &o).unwrap_err().0, StatusCode::BAD_REQUEST);
    }

    #[test]
    fn seeds_depend_on_master_and_id() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
    }
}
