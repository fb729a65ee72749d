//! The `/v1` HTTP API.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use subscope_core::statistics::HeatmapSort;

use crate::error::{ServiceError, ServiceResult};
use crate::ops;
use crate::session::{Session, SessionArchive};
use crate::store::{JobState, JobStatus, SessionHandle, Store};
use crate::to_json;

type AppState = Arc<Store>;
type Reply = Result<Response, ServiceError>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json(status, &self.body())
    }
}

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_json(body)).into_response()
}

fn ok<T: Serialize>(body: &T) -> Reply {
    Ok(json(StatusCode::OK, body))
}

/// Strict body parsing; an empty body reads as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ServiceResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(serde_json::from_str("{}")?);
    }
    Ok(serde_json::from_slice(bytes)?)
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ServiceResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

/// Runs `f` on a copy of the session and keeps the copy only once it is
/// persisted.
async fn mutate<T>(
    store: &Store,
    handle: &SessionHandle,
    f: impl FnOnce(&mut Session) -> ServiceResult<T>,
) -> ServiceResult<T> {
    let mut guard = handle.write().await;
    let mut draft = guard.clone();
    let out = f(&mut draft)?;
    store.persist(&draft)?;
    *guard = draft;
    Ok(out)
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/import", post(import_session))
        .route("/v1/sessions/{id}", get(session_info))
        .route("/v1/sessions/{id}/datasets", post(upload).get(list_datasets))
        .route("/v1/sessions/{id}/constraints", post(constraints))
        .route("/v1/sessions/{id}/match", post(match_cohorts))
        .route("/v1/sessions/{id}/search", post(search))
        .route("/v1/jobs/{id}", get(job))
        .route("/v1/sessions/{id}/clusters", get(clusters))
        .route("/v1/sessions/{id}/layout", get(layout))
        .route("/v1/sessions/{id}/clusters/{cid}/views/{view}", get(view))
        .route("/v1/sessions/{id}/replication/candidates", post(candidates))
        .route("/v1/sessions/{id}/replication/recommend", get(recommend))
        .route("/v1/sessions/{id}/replication/commit", post(commit))
        .route("/v1/sessions/{id}/report", get(report))
        .route("/v1/sessions/{id}/export", get(export))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .with_state(store)
}

pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

async fn create_session(State(store): State<AppState>) -> Reply {
    let id = store.create()?;
    let s = store.get(&id)?;
    let info = ops::info(&*s.read().await);
    Ok(json(StatusCode::CREATED, &info))
}

async fn import_session(State(store): State<AppState>, bytes: Bytes) -> Reply {
    let archive: SessionArchive = body(&bytes)?;
    let s = ops::import(archive)?;
    let info = ops::info(&s);
    store.insert(s)?;
    Ok(json(StatusCode::CREATED, &info))
}

async fn session_info(State(store): State<AppState>, Path(id): Path<String>) -> Reply {
    let s = store.get(&id)?;
    let info = ops::info(&*s.read().await);
    ok(&info)
}

async fn list_datasets(State(store): State<AppState>, Path(id): Path<String>) -> Reply {
    let s = store.get(&id)?;
    let list = ops::datasets(&*s.read().await);
    ok(&list)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagQuery {
    tag: String,
}

async fn upload(
    State(store): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<TagQuery>, QueryRejection>,
    bytes: Bytes,
) -> Reply {
    let handle = store.get(&id)?;
    let tag = query(q)?.tag;
    let req: ops::UploadRequest = body(&bytes)?;
    let report = mutate(&store, &handle, |s| ops::ingest(s, &tag, req.csv.as_bytes(), req.schema)).await?;
    Ok(json(StatusCode::CREATED, &report))
}

async fn constraints(State(store): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let handle = store.get(&id)?;
    let req: ops::ConstraintsRequest = body(&bytes)?;
    let echo = mutate(&store, &handle, |s| ops::set_constraints(s, &req)).await?;
    ok(&echo)
}

async fn match_cohorts(State(store): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let handle = store.get(&id)?;
    let req: ops::MatchRequest = body(&bytes)?;
    let m = mutate(&store, &handle, |s| ops::match_cohorts(s, &req)).await?;
    ok(&m)
}

async fn search(State(store): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let handle = store.get(&id)?;
    let req: ops::SearchRequest = body(&bytes)?;
    let job = ops::prepare_search(&*handle.read().await, &req)?;
    let job_id = store.start_job(&id)?;
    let status = JobStatus {
        job_id: job_id.clone(),
        session_id: id,
        status: JobState::Running,
        error: None,
        result: None,
    };
    let bg = store.clone();
    tokio::spawn(async move {
        let ran = tokio::task::spawn_blocking(move || {
            let r = ops::run_search(&job);
            (job, r)
        })
        .await;
        let outcome = match ran {
            Ok((job, Ok(result))) => mutate(&bg, &handle, |s| ops::finish_search(s, &job, result)).await,
            Ok((_, Err(e))) => Err(e),
            Err(e) => Err(ServiceError::Io(std::io::Error::other(format!("search task failed: {e}")))),
        };
        bg.finish_job(&job_id, outcome);
    });
    Ok(json(StatusCode::ACCEPTED, &status))
}

async fn job(State(store): State<AppState>, Path(id): Path<String>) -> Reply {
    ok(&store.job(&id)?)
}

async fn clusters(
    State(store): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ops::ClustersQuery>, QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let s = store.get(&id)?;
    let list = ops::clusters(&*s.read().await, &q)?;
    ok(&list)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutQuery {
    beta: Option<f64>,
    k: Option<usize>,
}

async fn layout(
    State(store): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<LayoutQuery>, QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let s = store.get(&id)?;
    let l = ops::layout(&*s.read().await, q.beta.unwrap_or(0.5), q.k)?;
    ok(&l)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewQuery {
    sort: Option<HeatmapSort>,
    a: Option<String>,
    b: Option<String>,
    var: Option<String>,
}

fn required<'a>(v: &'a Option<String>, name: &str) -> ServiceResult<&'a str> {
    v.as_deref()
        .ok_or_else(|| ServiceError::BadRequest(format!("query parameter `{name}` is required")))
}

async fn view(
    State(store): State<AppState>,
    Path((id, cid, view)): Path<(String, String, String)>,
    q: Result<Query<ViewQuery>, QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let handle = store.get(&id)?;
    let s = handle.read().await;
    match view.as_str() {
        "donut" => ok(&ops::donut(&s, &cid)?),
        "donut-heatmap" => ok(&ops::donut_heatmap(&s, &cid, q.sort.unwrap_or_default())?),
        "splom" => ok(&ops::splom(&s, &cid)?),
        "mosaic" => ok(&ops::mosaic(&s, &cid, required(&q.a, "a")?, required(&q.b, "b")?)?),
        "errorbars" => ok(&ops::errorbars(&s, &cid, required(&q.var, "var")?)?),
        other => Err(ServiceError::NotFound(format!("no view `{other}`"))),
    }
}

async fn candidates(State(store): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let handle = store.get(&id)?;
    let req: ops::CandidatesRequest = body(&bytes)?;
    let list = mutate(&store, &handle, |s| ops::candidates(s, &req)).await?;
    ok(&list)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendQuery {
    cluster_id: String,
    grid: Option<usize>,
    new_cohort: Option<String>,
}

async fn recommend(
    State(store): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RecommendQuery>, QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let s = store.get(&id)?;
    let rec = ops::recommend(&*s.read().await, &q.cluster_id, q.grid, q.new_cohort.as_deref())?;
    ok(&rec)
}

async fn commit(State(store): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let handle = store.get(&id)?;
    let req: ops::CommitRequest = body(&bytes)?;
    let done = mutate(&store, &handle, |s| ops::commit(s, &req)).await?;
    ok(&done)
}

async fn report(
    State(store): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Reply {
    let q = query(q)?;
    if let Some(k) = q.keys().next() {
        return Err(ServiceError::BadRequest(format!("unknown query parameter `{k}`")));
    }
    let s = store.get(&id)?;
    let r = ops::report(&*s.read().await)?;
    ok(&r)
}

async fn export(State(store): State<AppState>, Path(id): Path<String>) -> Reply {
    let s = store.get(&id)?;
    let archive = ops::export(&*s.read().await);
    ok(&archive)
}
