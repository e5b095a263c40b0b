//! HTTP API over the project store.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use dsprobe::catalog::DatasetRecord;

use crate::agreement::{compute_agreement, DetectorOutput};
use crate::store::{AnnotateError, LabelSet, NewPdf, Store};

pub const TOKEN_HEADER: &str = "x-annotator-token";

pub struct AppState {
    pub store: Store,
    /// Detector output for the agreement endpoint, if a run is available.
    pub detected: Option<DetectorOutput>,
    pub registry: Vec<DatasetRecord>,
}

pub struct ApiError(pub AnnotateError);

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        ApiError(e)
    }
}

fn error_kind(e: &AnnotateError) -> (&'static str, StatusCode) {
    use AnnotateError::*;
    match e {
        DuplicateProjectName(_) => ("DuplicateProjectName", StatusCode::CONFLICT),
        EmptyPdfSet => ("EmptyPdfSet", StatusCode::UNPROCESSABLE_ENTITY),
        DuplicatePdfId(_) => ("DuplicatePdfId", StatusCode::UNPROCESSABLE_ENTITY),
        NotPdf(_) => ("NotPdf", StatusCode::UNPROCESSABLE_ENTITY),
        UnknownProject(_) => ("UnknownProject", StatusCode::NOT_FOUND),
        DuplicateLabel(_) => ("DuplicateLabel", StatusCode::CONFLICT),
        EmptyLabel => ("EmptyLabel", StatusCode::UNPROCESSABLE_ENTITY),
        FrozenSet => ("FrozenSet", StatusCode::CONFLICT),
        UnknownPdfId(_) => ("UnknownPdfId", StatusCode::UNPROCESSABLE_ENTITY),
        MalformedRow { .. } => ("MalformedRow", StatusCode::UNPROCESSABLE_ENTITY),
        UnknownLabel(_) => ("UnknownLabel", StatusCode::UNPROCESSABLE_ENTITY),
        UnknownPdf(_) => ("UnknownPdf", StatusCode::NOT_FOUND),
        NoSuchAnnotation => ("NoSuchAnnotation", StatusCode::NOT_FOUND),
        InvalidId(_) => ("InvalidId", StatusCode::BAD_REQUEST),
        Unauthorized => ("Unauthorized", StatusCode::UNAUTHORIZED),
        NoOverlap => ("NoOverlap", StatusCode::UNPROCESSABLE_ENTITY),
        Storage { .. } => ("StorageError", StatusCode::INTERNAL_SERVER_ERROR),
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (kind, status) = error_kind(&self.0);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody { error: kind, message: self.0.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: "BadRequest", message })).into_response()
}

#[derive(Deserialize)]
pub struct TokenRequest {
    pub annotator_id: String,
}

#[derive(Serialize, Deserialize)]
pub struct TokenResponse {
    pub annotator_id: String,
    pub token: String,
}

async fn issue_token(State(s): Shared, Json(req): Json<TokenRequest>) -> ApiResult<Json<TokenResponse>> {
    let token = s.store.issue_token(&req.annotator_id)?;
    Ok(Json(TokenResponse { annotator_id: req.annotator_id, token }))
}

#[derive(Deserialize)]
pub struct UploadedPdf {
    pub filename: String,
    pub content_base64: String,
}

#[derive(Deserialize)]
pub struct CreateProject {
    pub name: String,
    pub pdfs: Vec<UploadedPdf>,
    #[serde(default)]
    pub label_set_1: Vec<String>,
    #[serde(default)]
    pub label_set_2: Vec<String>,
}

async fn create_project(State(s): Shared, Json(req): Json<CreateProject>) -> Result<Response, ApiError> {
    let mut pdfs = Vec::with_capacity(req.pdfs.len());
    for p in req.pdfs {
        match base64::engine::general_purpose::STANDARD.decode(p.content_base64.trim()) {
            Ok(bytes) => pdfs.push(NewPdf { filename: p.filename, bytes }),
            Err(e) => return Ok(bad_request(format!("{}: {e}", p.filename))),
        }
    }
    let project = s.store.create_project(&req.name, pdfs, &req.label_set_1, &req.label_set_2)?;
    Ok((StatusCode::CREATED, Json(project)).into_response())
}

async fn list_projects(State(s): Shared) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.projects()?))
}

async fn get_project(State(s): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.project(&id)?))
}

#[derive(Deserialize)]
pub struct AddLabel {
    pub value: String,
    #[serde(default = "datasets")]
    pub set: LabelSet,
}

fn datasets() -> LabelSet {
    LabelSet::Datasets
}

async fn add_label(
    State(s): Shared,
    Path(id): Path<String>,
    Json(req): Json<AddLabel>,
) -> ApiResult<impl IntoResponse> {
    let labels = s.store.add_label(&id, req.set, &req.value)?;
    Ok(Json(serde_json::json!({ "label_set_1": labels })))
}

async fn upload_groups(State(s): Shared, Path(id): Path<String>, body: String) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.upload_groups(&id, &body)?))
}

async fn get_pdf(State(s): Shared, Path((id, pdf)): Path<(String, String)>) -> ApiResult<Response> {
    let pdf = pdf.strip_suffix(".pdf").unwrap_or(&pdf);
    let path = s.store.pdf_path(&id, pdf)?;
    let bytes =
        std::fs::read(&path).map_err(|e| AnnotateError::Storage { path: path.clone(), message: e.to_string() })?;
    Ok(([(header::CONTENT_TYPE, "application/pdf")], bytes).into_response())
}

#[derive(Deserialize)]
pub struct AnnotationRequest {
    pub project_id: String,
    pub pdf_id: String,
    pub label_1: String,
    pub label_2: String,
}

fn annotator(s: &AppState, headers: &HeaderMap) -> Result<String, AnnotateError> {
    let token = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()).ok_or(AnnotateError::Unauthorized)?;
    s.store.annotator_for_token(token)
}

async fn record_annotation(
    State(s): Shared,
    headers: HeaderMap,
    Json(req): Json<AnnotationRequest>,
) -> ApiResult<Response> {
    let who = annotator(&s, &headers)?;
    let (a, created) = s.store.record_annotation(&req.project_id, &who, &req.pdf_id, &req.label_1, &req.label_2)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(a)).into_response())
}

async fn delete_annotation(
    State(s): Shared,
    headers: HeaderMap,
    Json(req): Json<AnnotationRequest>,
) -> ApiResult<StatusCode> {
    let who = annotator(&s, &headers)?;
    s.store.delete_annotation(&req.project_id, &who, &req.pdf_id, &req.label_1, &req.label_2)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_annotations(State(s): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.annotations(&id)?))
}

#[derive(Deserialize)]
pub struct ExportQuery {
    pub annotator: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct ExportResponse {
    pub files: BTreeMap<String, String>,
}

async fn export(State(s): Shared, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let mut files = s.store.export(&id)?;
    match q.annotator {
        Some(a) => {
            let text = files.remove(&format!("{a}.csv")).ok_or(AnnotateError::InvalidId(a))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], text).into_response())
        }
        None => Ok(Json(ExportResponse { files }).into_response()),
    }
}

async fn agreement(State(s): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let project = s.store.project(&id)?;
    let Some(detected) = &s.detected else {
        let body =
            ErrorBody { error: "NoDetections", message: "the server was started without detector output".into() };
        return Ok((StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response());
    };
    let annotations = s.store.annotations(&id)?;
    let result = compute_agreement(&project.pdf_ids, &annotations, detected, &s.registry)?;
    Ok(Json(result).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tokens", post(issue_token))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/labels", post(add_label))
        .route("/projects/{id}/groups", post(upload_groups))
        .route("/projects/{id}/pdfs/{pdf}", get(get_pdf))
        .route("/projects/{id}/annotations", get(list_annotations))
        .route("/projects/{id}/export", get(export))
        .route("/projects/{id}/agreement", get(agreement))
        .route("/annotations", post(record_annotation).delete(delete_annotation))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// [`serve`] on a fresh multi-threaded runtime, for synchronous callers.
pub fn serve_blocking(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(addr, state))
}
