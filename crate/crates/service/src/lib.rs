//! HTTP facade over a loaded index.
//!
//! | route | body |
//! |---|---|
//! | `GET /api/stats` | [`StatsResponse`] |
//! | `POST /api/query?k=5` | multipart field `image` in, [`QueryResponse`] out |
//! | `GET /api/images/{id}` | original image bytes |
//! | `GET /api/entries/{id}/curves` | [`EntryCurves`] |
//!
//! Anything else is served from the optional static directory. Errors are
//! JSON `{"error", "message"}`.

mod response;

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use thir_core::{Index, RgbImageGrid};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use response::{
    entry_curves, image_url, query_response, stats_response, EntryCurves, QueryCurves,
    QueryResponse, QueryResult, StatsResponse,
};

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

pub const DEFAULT_K: usize = 5;

#[derive(Clone)]
pub struct AppState {
    index: Arc<Index>,
    data_root: PathBuf,
}

impl AppState {
    pub fn new(index: Index, data_root: impl Into<PathBuf>) -> Self {
        Self {
            index: Arc::new(index),
            data_root: data_root.into(),
        }
    }

    pub fn index(&self) -> &Index {
        &self.index
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let error = match self.status {
            StatusCode::BAD_REQUEST => "bad_request",
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::PAYLOAD_TOO_LARGE => "payload_too_large",
            StatusCode::INTERNAL_SERVER_ERROR => "internal",
            _ => self.status.canonical_reason().unwrap_or("error"),
        };
        let body = serde_json::json!({ "error": error, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState, static_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/api/stats", get(stats))
        .route("/api/query", post(query))
        .route("/api/images/{id}", get(image))
        .route("/api/entries/{id}/curves", get(curves))
        .route("/api/{*rest}", get(unknown_route).post(unknown_route))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    };
    app.layer(cors())
}

fn cors() -> CorsLayer {
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            is_local_origin(origin.to_str().unwrap_or(""))
        }))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

fn is_local_origin(origin: &str) -> bool {
    let Some(rest) = origin
        .strip_prefix("http://")
        .or_else(|| origin.strip_prefix("https://"))
    else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or(rest)
    } else {
        rest.split(':').next().unwrap_or(rest)
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn stats(State(state): State<AppState>) -> Json<StatsResponse> {
    Json(stats_response(&state.index))
}

#[derive(Debug, Deserialize)]
struct QueryParams {
    k: Option<usize>,
    #[serde(default)]
    normalize: bool,
}

async fn query(
    State(state): State<AppState>,
    params: Result<Query<QueryParams>, QueryRejection>,
    multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult<Json<QueryResponse>> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let k = params.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let mut multipart = multipart.map_err(|e| ApiError::new(e.status(), e.body_text()))?;

    let mut upload = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(e.status(), e.body_text()))?
    {
        if field.name() == Some("image") {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(e.status(), e.body_text()))?;
            upload = Some(bytes);
        }
    }
    let bytes = upload.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;

    let index = state.index.clone();
    let started = std::time::Instant::now();
    let response = tokio::task::spawn_blocking(move || {
        let img = RgbImageGrid::decode(&bytes).map_err(|e| ApiError::bad_request(e.to_string()))?;
        query_response(&index, &img, k, params.normalize)
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    log::debug!("query k={k} answered in {:?}", started.elapsed());
    Ok(Json(response))
}

fn entry_id(path: Result<Path<u32>, PathRejection>, ix: &Index) -> ApiResult<u32> {
    let Path(id) = path.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if (id as usize) < ix.len() {
        Ok(id)
    } else {
        Err(ApiError::not_found(format!("no entry with id {id}")))
    }
}

async fn image(
    State(state): State<AppState>,
    path: Result<Path<u32>, PathRejection>,
) -> ApiResult<Response> {
    let id = entry_id(path, &state.index)?;
    let rel = &state.index.entries()[id as usize].record.path;
    let file = state.data_root.join(rel);
    let bytes = tokio::fs::read(&file).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            ApiError::not_found(format!("image file {} is missing", rel.display()))
        }
        _ => ApiError::internal(format!("cannot read {}: {e}", rel.display())),
    })?;
    Ok(([(header::CONTENT_TYPE, content_type(rel))], bytes).into_response())
}

fn content_type(path: &FsPath) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn curves(
    State(state): State<AppState>,
    path: Result<Path<u32>, PathRejection>,
) -> ApiResult<Json<EntryCurves>> {
    let id = entry_id(path, &state.index)?;
    entry_curves(&state.index, id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no entry with id {id}")))
}

async fn unknown_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn placeholder() -> Html<&'static str> {
    Html(
        "<!doctype html><title>THIR</title>\
         <p>THIR retrieval service. The query console is not installed; \
         start with <code>--static DIR</code> to serve it. API under <code>/api/</code>.</p>",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_origins() {
        assert!(is_local_origin("http://localhost:5173"));
        assert!(is_local_origin("http://127.0.0.1"));
        assert!(is_local_origin("http://[::1]:8080"));
        assert!(!is_local_origin("http://localhost.evil.com"));
        assert!(!is_local_origin("https://example.org"));
        assert!(!is_local_origin("null"));
    }

    #[test]
    fn content_types() {
        assert_eq!(content_type(FsPath::new("a/b.PNG")), "image/png");
        assert_eq!(content_type(FsPath::new("x.jpeg")), "image/jpeg");
        assert_eq!(content_type(FsPath::new("x")), "application/octet-stream");
    }
}
