//! HTTP API over [`moodshift::pipeline::BlogService`].
//!
//! | Method | Path | Success |
//! |---|---|---|
//! | `POST` | `/api/users` `{name}` | 201 `{user}` |
//! | `PUT` | `/api/users/{id}/photo` (multipart) | 200 `{user}` |
//! | `POST` | `/api/users/{id}/posts` `{text}` | 201 `{post, user}` |
//! | `GET` | `/api/users/{id}` | 200 `{user}` |
//! | `GET` | `/api/users/{id}/posts` | 200 `{posts}` |
//! | `GET` | `/api/images/{hash}` | 200 PNG |
//! | `GET` | `/api/health` | 200 `{models}` |
//!
//! Failures use the envelope `{"error": code, "message": text}`.

mod config;

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use moodshift::face::FaceError;
use moodshift::pipeline::{BlogService, ContentStore, PipelineError};
use serde::Deserialize;
use serde_json::json;

pub use config::{ConfigError, ServerConfig, ENV_PREFIX};

/// Cache policy for content-addressed images.
pub const IMMUTABLE: &str = "public, max-age=31536000, immutable";

/// An error as the API reports it.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, code, message: message.into() }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> ApiError {
        let (status, code) = match &e {
            PipelineError::EmptyName => (StatusCode::BAD_REQUEST, "empty_name"),
            PipelineError::UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
            PipelineError::NoPhotoOnProfile(_) => (StatusCode::CONFLICT, "no_photo"),
            PipelineError::ModelNotLoaded(_) => (StatusCode::SERVICE_UNAVAILABLE, "model_not_loaded"),
            PipelineError::UnknownBlob(_) => (StatusCode::NOT_FOUND, "unknown_image"),
            PipelineError::Face(FaceError::NoFaceDetected) => (StatusCode::UNPROCESSABLE_ENTITY, "no_face"),
            PipelineError::Face(FaceError::Undecodable(_)) => (StatusCode::BAD_REQUEST, "undecodable"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    service: Arc<BlogService>,
}

impl AppState {
    /// Runs a blocking service call off the async workers.
    async fn call<T: Send + 'static>(
        &self,
        f: impl FnOnce(&BlogService) -> Result<T, PipelineError> + Send + 'static,
    ) -> ApiResult<T> {
        let service = self.service.clone();
        match tokio::task::spawn_blocking(move || f(&service)).await {
            Ok(r) => r.map_err(ApiError::from),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
        }
    }
}

#[derive(Deserialize)]
struct NewUser {
    name: String,
}

#[derive(Deserialize)]
struct NewPost {
    text: String,
}

/// The API router. Uploads larger than `max_upload_bytes` get 413.
pub fn router(service: Arc<BlogService>, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/users", post(create_user))
        .route("/api/users/{id}", get(get_user))
        .route("/api/users/{id}/photo", put(set_photo))
        .route("/api/users/{id}/posts", post(create_post).get(list_posts))
        .route("/api/images/{hash}", get(get_image))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .with_state(AppState { service })
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    let models = s.service.models();
    let status = |loaded: bool| if loaded { "loaded" } else { "missing" };
    Json(json!({
        "models": {
            "classifier": status(models.classifier.is_some()),
            "gan": status(models.gan.is_some()),
        }
    }))
}

async fn create_user(State(s): State<AppState>, body: Result<Json<NewUser>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(NewUser { name }) = body?;
    let user = s.call(move |svc| svc.create_user(&name)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "user": user }))))
}

async fn get_user(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let user = s.service.get_profile(&id)?;
    Ok(Json(json!({ "user": user })))
}

async fn list_posts(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let posts = s.service.list_posts(&id)?;
    Ok(Json(json!({ "posts": posts })))
}

/// Takes the field named `photo`, or the first field when none is.
async fn read_upload(mut form: Multipart) -> ApiResult<Vec<u8>> {
    let mut first = None;
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        let named = field.name() == Some("photo");
        if named || first.is_none() {
            let bytes = field.bytes().await.map_err(multipart_error)?.to_vec();
            if named {
                return Ok(bytes);
            }
            first = Some(bytes);
        }
    }
    first.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "multipart body has no file field"))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    ApiError::new(e.status(), if e.status() == StatusCode::PAYLOAD_TOO_LARGE { "too_large" } else { "bad_request" }, e.body_text())
}

async fn set_photo(
    State(s): State<AppState>,
    Path(id): Path<String>,
    form: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult<impl IntoResponse> {
    let form = form.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let bytes = read_upload(form).await?;
    let user = s.call(move |svc| svc.set_photo(&id, &bytes)).await?;
    Ok(Json(json!({ "user": user })))
}

async fn create_post(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<NewPost>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(NewPost { text }) = body?;
    let (post, user) = s.call(move |svc| svc.create_post(&id, &text)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "post": post, "user": user }))))
}

async fn get_image(State(s): State<AppState>, Path(hash): Path<String>) -> ApiResult<impl IntoResponse> {
    let bytes = s.call({
        let hash = hash.clone();
        move |svc| svc.store().get(&hash)
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (header::CACHE_CONTROL, IMMUTABLE.to_string()),
            (header::ETAG, format!("\"{hash}\"")),
        ],
        bytes,
    ))
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::new(e.status(), "bad_request", e.body_text())
    }
}

/// Opens the store and loads the models named by `cfg`.
pub fn build_service(cfg: &ServerConfig) -> Result<Arc<BlogService>, ServeError> {
    let models = cfg.load_models_shared()?;
    let store = ContentStore::open(&cfg.store_root)?;
    Ok(Arc::new(BlogService::open(store, models)?))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl ServeError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServeError::Config(e) => e.kind(),
            ServeError::Pipeline(e) => e.kind(),
            ServeError::Io(_) => "IoError",
        }
    }
}

/// Binds `cfg.addr()` and serves until the process is stopped.
pub async fn serve(cfg: ServerConfig) -> Result<(), ServeError> {
    let service = build_service(&cfg)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr()).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service, cfg.max_upload_bytes)).await?;
    Ok(())
}
