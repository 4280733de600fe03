use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use moodshift::classifier::argmax;
use moodshift::face::{FaceImage, MINISET_DIR};
use moodshift::pipeline::{content_hash, BlogService, ContentStore, Models};
use moodshift::synth::tiny_models;
use moodshift_server::{router, IMMUTABLE};
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "XyZboundary42";

fn app_with(dir: &std::path::Path, models: Models, limit: usize) -> Router {
    let store = ContentStore::open(dir).unwrap();
    router(Arc::new(BlogService::open(store, Arc::new(models)).unwrap()), limit)
}

fn app(dir: &std::path::Path) -> Router {
    app_with(dir, tiny_models(3), 10 << 20)
}

fn face_bytes() -> Vec<u8> {
    std::fs::read(format!("{MINISET_DIR}/face_00.png")).unwrap()
}

fn blank_png() -> Vec<u8> {
    FaceImage::filled(160, 160, 3, 128).encode_png()
}

fn multipart(name: &str, bytes: &[u8]) -> Body {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"p.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Body::from(body)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, headers)
}

async fn json_call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    };
    let (status, bytes, _) = send(app, req.unwrap()).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn upload(app: &Router, id: &str, field: &str, bytes: &[u8]) -> (StatusCode, Value) {
    let req = Request::put(format!("/api/users/{id}/photo"))
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(field, bytes))
        .unwrap();
    let (status, bytes, _) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn new_user(app: &Router, name: &str) -> String {
    let (status, body) = json_call(app, Method::POST, "/api/users", Some(json!({ "name": name }))).await;
    assert_eq!(status, StatusCode::CREATED);
    body["user"]["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_reports_models() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = json_call(&app(dir.path()), Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "models": { "classifier": "loaded", "gan": "loaded" } }));

    let mut models = tiny_models(3);
    models.gan = None;
    let (_, body) = json_call(&app_with(dir.path(), models, 1 << 20), Method::GET, "/api/health", None).await;
    assert_eq!(body["models"]["gan"], "missing");
}

#[tokio::test]
async fn user_creation_and_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = json_call(&app, Method::POST, "/api/users", Some(json!({ "name": "alice" }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let user = &body["user"];
    assert_eq!(user["name"], "alice");
    assert!(user["original_photo"].is_null() && user["prepped_face"].is_null() && user["current_avatar"].is_null());
    let id = user["id"].as_str().unwrap();
    assert_ne!(id, new_user(&app, "alice").await);

    let (status, got) = json_call(&app, Method::GET, &format!("/api/users/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&got["user"], user);

    let (status, body) = json_call(&app, Method::POST, "/api/users", Some(json!({ "name": "  " }))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_name")));
    let (status, body) = json_call(&app, Method::GET, "/api/users/nobody", None).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_user")));
    assert!(body["message"].as_str().unwrap().contains("nobody"));
    let (status, body) = json_call(&app, Method::POST, "/api/users", Some(json!({ "nom": "x" }))).await;
    assert_eq!((status.is_client_error(), body["error"].as_str()), (true, Some("bad_request")));
}

#[tokio::test]
async fn photo_upload_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_user(&app, "bob").await;

    let (status, body) = upload(&app, &id, "photo", b"definitely not an image").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("undecodable")));
    let (_, user) = json_call(&app, Method::GET, &format!("/api/users/{id}"), None).await;
    assert!(user["user"]["original_photo"].is_null());

    let (status, body) = upload(&app, &id, "photo", &blank_png()).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("no_face")));
    let (_, user) = json_call(&app, Method::GET, &format!("/api/users/{id}"), None).await;
    assert!(user["user"]["original_photo"].is_string());
    assert!(user["user"]["prepped_face"].is_null());

    let (status, body) = upload(&app, &id, "file", &face_bytes()).await;
    assert_eq!(status, StatusCode::OK);
    let user = &body["user"];
    assert!(user["prepped_face"].is_string());
    assert_eq!(user["current_avatar"], user["prepped_face"]);

    let (status, body) = upload(&app, "ghost", "photo", &face_bytes()).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_user")));
}

#[tokio::test]
async fn oversized_upload_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), tiny_models(3), 1024);
    let id = new_user(&app, "carol").await;
    let (status, body) = upload(&app, &id, "photo", &face_bytes()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["error"], "too_large");
}

#[tokio::test]
async fn posting_regenerates_the_avatar() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_user(&app, "dana").await;

    let (status, body) =
        json_call(&app, Method::POST, &format!("/api/users/{id}/posts"), Some(json!({ "text": "so happy" }))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("no_photo")));

    let (_, body) = upload(&app, &id, "photo", &face_bytes()).await;
    let prepped = body["user"]["prepped_face"].clone();

    let mut avatars = Vec::new();
    for text in ["I'm not feeling well today", "what a wonderful surprise"] {
        let (status, body) =
            json_call(&app, Method::POST, &format!("/api/users/{id}/posts"), Some(json!({ "text": text }))).await;
        assert_eq!(status, StatusCode::CREATED);
        let post = &body["post"];
        let probs: Vec<f64> = serde_json::from_value(post["probabilities"].clone()).unwrap();
        assert_eq!(probs.len(), 7);
        let label = moodshift::classifier::EmotionLabel::from_code(argmax(&probs)).unwrap();
        assert_eq!(post["emotion"], label.name());
        assert_eq!(body["user"]["current_avatar"], post["avatar"]);
        assert_eq!(body["user"]["current_emotion"], post["emotion"]);
        assert_eq!(body["user"]["prepped_face"], prepped);
        assert_ne!(post["avatar"], prepped);
        avatars.push(post["avatar"].as_str().unwrap().to_string());
    }

    let (status, body) = json_call(&app, Method::GET, &format!("/api/users/{id}/posts"), None).await;
    assert_eq!(status, StatusCode::OK);
    let posts = body["posts"].as_array().unwrap();
    assert_eq!(posts.len(), 2);
    assert_eq!(posts[0]["text"], "what a wonderful surprise");
    assert!(posts[0]["created_at"].as_str() > posts[1]["created_at"].as_str());

    let (status, bytes, headers) =
        send(&app, Request::get(format!("/api/images/{}", avatars[0])).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(headers[header::CACHE_CONTROL], IMMUTABLE);
    assert_eq!(content_hash(&bytes), avatars[0]);
    let img = FaceImage::decode(&bytes).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (128, 128, 3));
}

#[tokio::test]
async fn missing_models_and_images() {
    let dir = tempfile::tempdir().unwrap();
    let mut models = tiny_models(3);
    models.classifier = None;
    let app = app_with(dir.path(), models, 10 << 20);
    let id = new_user(&app, "erin").await;
    upload(&app, &id, "photo", &face_bytes()).await;
    let (status, body) =
        json_call(&app, Method::POST, &format!("/api/users/{id}/posts"), Some(json!({ "text": "hi" }))).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::SERVICE_UNAVAILABLE, Some("model_not_loaded")));

    for hash in ["../../etc/passwd", &"0".repeat(64)] {
        let (status, body) = json_call(&app, Method::GET, &format!("/api/images/{hash}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{hash}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        let id = new_user(&app, "fay").await;
        upload(&app, &id, "photo", &face_bytes()).await;
        json_call(&app, Method::POST, &format!("/api/users/{id}/posts"), Some(json!({ "text": "angry" }))).await;
        id
    };
    let app = app(dir.path());
    let (_, body) = json_call(&app, Method::GET, &format!("/api/users/{id}/posts"), None).await;
    assert_eq!(body["posts"].as_array().unwrap().len(), 1);
}
