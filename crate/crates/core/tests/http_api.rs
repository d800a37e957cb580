use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use stitch::corpus::seeded_pairs;
use stitch::llm::Gateway;
use stitch::sb3::{load_sb3, write_sb3};
use stitch::session::http::router;
use stitch::session::{SessionStore, Tutor, COMPLETION_MESSAGE, DEFAULT_TTL};

const BOUNDARY: &str = "stitchboundary";

fn app() -> Router {
    router(Arc::new(Tutor::new(SessionStore::in_memory(DEFAULT_TTL), Arc::new(Gateway::stub()))))
}

fn multipart(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, data) in parts {
        body.extend(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.sb3\"\r\n\r\n").into_bytes());
        body.extend_from_slice(data);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{BOUNDARY}--\r\n").into_bytes());
    body
}

async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header(header::CONTENT_TYPE, ct);
    }
    let res = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn send_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (ct, bytes) = match body {
        Some(v) => (Some("application/json"), serde_json::to_vec(&v).unwrap()),
        None => (None, Vec::new()),
    };
    let (status, out) = send(app, method, uri, ct, bytes).await;
    (status, serde_json::from_slice(&out).unwrap_or(Value::Null))
}

async fn create(app: &Router, k: usize) -> (StatusCode, Value) {
    let f = &seeded_pairs()[k];
    let t = write_sb3(&f.teacher, &[]).unwrap();
    let s = write_sb3(&f.student, &[]).unwrap();
    let body = multipart(&[("teacher", &t), ("student", &s), ("description", b"Catch them all")]);
    let (status, out) = send(
        app,
        Method::POST,
        "/sessions",
        Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
        body,
    )
    .await;
    (status, serde_json::from_slice(&out).unwrap())
}

#[tokio::test]
async fn full_tutoring_loop() {
    let app = app();
    let (status, created) = create(&app, 7).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["sessionId"].as_str().unwrap().to_string();
    assert_eq!(created["status"], "IN_PROGRESS");
    assert_eq!(created["revision"], 0);
    assert_eq!(created["report"]["functionallyEquivalent"], false);

    let mut rounds = 0;
    loop {
        let (status, hint) = send_json(&app, Method::GET, &format!("/sessions/{id}/hint"), None).await;
        if status == StatusCode::CONFLICT {
            assert_eq!(hint["error"], "SESSION_COMPLETE");
            break;
        }
        assert_eq!(status, StatusCode::OK, "{hint}");
        assert!(!hint["explanation"].as_str().unwrap().is_empty());
        let spec = &hint["teacherRender"]["specs"][0];
        if !spec.is_null() {
            assert_eq!(spec["specVersion"], 1);
        }
        let (status, reply) = send_json(
            &app,
            Method::POST,
            &format!("/sessions/{id}/chat"),
            Some(json!({"question": "Why is this change needed?"})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        assert!(reply["reply"].as_str().unwrap().split_whitespace().count() <= 100);

        let (status, outcome) = send_json(
            &app,
            Method::POST,
            &format!("/sessions/{id}/apply"),
            Some(json!({"hintId": hint["hintId"]})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{outcome}");
        rounds += 1;
        assert!(rounds <= 10);
        if outcome["status"] == "COMPLETE" {
            assert_eq!(outcome["message"], COMPLETION_MESSAGE);
            assert_eq!(outcome["report"]["items"], json!([]));
        }
    }

    let (status, report) = send_json(&app, Method::GET, &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["status"], "COMPLETE");

    let (status, bytes) = send(&app, Method::GET, &format!("/sessions/{id}/project"), None, Vec::new()).await;
    assert_eq!(status, StatusCode::OK);
    load_sb3(&bytes).unwrap();

    let (status, transcript) = send_json(&app, Method::GET, &format!("/sessions/{id}/transcript"), None).await;
    assert_eq!(status, StatusCode::OK);
    let kinds: Vec<&str> = transcript.as_array().unwrap().iter().map(|e| e["type"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"HINT_SHOWN"));
    assert!(kinds.contains(&"PATCH_APPLIED"));
    assert!(kinds.contains(&"CHAT_EXCHANGE"));
}

#[tokio::test]
async fn manual_revision_replaces_the_student_project() {
    let app = app();
    let (_, created) = create(&app, 0).await;
    let id = created["sessionId"].as_str().unwrap();
    let fixed = write_sb3(&seeded_pairs()[0].teacher, &[]).unwrap();
    let (status, out) = send(&app, Method::PUT, &format!("/sessions/{id}/project"), Some("application/octet-stream"), fixed).await;
    assert_eq!(status, StatusCode::OK);
    let outcome: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(outcome["status"], "COMPLETE");
    assert_eq!(outcome["revision"], 1);
}

#[tokio::test]
async fn stale_hints_are_rejected() {
    let app = app();
    let (_, created) = create(&app, 2).await;
    let id = created["sessionId"].as_str().unwrap();
    let (_, hint) = send_json(&app, Method::GET, &format!("/sessions/{id}/hint"), None).await;
    let body = Some(json!({"hintId": hint["hintId"]}));
    let (status, _) = send_json(&app, Method::POST, &format!("/sessions/{id}/apply"), body.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = send_json(&app, Method::POST, &format!("/sessions/{id}/apply"), body).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "STALE_HINT");
}

#[tokio::test]
async fn errors_carry_codes() {
    let app = app();
    let (status, err) = send_json(&app, Method::GET, "/sessions/deadbeef/hint", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "SESSION_NOT_FOUND");

    let (_, created) = create(&app, 1).await;
    let id = created["sessionId"].as_str().unwrap();
    let (status, err) =
        send_json(&app, Method::POST, &format!("/sessions/{id}/chat"), Some(json!({"question": "   "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "EMPTY_QUESTION");

    let (status, err) = send(
        &app,
        Method::PUT,
        &format!("/sessions/{id}/project"),
        Some("application/octet-stream"),
        b"not a project".to_vec(),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_slice::<Value>(&err).unwrap()["error"], "LOAD_ERROR");

    let t = write_sb3(&seeded_pairs()[0].teacher, &[]).unwrap();
    let (status, _) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(&format!("multipart/form-data; boundary={BOUNDARY}")),
        multipart(&[("teacher", &t)]),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
