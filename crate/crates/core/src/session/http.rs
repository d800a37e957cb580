//! HTTP API over [`Tutor`]. Handlers run the synchronous core on the
//! blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{SessionError, Tutor};

pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match &self.0 {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Complete | SessionError::StaleHint(_) => StatusCode::CONFLICT,
            SessionError::EmptyQuestion | SessionError::Load { .. } => StatusCode::BAD_REQUEST,
            SessionError::Analyze { .. } | SessionError::Repair(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({"error": self.0.code(), "message": self.0.to_string()}));
        (self.status(), body).into_response()
    }
}

fn bad_request(message: impl Into<String>) -> Response {
    let body = Json(json!({"error": "BAD_REQUEST", "message": message.into()}));
    (StatusCode::BAD_REQUEST, body).into_response()
}

async fn blocking<T, F>(tutor: Arc<Tutor>, f: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce(&Tutor) -> Result<T, SessionError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&tutor)).await {
        Ok(r) => r.map_err(|e| ApiError(e).into_response()),
        Err(e) => Err(ApiError(SessionError::Storage(e.to_string())).into_response()),
    }
}

async fn create(State(tutor): State<Arc<Tutor>>, mut form: Multipart) -> Response {
    let mut teacher = None;
    let mut student = None;
    let mut description = None;
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return bad_request(e.to_string()),
        };
        let name = field.name().unwrap_or_default().to_string();
        let data = match field.bytes().await {
            Ok(d) => d,
            Err(e) => return bad_request(e.to_string()),
        };
        match name.as_str() {
            "teacher" => teacher = Some(data),
            "student" => student = Some(data),
            "description" => description = Some(String::from_utf8_lossy(&data).into_owned()),
            _ => {}
        }
    }
    let (Some(teacher), Some(student)) = (teacher, student) else {
        return bad_request("multipart fields `teacher` and `student` are required");
    };
    match blocking(tutor, move |t| t.create_session(&teacher, &student, description)).await {
        Ok(created) => (StatusCode::CREATED, Json(created)).into_response(),
        Err(r) => r,
    }
}

async fn hint(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>) -> Response {
    match blocking(tutor, move |t| t.next_hint(&id)).await {
        Ok(h) => Json(h).into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApplyBody {
    hint_id: String,
}

async fn apply(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>, Json(body): Json<ApplyBody>) -> Response {
    match blocking(tutor, move |t| t.apply_fix(&id, &body.hint_id)).await {
        Ok(o) => Json(o).into_response(),
        Err(r) => r,
    }
}

async fn put_project(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>, body: Bytes) -> Response {
    match blocking(tutor, move |t| t.submit_revision(&id, &body)).await {
        Ok(o) => Json(o).into_response(),
        Err(r) => r,
    }
}

async fn get_project(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>) -> Response {
    match blocking(tutor, move |t| t.project(&id)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/x.scratch.sb3")], bytes).into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct ChatBody {
    question: String,
}

async fn chat(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>, Json(body): Json<ChatBody>) -> Response {
    match blocking(tutor, move |t| t.chat(&id, &body.question)).await {
        Ok(reply) => Json(json!({"reply": reply})).into_response(),
        Err(r) => r,
    }
}

async fn report(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>) -> Response {
    match blocking(tutor, move |t| t.report(&id)).await {
        Ok(o) => Json(o).into_response(),
        Err(r) => r,
    }
}

async fn transcript(State(tutor): State<Arc<Tutor>>, Path(id): Path<String>) -> Response {
    match blocking(tutor, move |t| t.transcript(&id)).await {
        Ok(o) => Json(o).into_response(),
        Err(r) => r,
    }
}

pub fn router(tutor: Arc<Tutor>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/hint", get(hint))
        .route("/sessions/{id}/apply", post(apply))
        .route("/sessions/{id}/project", get(get_project).put(put_project))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/transcript", get(transcript))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(tutor)
}

/// Serve until Ctrl-C.
pub async fn serve(tutor: Arc<Tutor>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(tutor))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
