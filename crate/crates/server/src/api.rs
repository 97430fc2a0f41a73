//! Routes, payloads and the blinding audit.

use std::sync::Arc;

use axum::body::Body;
use axum::extract::{FromRequestParts, Path, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use oculobench_core::dialogue::Turn;
use oculobench_core::endpoint::{image_part, mime_for, ChatMessage, DecodingParams};
use oculobench_core::inference::OPEN_SYSTEM;
use oculobench_core::study::{audit_blinding, check_entry, RubricScoreEntry, StudyError};
use oculobench_core::ExamLabels;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{ChatLogEntry, ChatRole};
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("model endpoint failed: {message}")]
    Upstream { message: String, retryable: bool },
    #[error("{0}")]
    Internal(String),
    #[error("response withheld by the blinding audit")]
    Blinding,
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, bool) {
        match self {
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", false),
            ApiError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden", false),
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", false),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request", false),
            ApiError::Unprocessable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_scores", false),
            ApiError::Upstream { retryable: true, .. } => (StatusCode::SERVICE_UNAVAILABLE, "upstream", true),
            ApiError::Upstream { retryable: false, .. } => (StatusCode::BAD_GATEWAY, "upstream", false),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", false),
            ApiError::Blinding => (StatusCode::INTERNAL_SERVER_ERROR, "blinding_audit", false),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, retryable) = self.parts();
        (status, Json(json!({ "error": code, "message": self.to_string(), "retryable": retryable }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::ScoreOutOfRange { .. } => ApiError::Unprocessable(e.to_string()),
            StudyError::UnknownPacket(_) => ApiError::NotFound(e.to_string()),
            StudyError::RaterMismatch { .. } => ApiError::Forbidden(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketStatus {
    Pending,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueItem {
    pub packet_id: String,
    pub image_id: String,
    pub status: PacketStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub rater_id: String,
    pub total: usize,
    pub submitted: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub rater_id: String,
    /// Packets in presentation order.
    pub queue: Vec<QueueItem>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketView {
    pub packet_id: String,
    pub image_id: String,
    pub image_url: String,
    pub labels: ExamLabels,
    pub transcript: Vec<Turn>,
    pub rubric: String,
    pub status: PacketStatus,
    pub scores: Option<RubricScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSubmission {
    pub packet_id: String,
    /// Optional; must match the token's rater when present.
    #[serde(default)]
    pub rater_id: Option<String>,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequestBody {
    pub packet_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub packet_id: String,
    pub reply: String,
    pub transcript_len: usize,
}

/// The rater behind the request's bearer token.
struct Rater(String);

impl FromRequestParts<Arc<AppState>> for Rater {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Unauthorized)?;
        state.token_to_rater.get(token.trim()).map(|r| Rater(r.clone())).ok_or(ApiError::Unauthorized)
    }
}

fn same_rater(authed: &str, requested: &str) -> Result<(), ApiError> {
    if authed == requested {
        Ok(())
    } else {
        Err(ApiError::Forbidden(format!("token does not belong to rater `{requested}`")))
    }
}

fn queue<'a>(state: &'a AppState, rater: &str) -> Result<&'a [String], ApiError> {
    state.plan.public.queue(rater).ok_or_else(|| ApiError::NotFound(format!("unknown rater `{rater}`")))
}

async fn progress_of(state: &AppState, rater: &str) -> Result<(Vec<QueueItem>, Progress), ApiError> {
    let q = queue(state, rater)?;
    let scores = state.scores.lock().await;
    let items: Vec<QueueItem> = q
        .iter()
        .map(|pk| QueueItem {
            packet_id: pk.clone(),
            image_id: state.packets[pk].image_id.clone(),
            status: if scores.get(rater, pk).is_some() { PacketStatus::Submitted } else { PacketStatus::Pending },
        })
        .collect();
    let submitted = items.iter().filter(|i| i.status == PacketStatus::Submitted).count();
    let progress =
        Progress { rater_id: rater.to_string(), total: items.len(), submitted, pending: items.len() - submitted };
    Ok((items, progress))
}

async fn get_assignment(
    State(state): State<Arc<AppState>>,
    Rater(authed): Rater,
    Path(rater): Path<String>,
) -> Result<Json<AssignmentView>, ApiError> {
    queue(&state, &rater)?;
    same_rater(&authed, &rater)?;
    let (queue, progress) = progress_of(&state, &rater).await?;
    Ok(Json(AssignmentView { rater_id: rater, queue, progress }))
}

async fn get_progress(
    State(state): State<Arc<AppState>>,
    Rater(authed): Rater,
    Path(rater): Path<String>,
) -> Result<Json<Progress>, ApiError> {
    queue(&state, &rater)?;
    same_rater(&authed, &rater)?;
    Ok(Json(progress_of(&state, &rater).await?.1))
}

fn assigned_packet(state: &AppState, rater: &str, packet_id: &str) -> Result<(), ApiError> {
    if !state.plan.public.knows_packet(packet_id) {
        return Err(ApiError::NotFound(format!("unknown packet `{packet_id}`")));
    }
    if !state.plan.public.is_assigned(rater, packet_id) {
        return Err(ApiError::Forbidden(format!("packet `{packet_id}` is not assigned to `{rater}`")));
    }
    Ok(())
}

async fn get_packet(
    State(state): State<Arc<AppState>>,
    Rater(rater): Rater,
    Path(packet_id): Path<String>,
) -> Result<Json<PacketView>, ApiError> {
    assigned_packet(&state, &rater, &packet_id)?;
    let p = &state.packets[&packet_id];
    let scores = state.scores.lock().await.get(&rater, &packet_id).cloned();
    Ok(Json(PacketView {
        packet_id: p.packet_id.clone(),
        image_id: p.image_id.clone(),
        image_url: format!("/api/images/{}", p.image_id),
        labels: p.labels,
        transcript: p.transcript.clone(),
        rubric: p.rubric.clone(),
        status: if scores.is_some() { PacketStatus::Submitted } else { PacketStatus::Pending },
        scores,
    }))
}

async fn post_scores(
    State(state): State<Arc<AppState>>,
    Rater(rater): Rater,
    Json(body): Json<ScoreSubmission>,
) -> Result<Json<RubricScoreEntry>, ApiError> {
    if let Some(r) = &body.rater_id {
        same_rater(&rater, r)?;
    }
    let entry = RubricScoreEntry {
        packet_id: body.packet_id,
        rater_id: rater,
        q1: body.q1,
        q2: body.q2,
        q3: body.q3,
        q4: body.q4,
        timestamp: Utc::now(),
    };
    check_entry(&state.plan.public, &entry)?;
    let stored = state.scores.lock().await.submit(entry).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(stored))
}

async fn get_chat(
    State(state): State<Arc<AppState>>,
    Rater(rater): Rater,
    Path(packet_id): Path<String>,
) -> Result<Json<Vec<ChatLogEntry>>, ApiError> {
    assigned_packet(&state, &rater, &packet_id)?;
    Ok(Json(state.chat.lock().await.thread(&rater, &packet_id).to_vec()))
}

async fn post_chat(
    State(state): State<Arc<AppState>>,
    Rater(rater): Rater,
    Json(body): Json<ChatRequestBody>,
) -> Result<Json<ChatReply>, ApiError> {
    if body.message.trim().is_empty() {
        return Err(ApiError::BadRequest("message is empty".into()));
    }
    assigned_packet(&state, &rater, &body.packet_id)?;
    let sealed = state.plan.packet(&body.packet_id).expect("assigned packets are sealed");
    let endpoint = state.endpoints.get(&sealed.model_id).expect("checked at startup");
    let image_path = state
        .image_path(&sealed.case_id)
        .ok_or_else(|| ApiError::Internal(format!("case `{}` missing from manifest", sealed.case_id)))?;
    let image = image_part(&image_path).map_err(|e| ApiError::Internal(format!("image for `{}`: {e}", sealed.case_id)))?;

    let session = state.session_lock(&rater, &body.packet_id);
    let _guard = session.lock().await;
    let history = state.chat.lock().await.thread(&rater, &body.packet_id).to_vec();
    let mut messages = vec![ChatMessage::system(OPEN_SYSTEM)];
    let mut first_user = true;
    for e in history.iter().map(|e| (e.role, e.text.clone())).chain(std::iter::once((ChatRole::User, body.message.clone()))) {
        messages.push(match e {
            (ChatRole::User, text) if first_user => {
                first_user = false;
                ChatMessage::user_with_image(image.clone(), text)
            }
            (ChatRole::User, text) => ChatMessage::user(text),
            (ChatRole::Assistant, text) => ChatMessage::assistant(text),
        });
    }
    let reply = endpoint.complete(&messages, &DecodingParams::OPEN).await.map_err(|e| ApiError::Upstream {
        message: state.redactor.redact(&e.to_string()),
        retryable: e.is_retryable(),
    })?;
    let reply = state.redactor.redact(&reply);
    let mut log = state.chat.lock().await;
    log.append(&rater, &body.packet_id, &[(ChatRole::User, body.message), (ChatRole::Assistant, reply.clone())])
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let transcript_len = log.thread(&rater, &body.packet_id).len();
    Ok(Json(ChatReply { packet_id: body.packet_id, reply, transcript_len }))
}

async fn get_image(
    State(state): State<Arc<AppState>>,
    Rater(rater): Rater,
    Path(image_id): Path<String>,
) -> Result<Response, ApiError> {
    let visible = state.plan.public.rater_cases(&rater).iter().any(|c| c == &image_id);
    if !visible {
        return Err(ApiError::NotFound(format!("no image `{image_id}` for `{rater}`")));
    }
    let path = state.image_path(&image_id).ok_or_else(|| ApiError::NotFound(format!("no image `{image_id}`")))?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::Internal(format!("image `{image_id}`: {e}")))?;
    Ok(([(CONTENT_TYPE, mime_for(&path))], bytes).into_response())
}

/// Replaces any non-image response that mentions a model id with a 500.
async fn blinding_audit(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let resp = next.run(req).await;
    let is_image = resp
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("image/"));
    if is_image {
        return resp;
    }
    let (parts, body) = resp.into_parts();
    let bytes = match axum::body::to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::Internal(format!("buffering response: {e}")).into_response(),
    };
    if let Some(model) = audit_blinding(&String::from_utf8_lossy(&bytes), state.plan.models()) {
        tracing::error!(len = model.len(), "blinding audit withheld a response");
        return ApiError::Blinding.into_response();
    }
    Response::from_parts(parts, Body::from(bytes))
}

pub(crate) fn routes(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/assignments/{rater}", get(get_assignment))
        .route("/api/progress/{rater}", get(get_progress))
        .route("/api/packets/{id}", get(get_packet))
        .route("/api/scores", post(post_scores))
        .route("/api/chat", post(post_chat))
        .route("/api/chat/{packet_id}", get(get_chat))
        .route("/api/images/{image_id}", get(get_image))
        .layer(middleware::from_fn_with_state(Arc::clone(&state), blinding_audit))
        .with_state(state)
}
