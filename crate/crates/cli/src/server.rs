//! JSON API for the annotation interface.
//!
//! `GET  /api/tasks/next?annotator=ID` next unscored task, or 204 when done
//! `POST /api/scores`                  `{task_id, annotator_id, score}`, 201 on success
//! `GET  /api/progress`                per-annotator counts
//!
//! Task payloads never carry the system or segment id.

use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use steval::campaign::{AnnotatorProgress, Campaign, SubmitError};
use steval::da::{AnnotationTask, ANNOTATOR_INSTRUCTIONS, SCORE_MAX, SCORE_MIN};

type Shared = Arc<RwLock<Campaign>>;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskView {
    pub task_id: String,
    pub annotator_id: String,
    pub source_text: String,
    pub hyp_text: String,
    pub prev_hyp_text: Option<String>,
    pub next_hyp_text: Option<String>,
    pub presentation_index: usize,
    pub score_min: f64,
    pub score_max: f64,
    pub instructions: String,
    pub progress: AnnotatorProgress,
}

impl TaskView {
    fn new(t: &AnnotationTask, progress: AnnotatorProgress) -> Self {
        TaskView {
            task_id: t.task_id.clone(),
            annotator_id: t.annotator_id.clone(),
            source_text: t.source_text.clone(),
            hyp_text: t.hyp_text.clone(),
            prev_hyp_text: t.prev_hyp_text.clone(),
            next_hyp_text: t.next_hyp_text.clone(),
            presentation_index: t.presentation_index,
            score_min: SCORE_MIN,
            score_max: SCORE_MAX,
            instructions: ANNOTATOR_INSTRUCTIONS.to_owned(),
            progress,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub score: f64,
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    (status, Json(serde_json::json!({ "error": msg.to_string() }))).into_response()
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn next_task(State(state): State<Shared>, query: Result<Query<NextQuery>, QueryRejection>) -> Response {
    let Ok(Query(q)) = query else {
        return error(StatusCode::BAD_REQUEST, "missing ?annotator=ID");
    };
    let c = state.read().expect("campaign lock poisoned");
    if !c.is_annotator(&q.annotator) {
        return error(StatusCode::NOT_FOUND, format!("unknown annotator {}", q.annotator));
    }
    let progress = c
        .progress()
        .annotators
        .remove(&q.annotator)
        .unwrap_or_default();
    match c.next_task(&q.annotator) {
        Some(t) => Json(TaskView::new(t, progress)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit_score(State(state): State<Shared>, body: Result<Json<ScoreSubmission>, JsonRejection>) -> Response {
    let sub = match body {
        Ok(Json(s)) => s,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    let task_id = sub.task_id.clone();
    // The append fsyncs, so keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || {
        let mut c = state.write().expect("campaign lock poisoned");
        c.submit(&sub.task_id, &sub.annotator_id, sub.score, now_ms())
            .cloned()
    })
    .await;
    match result {
        Ok(Ok(record)) => (
            StatusCode::CREATED,
            Json(serde_json::json!({ "task_id": task_id, "score": record.raw_score })),
        )
            .into_response(),
        Ok(Err(e @ SubmitError::Duplicate(_))) => error(StatusCode::CONFLICT, e),
        Ok(Err(e @ SubmitError::Storage(_))) => {
            log::error!("{e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, e)
        }
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn progress(State(state): State<Shared>) -> Response {
    Json(state.read().expect("campaign lock poisoned").progress()).into_response()
}

pub fn router(campaign: Campaign) -> Router {
    let state: Shared = Arc::new(RwLock::new(campaign));
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/scores", post(submit_score))
        .route("/api/progress", get(progress))
        .with_state(state)
}

pub async fn serve(campaign: Campaign, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving campaign {} on {}", campaign.dir().display(), listener.local_addr()?);
    axum::serve(listener, router(campaign))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
