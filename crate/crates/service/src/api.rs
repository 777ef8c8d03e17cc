//! JSON endpoints. Each handler maps to one engine operation; failures come
//! back as `{code, message, detail}` with a stable `code`.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tutor_core::analytics::{study_report, DEFAULT_ALPHA};
use tutor_core::lesson::{Lesson, SurveyStatement};
use tutor_core::session::{Direction, QuestionView};
use tutor_core::{Language, LessonPack, Phase, RenderState, Session, SessionError};

use crate::store::StoreError;
use crate::AppState;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let status = match &err {
            SessionError::WrongPhase { .. }
            | SessionError::NoPrevious
            | SessionError::AlreadyAnswered(_) => StatusCode::CONFLICT,
            SessionError::BadSelection(_)
            | SessionError::UnknownQuestion(_)
            | SessionError::UnknownStatement(_)
            | SessionError::LevelOutOfRange(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::ReportUnavailable(_) => StatusCode::FORBIDDEN,
            SessionError::InvalidPack(_)
            | SessionError::PackMismatch { .. }
            | SessionError::Score(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &err {
            SessionError::WrongPhase { actual } | SessionError::ReportUnavailable(actual) => {
                json!({ "phase": actual })
            }
            SessionError::InvalidPack(report) => json!(report.violations),
            _ => Value::Null,
        };
        ApiError::new(status, err.code(), err.to_string()).with_detail(detail)
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let status = match err {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, err.code(), err.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(err: JsonRejection) -> Self {
        ApiError::new(err.status(), "bad-request", err.body_text())
    }
}

fn unknown_pack(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown-pack",
        format!("no pack with id `{id}`"),
    )
}

fn join_error(err: tokio::task::JoinError) -> ApiError {
    ApiError::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "internal",
        err.to_string(),
    )
}

type ApiResult<T> = Result<T, ApiError>;

pub fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/packs", get(list_packs))
        .route("/packs/{id}", get(get_pack))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/survey", post(survey))
        .route("/sessions/{id}/report", get(report))
        .route("/stats", get(stats))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PackSummary {
    pub id: String,
    pub title: String,
    pub known_language: Language,
    pub target_language: Language,
    pub lesson_count: usize,
    pub question_count: usize,
    pub statement_count: usize,
}

impl PackSummary {
    fn of(pack: &LessonPack) -> Self {
        PackSummary {
            id: pack.id.clone(),
            title: pack.title.clone(),
            known_language: pack.known_language,
            target_language: pack.target_language,
            lesson_count: pack.lessons.len(),
            question_count: pack.pretest.len(),
            statement_count: pack.survey.len(),
        }
    }
}

/// A pack as clients see it: questions without their answer keys.
#[derive(Debug, Serialize)]
pub struct PackDetail<'a> {
    pub id: &'a str,
    pub title: &'a str,
    pub known_language: Language,
    pub target_language: Language,
    pub lessons: &'a [Lesson],
    pub questions: Vec<QuestionView>,
    pub survey: &'a [SurveyStatement],
}

async fn list_packs(State(app): State<Arc<AppState>>) -> Json<Vec<PackSummary>> {
    Json(app.packs.values().map(|p| PackSummary::of(p)).collect())
}

async fn get_pack(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let pack = app.packs.get(&id).ok_or_else(|| unknown_pack(&id))?;
    let detail = PackDetail {
        id: &pack.id,
        title: &pack.title,
        known_language: pack.known_language,
        target_language: pack.target_language,
        lessons: &pack.lessons,
        questions: pack
            .pretest
            .iter()
            .map(|q| QuestionView {
                id: q.id.clone(),
                prompt: q.prompt.clone(),
                kind: q.kind,
                choices: q.choices.clone(),
            })
            .collect(),
        survey: &pack.survey,
    };
    Ok(Json(detail).into_response())
}

/// Where a session stands, plus what to show.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub pack_id: String,
    pub participant: String,
    pub phase: Phase,
    pub lesson_cursor: usize,
    pub step_cursor: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_changed: Option<bool>,
    pub view: RenderState,
}

impl SessionState {
    fn of(session: &Session, pack: &LessonPack) -> Self {
        SessionState {
            session_id: session.id.clone(),
            pack_id: session.pack_id.clone(),
            participant: session.participant.clone(),
            phase: session.phase,
            lesson_cursor: session.lesson_cursor,
            step_cursor: session.step_cursor,
            phase_changed: None,
            view: session.render(pack),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub pack_id: String,
    pub participant: String,
    pub seed: Option<u64>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionState>)> {
    let Json(req) = body?;
    let pack = app
        .packs
        .get(&req.pack_id)
        .ok_or_else(|| unknown_pack(&req.pack_id))?
        .clone();
    let seed = req.seed.unwrap_or_else(rand_seed);
    let session = Session::create(&pack, &req.participant, seed)?;
    let state = SessionState::of(&session, &pack);
    let store = app.store.clone();
    tokio::task::spawn_blocking(move || store.persist(&session))
        .await
        .map_err(join_error)??;
    Ok((StatusCode::CREATED, Json(state)))
}

fn rand_seed() -> u64 {
    let bytes = *uuid::Uuid::new_v4().as_bytes();
    u64::from_le_bytes(bytes[..8].try_into().expect("eight bytes"))
}

fn pack_for(app: &AppState, session: &Session) -> ApiResult<Arc<LessonPack>> {
    app.packs.get(&session.pack_id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "unknown-pack",
            format!(
                "session `{}` uses pack `{}`, which is not loaded",
                session.id, session.pack_id
            ),
        )
    })
}

async fn load(app: &Arc<AppState>, id: String) -> ApiResult<(Session, Arc<LessonPack>)> {
    let store = app.store.clone();
    let session = tokio::task::spawn_blocking(move || store.restore(&id))
        .await
        .map_err(join_error)??;
    let pack = pack_for(app, &session)?;
    Ok((session, pack))
}

async fn get_state(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionState>> {
    let (session, pack) = load(&app, id).await?;
    Ok(Json(SessionState::of(&session, &pack)))
}

/// Applies `change` under the session's lock and persists on success.
async fn mutate(
    app: Arc<AppState>,
    id: String,
    change: impl FnOnce(&mut Session, &LessonPack) -> Result<Option<bool>, SessionError>
        + Send
        + 'static,
) -> ApiResult<Json<SessionState>> {
    let store = app.store.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        store.update(&id, |session| {
            let pack = pack_for(&app, session)?;
            let changed = change(session, &pack)?;
            let mut state = SessionState::of(session, &pack);
            state.phase_changed = changed;
            Ok::<_, ApiError>(state)
        })
    })
    .await
    .map_err(join_error)??;
    Ok(Json(outcome?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub direction: Direction,
}

async fn step(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<StepRequest>, JsonRejection>,
) -> ApiResult<Json<SessionState>> {
    let Json(req) = body?;
    mutate(app, id, move |s, pack| {
        s.advance(pack, req.direction).map(|_| None)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub question_id: String,
    pub selection: BTreeSet<usize>,
}

async fn answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> ApiResult<Json<SessionState>> {
    let Json(req) = body?;
    mutate(app, id, move |s, pack| {
        s.submit_answer(pack, &req.question_id, req.selection)
            .map(|ack| Some(ack.phase_changed))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRequest {
    pub statement_id: String,
    pub level: u8,
}

async fn survey(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SurveyRequest>, JsonRejection>,
) -> ApiResult<Json<SessionState>> {
    let Json(req) = body?;
    mutate(app, id, move |s, pack| {
        s.submit_survey(pack, &req.statement_id, req.level)
            .map(|ack| Some(ack.phase_changed))
    })
    .await
}

async fn report(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let (session, pack) = load(&app, id).await?;
    let report = session.report(&pack)?;
    Ok(Json(report).into_response())
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    pub pack_id: Option<String>,
    pub alpha: Option<f64>,
}

async fn stats(
    State(app): State<Arc<AppState>>,
    Query(q): Query<StatsQuery>,
) -> ApiResult<Response> {
    let pack = match &q.pack_id {
        Some(id) => app.packs.get(id).ok_or_else(|| unknown_pack(id))?.clone(),
        None if app.packs.len() == 1 => app.packs.values().next().expect("one pack").clone(),
        None => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "pack-required",
                "several packs are loaded; pass ?pack_id=",
            ))
        }
    };
    let alpha = q.alpha.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad-request",
            "alpha must be in (0, 1)",
        ));
    }
    let store = app.store.clone();
    let (sessions, errors) = tokio::task::spawn_blocking(move || store.load_all())
        .await
        .map_err(join_error)?;
    let report = study_report(&pack, &sessions, alpha).map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "stats-failed",
            e.to_string(),
        )
    })?;
    let skipped: Vec<String> = errors.iter().map(ToString::to_string).collect();
    Ok(Json(json!({ "report": report, "unreadable": skipped })).into_response())
}
