use std::sync::Arc;

use adaptest_core::analysis::{compare_cohorts, AnalysisError, AnalysisOptions, AnalysisReport, Metric, Split};
use adaptest_core::bank::{load_bank, BankError, Issue};
use adaptest_core::engine::{
    Answer, EngineError, Mode, PoolPolicy, QuestionView, Session, SessionConfig, SessionResult, Status, SubmitOutcome,
};
use adaptest_core::scoring::ScoringConfig;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::state::{AppState, SessionEntry};

pub type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> ApiError {
        ApiError { status, body: ErrorBody { error, message: message.into(), issues: Vec::new() } }
    }

    fn not_found(what: &str, id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    fn gone(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::GONE, "session_closed", message)
    }

    fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> ApiError {
        let message = e.to_string();
        match e {
            EngineError::Config(_) | EngineError::Scoring(_) | EngineError::Instantiation(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
            }
            EngineError::Bank(report) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    error: "invalid_config",
                    message: "bank does not fit the session configuration".into(),
                    issues: report.issues.iter().map(Issue::to_string).collect(),
                },
            },
            EngineError::NotActive(_) | EngineError::Expired => ApiError::gone(message),
            EngineError::MalformedAnswer(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_answer", message),
            EngineError::PoolExhausted { .. } | EngineError::Incomplete { .. } => {
                ApiError::new(StatusCode::CONFLICT, "session_conflict", message)
            }
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BankSummary {
    pub bank_id: String,
    pub num_levels: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub items: usize,
    pub items_per_level: Vec<usize>,
}

pub async fn create_bank(
    State(state): State<Shared>,
    body: Bytes,
) -> Result<(StatusCode, Json<BankSummary>), ApiError> {
    let bank = load_bank(&body).map_err(|e| match e {
        BankError::Parse(e) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_bank", e.to_string()),
        BankError::Invalid(report) => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody {
                error: "invalid_bank",
                message: format!("{} issue(s)", report.issues.len()),
                issues: report.issues.iter().map(Issue::to_string).collect(),
            },
        },
    })?;
    let summary = summarize(&bank);
    if !state.add_bank(bank) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "bank_exists",
            format!("bank `{}` is already loaded", summary.bank_id),
        ));
    }
    Ok((StatusCode::CREATED, Json(summary)))
}

fn summarize(bank: &adaptest_core::bank::ItemBank) -> BankSummary {
    BankSummary {
        bank_id: bank.bank_id.clone(),
        num_levels: bank.num_levels,
        title: bank.title.clone(),
        version: bank.version.clone(),
        items: bank.items.len(),
        items_per_level: bank.level_counts(),
    }
}

/// Bank metadata only; items carry their keys and stay on the server.
pub async fn get_bank(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<BankSummary>, ApiError> {
    let banks = state.banks.read().unwrap();
    let bank = banks.get(&id).ok_or_else(|| ApiError::not_found("bank", &id))?;
    Ok(Json(summarize(bank)))
}

pub const DEFAULT_QUESTIONS: usize = 8;
pub const DEFAULT_TIME_LIMIT_S: u64 = 15 * 60;
pub const DEFAULT_COHORT: &str = "default";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub bank_id: String,
    pub student_id: String,
    #[serde(default)]
    pub cohort_id: Option<String>,
    /// Defaults to the bank id.
    #[serde(default)]
    pub test_id: Option<String>,
    #[serde(default)]
    pub n_questions: Option<usize>,
    /// Defaults to the bank's level count.
    #[serde(default)]
    pub n_levels: Option<u32>,
    #[serde(default)]
    pub max_grade: Option<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub rescale_factor: Option<f64>,
    #[serde(default)]
    pub guess_correction: bool,
    #[serde(default)]
    pub time_limit_s: Option<u64>,
    #[serde(default)]
    pub feedback: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub pool_policy: PoolPolicy,
    /// Item ids for a fixed-order test; omitted for adaptive sessions.
    #[serde(default)]
    pub linear_order: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
pub struct StartResponse {
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline: Option<DateTime<Utc>>,
    pub question: QuestionView,
}

fn unprocessable(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
}

fn session_config(req: &StartRequest, bank_levels: u32, seed: u64) -> Result<SessionConfig, ApiError> {
    let n_questions = req.n_questions.unwrap_or(DEFAULT_QUESTIONS);
    if n_questions == 0 {
        return Err(unprocessable("n_questions must be at least 1"));
    }
    let max_grade = req.max_grade.unwrap_or(10.0);
    let mut scoring = ScoringConfig::uniform(n_questions, max_grade, req.guess_correction)
        .map_err(|e| unprocessable(e.to_string()))?;
    if let Some(w) = &req.weights {
        scoring.weights = w.clone();
    }
    if let Some(k) = req.rescale_factor {
        scoring.rescale_factor = k;
    }
    Ok(SessionConfig {
        n_questions,
        n_levels: req.n_levels.unwrap_or(bank_levels),
        time_limit_s: Some(req.time_limit_s.unwrap_or(DEFAULT_TIME_LIMIT_S)),
        scoring,
        rng_seed: seed,
        mode: match &req.linear_order {
            Some(order) => Mode::Linear(order.clone()),
            None => Mode::Adaptive,
        },
        feedback_enabled: req.feedback,
        pool_policy: req.pool_policy,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8], error: &'static str) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, error, e.to_string()))
}

pub async fn start_session(
    State(state): State<Shared>,
    body: Bytes,
) -> Result<(StatusCode, Json<StartResponse>), ApiError> {
    let req: StartRequest = parse_json(&body, "malformed_request")?;
    if req.student_id.trim().is_empty() {
        return Err(unprocessable("student_id must not be empty"));
    }
    let bank = state.banks.read().unwrap().get(&req.bank_id).cloned();
    let bank = bank.ok_or_else(|| ApiError::not_found("bank", &req.bank_id))?;
    let session_id = state.next_id();
    let seed = req.seed.unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0);
    let config = session_config(&req, bank.num_levels, seed)?;
    let now = state.clock.now();
    let session = Session::start(session_id.clone(), bank, config, now)?;
    let question = session.question(now)?;
    let response = StartResponse { session_id: session_id.clone(), deadline: session.deadline(), question };
    let entry = SessionEntry {
        session,
        student_id: req.student_id,
        cohort_id: req.cohort_id.unwrap_or_else(|| DEFAULT_COHORT.to_string()),
        test_id: req.test_id.unwrap_or(req.bank_id),
        recorded: false,
    };
    state.sessions.write().unwrap().insert(session_id, Arc::new(std::sync::Mutex::new(entry)));
    tracing::info!(session = %response.session_id, "session started");
    Ok((StatusCode::CREATED, Json(response)))
}

/// Records the attempt if the session just ended, then turns a closed
/// session into 410.
fn settle(state: &AppState, entry: &mut SessionEntry) -> Result<(), ApiError> {
    let now = state.clock.now();
    entry.session.check_expiry(now);
    if entry.session.status() == Status::Active {
        return Ok(());
    }
    let result = entry.session.result()?;
    entry.record(&state.store, &result).map_err(|e| ApiError::internal(e.to_string()))?;
    Err(ApiError::gone(format!("session is {}", status_name(entry.session.status()))))
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Active => "active",
        Status::Finished => "finished",
        Status::Aborted => "aborted",
        Status::Expired => "expired",
    }
}

pub async fn get_question(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<QuestionView>, ApiError> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let mut e = entry.lock().unwrap();
    settle(&state, &mut e)?;
    Ok(Json(e.session.question(state.clock.now())?))
}

pub async fn submit_answer(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SubmitOutcome>, ApiError> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let mut e = entry.lock().unwrap();
    settle(&state, &mut e)?;
    let answer: Answer = parse_json(&body, "malformed_answer")?;
    let outcome = e.session.submit(answer, state.clock.now());
    let outcome = match outcome {
        Err(EngineError::Expired) => {
            settle(&state, &mut e)?;
            return Err(ApiError::gone("session is expired"));
        }
        other => other?,
    };
    if let Some(result) = &outcome.result {
        e.record(&state.store, result).map_err(|err| ApiError::internal(err.to_string()))?;
    }
    Ok(Json(outcome))
}

pub async fn abort_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<SessionResult>, ApiError> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let mut e = entry.lock().unwrap();
    settle(&state, &mut e)?;
    let result = e.session.abort(state.clock.now())?;
    e.record(&state.store, &result).map_err(|err| ApiError::internal(err.to_string()))?;
    Ok(Json(result))
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    /// Comma-separated cohort ids, in report order.
    pub cohorts: String,
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default)]
    pub paired: bool,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub pass_mark: Option<f64>,
    #[serde(default)]
    pub tz_offset_minutes: i32,
}

pub async fn report(
    State(state): State<Shared>,
    Query(q): Query<ReportQuery>,
) -> Result<Json<AnalysisReport>, ApiError> {
    let bad = |e: AnalysisError| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", e.to_string());
    let mut metric: Metric = q.metric.as_deref().unwrap_or("score").parse().map_err(bad)?;
    if let (Metric::Proportion { pass_mark }, Some(p)) = (&mut metric, q.pass_mark) {
        *pass_mark = p;
    }
    let split: Split = q.split.as_deref().unwrap_or("none").parse().map_err(bad)?;
    let all = state.cohorts();
    let mut datasets = Vec::new();
    for id in q.cohorts.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let d = all.iter().find(|d| d.cohort_id == id).ok_or_else(|| ApiError::not_found("cohort", id))?;
        datasets.push(d.clone());
    }
    let options =
        AnalysisOptions { alpha: q.alpha.unwrap_or(0.05), paired: q.paired, tz_offset_minutes: q.tz_offset_minutes };
    let report = compare_cohorts(&datasets, metric, &split, &options)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis_failed", e.to_string()))?;
    Ok(Json(report))
}
