//! HTTP API for live, expert-graded sessions.
//!
//! Grades carry the step number they answer. Re-sending an already graded
//! step returns 409 with the stored result and changes nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use adaptest_core::calibration::{pool_statistics, PoolStatistics};
use adaptest_core::datastore::{read_event_log, DatastoreError, EventLogWriter};
use adaptest_core::irt::QuestionId;
use adaptest_core::pool::CalibratedPool;
use adaptest_core::selector::SelectionPolicy;
use adaptest_core::session::{
    build_report, replay_session, DiagnosticReport, GradeOutcome, PoolRegistry, SessionError, SessionStatus,
    StopReason, StoppingRule, TestSession,
};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterError, ExamineeAdapter};
use crate::config::ServiceConfig;

const ADAPTER_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub stored: Option<Box<GradeResult>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            stored: None,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", message)
    }

    fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id:?}"))
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stored: Option<&'a GradeResult>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
            stored: self.stored.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::UnknownPool(_) => (StatusCode::NOT_FOUND, "pool_not_found"),
            SessionError::EmptyConceptPool(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_concept_pool"),
            SessionError::InvalidRule(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_rule"),
            SessionError::SessionStopped(_) => (StatusCode::CONFLICT, "session_stopped"),
            SessionError::WrongState { .. } => (StatusCode::CONFLICT, "wrong_state"),
            SessionError::SessionNotFinished(_) => (StatusCode::CONFLICT, "session_not_finished"),
            SessionError::PoolMismatch | SessionError::NoSessions => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_report"),
            SessionError::CorruptLog(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<DatastoreError> for ApiError {
    fn from(e: DatastoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::invalid(e.body_text()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub id: QuestionId,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub pool: String,
    #[serde(default)]
    pub concept: Option<String>,
    #[serde(default)]
    pub policy: Option<SelectionPolicy>,
    #[serde(default)]
    pub rule: Option<StoppingRule>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    /// Step number the first grade must carry.
    pub step: usize,
    pub question: QuestionView,
    pub theta: f64,
    #[serde(with = "adaptest_core::serde_util::f64_or_inf")]
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeRequest {
    pub step: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextAction {
    Next { step: usize, question: QuestionView },
    Finished { reason: StopReason, report: DiagnosticReport },
}

/// Stored result of one accepted grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub session_id: String,
    pub step: usize,
    pub question_id: QuestionId,
    pub correct: bool,
    pub theta: f64,
    #[serde(with = "adaptest_core::serde_util::f64_or_inf")]
    pub se: f64,
    pub next: NextAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub question_id: QuestionId,
    pub correct: bool,
    pub theta: f64,
    #[serde(with = "adaptest_core::serde_util::f64_or_inf")]
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub pool: String,
    pub concept: Option<String>,
    pub policy: SelectionPolicy,
    pub rule: StoppingRule,
    pub status: SessionStatus,
    pub expected_step: usize,
    pub question: Option<QuestionView>,
    pub theta: f64,
    #[serde(with = "adaptest_core::serde_util::f64_or_inf")]
    pub se: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub name: String,
    pub questions: usize,
    pub human_examinees: usize,
    pub concepts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDetail {
    #[serde(flatten)]
    pub summary: PoolSummary,
    pub statistics: Option<PoolStatistics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRequest {
    pub session_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub session_id: String,
    pub step: usize,
    pub question_id: QuestionId,
    pub prompt: String,
    pub answer: String,
}

struct Entry {
    session: TestSession,
    results: Vec<GradeResult>,
    log: Option<EventLogWriter>,
}

/// Shared service state: read-only pools plus live sessions, each behind
/// its own lock.
pub struct AppState {
    registry: PoolRegistry,
    config: ServiceConfig,
    adapter: Option<ExamineeAdapter>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(registry: PoolRegistry, config: ServiceConfig) -> Self {
        let adapter = config
            .examinee_endpoint
            .as_ref()
            .map(|url| ExamineeAdapter::new(url.clone(), ADAPTER_TIMEOUT));
        Self {
            registry,
            config,
            adapter,
            sessions: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(1),
        }
    }

    pub fn registry(&self) -> &PoolRegistry {
        &self.registry
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Snapshot of a live session.
    pub fn session(&self, id: &str) -> Option<TestSession> {
        let entry = self.sessions.read().unwrap().get(id).cloned()?;
        let guard = entry.lock().unwrap();
        Some(guard.session.clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().unwrap().keys().cloned().collect()
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    fn pool(&self, name: &str) -> Result<Arc<CalibratedPool>, ApiError> {
        Ok(Arc::clone(self.registry.get(name)?))
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.config.event_log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Rebuilds every session found in the event-log directory.
    pub fn restore_sessions(&self) -> Result<usize, DatastoreError> {
        let Some(dir) = &self.config.event_log_dir else {
            return Ok(0);
        };
        std::fs::create_dir_all(dir)?;
        let mut restored = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            self.restore_one(&path)?;
            restored += 1;
        }
        Ok(restored)
    }

    fn restore_one(&self, path: &Path) -> Result<(), DatastoreError> {
        let log = read_event_log(path)?;
        let replayed = replay_session(&self.registry, &log.events)
            .map_err(|e| DatastoreError::Schema(format!("{}: {e}", path.display())))?;
        let pool = Arc::clone(self.registry.get(&replayed.pool_ref).expect("replay checked the pool"));
        // Grades are re-applied to recover the per-step results.
        let (mut session, _) = TestSession::start(
            replayed.session_id.clone(),
            replayed.pool_ref.clone(),
            &pool,
            replayed.concept_filter.clone(),
            replayed.policy,
            replayed.rule,
        )
        .map_err(|e| DatastoreError::Schema(e.to_string()))?;
        let mut results = Vec::with_capacity(replayed.responses.len());
        for r in &replayed.responses {
            let outcome = session
                .submit_grade_at(&pool, r.step_index, r.correct)
                .map_err(|e| DatastoreError::Schema(e.to_string()))?;
            results.push(grade_result(&session, &pool, outcome));
        }
        let log = Some(EventLogWriter::open(path)?);
        self.sessions.write().unwrap().insert(
            session.session_id.clone(),
            Arc::new(Mutex::new(Entry { session, results, log })),
        );
        Ok(())
    }

    fn next_id(&self) -> String {
        let sessions = self.sessions.read().unwrap();
        loop {
            let id = format!("s{:06}", self.counter.fetch_add(1, Ordering::Relaxed));
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn create_session(&self, req: CreateSession) -> Result<SessionCreated, ApiError> {
        let pool = self.pool(&req.pool)?;
        let id = match req.session_id {
            Some(id) => {
                let valid = !id.is_empty()
                    && id.len() <= 64
                    && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
                if !valid {
                    return Err(ApiError::invalid("session_id must be 1-64 characters of [A-Za-z0-9_-]"));
                }
                id
            }
            None => self.next_id(),
        };
        let policy = req.policy.unwrap_or(self.config.session_defaults.policy);
        let rule = req.rule.unwrap_or(self.config.session_defaults.rule);
        let (session, first) = TestSession::start(id.clone(), req.pool.clone(), &pool, req.concept, policy, rule)?;

        let mut sessions = self.sessions.write().unwrap();
        if sessions.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "session_exists", format!("session {id:?} exists")));
        }
        let log = match self.log_path(&id) {
            Some(path) => {
                let mut w = EventLogWriter::open(&path)?;
                w.append(&session.events()[0])?;
                Some(w)
            }
            None => None,
        };
        let created = SessionCreated {
            session_id: id.clone(),
            step: session.expected_step(),
            question: question_view(&pool, &first),
            theta: 0.0,
            se: f64::INFINITY,
        };
        sessions.insert(
            id,
            Arc::new(Mutex::new(Entry {
                session,
                results: Vec::new(),
                log,
            })),
        );
        Ok(created)
    }

    pub fn grade(&self, id: &str, req: GradeRequest) -> Result<GradeResult, ApiError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock().unwrap();
        if req.step >= 1 && req.step <= e.results.len() {
            let mut err = ApiError::new(
                StatusCode::CONFLICT,
                "duplicate_step",
                format!("step {} was already graded", req.step),
            );
            err.stored = Some(Box::new(e.results[req.step - 1].clone()));
            return Err(err);
        }
        let pool = self.pool(&e.session.pool_ref)?;
        let mut next = e.session.clone();
        let outcome = next.submit_grade_at(&pool, req.step, req.correct)?;
        if let Some(log) = e.log.as_mut() {
            let r = next.responses.last().expect("grade accepted");
            let est = next.trajectory.last().expect("grade accepted");
            log.append(&next.grade_event(r, est))?;
        }
        let result = grade_result(&next, &pool, outcome);
        e.session = next;
        e.results.push(result.clone());
        Ok(result)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ApiError> {
        let entry = self.entry(id)?;
        let e = entry.lock().unwrap();
        let s = &e.session;
        let pool = self.pool(&s.pool_ref)?;
        let est = s.current_estimate();
        Ok(SessionView {
            session_id: s.session_id.clone(),
            pool: s.pool_ref.clone(),
            concept: s.concept_filter.clone(),
            policy: s.policy,
            rule: s.rule,
            status: s.status.clone(),
            expected_step: s.expected_step(),
            question: s.awaiting().map(|q| question_view(&pool, q)),
            theta: est.theta_hat,
            se: est.se,
            trajectory: s
                .responses
                .iter()
                .zip(&s.trajectory)
                .map(|(r, t)| TrajectoryPoint {
                    step: t.step,
                    question_id: r.item.question_id.clone(),
                    correct: r.correct,
                    theta: t.theta_hat,
                    se: t.se,
                })
                .collect(),
        })
    }

    pub fn report(&self, ids: &[String]) -> Result<DiagnosticReport, ApiError> {
        let sessions: Vec<TestSession> = ids
            .iter()
            .map(|id| self.session(id).ok_or_else(|| ApiError::session_not_found(id)))
            .collect::<Result<_, _>>()?;
        let first = sessions.first().ok_or(SessionError::NoSessions)?;
        let pool = self.pool(&first.pool_ref)?;
        let refs: Vec<&TestSession> = sessions.iter().collect();
        Ok(build_report(&refs, &pool)?)
    }

    pub async fn ask(&self, id: &str) -> Result<AskResponse, ApiError> {
        let adapter = self.adapter.as_ref().ok_or_else(|| {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "no_examinee_endpoint",
                "no examinee endpoint is configured; enter the answer manually",
            )
        })?;
        let (step, qid, content) = {
            let entry = self.entry(id)?;
            let e = entry.lock().unwrap();
            let s = &e.session;
            let qid = match &s.status {
                SessionStatus::AwaitingGrade { question_id } => question_id.clone(),
                SessionStatus::Stopped { reason } => return Err(SessionError::SessionStopped(*reason).into()),
                SessionStatus::Active => {
                    return Err(ApiError::new(StatusCode::CONFLICT, "wrong_state", "session is busy"))
                }
            };
            let pool = self.pool(&s.pool_ref)?;
            let content = pool.content.get(&qid).cloned().ok_or_else(|| {
                ApiError::new(StatusCode::CONFLICT, "no_content", format!("question {qid} has no content"))
            })?;
            (s.expected_step(), qid, content)
        };
        let prompt = self.config.render_prompt(&content);
        let answer = adapter.ask(&prompt).await.map_err(|e| match e {
            AdapterError::EndpointUnreachable(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "endpoint_unreachable", e.to_string())
            }
            AdapterError::BadStatus(_) => ApiError::new(StatusCode::BAD_GATEWAY, "endpoint_error", e.to_string()),
        })?;
        Ok(AskResponse {
            session_id: id.to_owned(),
            step,
            question_id: qid,
            prompt,
            answer,
        })
    }

    pub fn pools(&self) -> Vec<PoolSummary> {
        self.registry.iter().map(|(name, pool)| summary(name, pool)).collect()
    }
}

fn summary(name: &str, pool: &CalibratedPool) -> PoolSummary {
    PoolSummary {
        name: name.to_owned(),
        questions: pool.len(),
        human_examinees: pool.human_abilities.len(),
        concepts: pool.concepts(),
    }
}

fn question_view(pool: &CalibratedPool, id: &QuestionId) -> QuestionView {
    QuestionView {
        id: id.clone(),
        content: pool.content.get(id).cloned(),
        concept: pool.get(id).and_then(|it| it.concept.clone()),
    }
}

fn grade_result(session: &TestSession, pool: &CalibratedPool, outcome: GradeOutcome) -> GradeResult {
    let r = session.responses.last().expect("a grade was applied");
    let (estimate, next) = match outcome {
        GradeOutcome::Next { question_id, estimate } => (
            estimate,
            NextAction::Next {
                step: session.expected_step(),
                question: question_view(pool, &question_id),
            },
        ),
        GradeOutcome::Finished {
            reason,
            estimate,
            report,
        } => (estimate, NextAction::Finished { reason, report }),
    };
    GradeResult {
        session_id: session.session_id.clone(),
        step: r.step_index,
        question_id: r.item.question_id.clone(),
        correct: r.correct,
        theta: estimate.theta_hat,
        se: estimate.se,
        next,
    }
}

type Shared = State<Arc<AppState>>;

async fn list_pools(State(st): Shared) -> Json<Vec<PoolSummary>> {
    Json(st.pools())
}

async fn get_pool(State(st): Shared, UrlPath(name): UrlPath<String>) -> Result<Json<PoolDetail>, ApiError> {
    let pool = st.pool(&name)?;
    Ok(Json(PoolDetail {
        summary: summary(&name, &pool),
        statistics: pool_statistics(&pool),
    }))
}

async fn create_session(
    State(st): Shared,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let created = st.create_session(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(st): Shared) -> Json<Vec<String>> {
    Json(st.session_ids())
}

async fn get_session(State(st): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    st.view(&id).map(Json)
}

async fn grade(
    State(st): Shared,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<GradeRequest>, JsonRejection>,
) -> Result<Json<GradeResult>, ApiError> {
    let req = body(payload)?;
    st.grade(&id, req).map(Json)
}

async fn session_report(
    State(st): Shared,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<DiagnosticReport>, ApiError> {
    st.report(&[id]).map(Json)
}

async fn multi_report(
    State(st): Shared,
    payload: Result<Json<ReportRequest>, JsonRejection>,
) -> Result<Json<DiagnosticReport>, ApiError> {
    let req = body(payload)?;
    st.report(&req.session_ids).map(Json)
}

async fn ask(State(st): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<AskResponse>, ApiError> {
    st.ask(&id).await.map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/pools", get(list_pools))
        .route("/pools/{name}", get(get_pool))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/grades", post(grade))
        .route("/sessions/{id}/report", get(session_report))
        .route("/sessions/{id}/ask", post(ask))
        .route("/reports", post(multi_report))
        .with_state(state)
}
