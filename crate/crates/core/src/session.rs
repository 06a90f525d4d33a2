//! Expert-graded adaptive test sessions.
//!
//! A session alternates question selection, a binary grade supplied from
//! outside (a human expert judging the examinee's answer), and re-estimation,
//! until its [`StoppingRule`] fires. Every step is recorded as a
//! [`SessionEvent`], and replaying those events reconstructs the session
//! exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{estimate_ability, AbilityEstimate, GradedResponse};
use crate::irt::QuestionId;
use crate::pool::CalibratedPool;
use crate::selector::{select_next, CandidateSet, SelectError, SelectionPolicy};

/// Label used for sessions that run over the whole pool.
pub const OVERALL_CONCEPT: &str = "overall";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("unknown pool {0:?}")]
    UnknownPool(String),
    #[error("no questions in pool for concept {0:?}")]
    EmptyConceptPool(Option<String>),
    #[error("session has stopped ({0})")]
    SessionStopped(StopReason),
    #[error("wrong state: expected a grade for step {expected}, got step {got}")]
    WrongState { expected: usize, got: usize },
    #[error("session {0} has not finished")]
    SessionNotFinished(String),
    #[error("sessions belong to different pools")]
    PoolMismatch,
    #[error("no sessions to report on")]
    NoSessions,
    #[error("invalid stopping rule: {0}")]
    InvalidRule(String),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

/// When a session stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingRule {
    pub max_length: usize,
    /// Stop once the standard error falls to this value...
    pub se_threshold: f64,
    /// ...but never before this many questions.
    pub min_length: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_length: 20,
            se_threshold: 0.35,
            min_length: 5,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.max_length == 0 {
            return Err(SessionError::InvalidRule("max_length must be at least 1".into()));
        }
        if self.min_length > self.max_length {
            return Err(SessionError::InvalidRule(format!(
                "min_length {} exceeds max_length {}",
                self.min_length, self.max_length
            )));
        }
        if self.se_threshold.is_nan() || self.se_threshold < 0.0 {
            return Err(SessionError::InvalidRule("se_threshold must be non-negative".into()));
        }
        Ok(())
    }

    fn check(&self, step: usize, se: f64) -> Option<StopReason> {
        if step >= self.max_length {
            Some(StopReason::MaxLength)
        } else if step >= self.min_length && se <= self.se_threshold {
            Some(StopReason::Precision)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxLength,
    Precision,
    PoolExhausted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxLength => "max length reached",
            StopReason::Precision => "precision reached",
            StopReason::PoolExhausted => "pool exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingGrade { question_id: QuestionId },
    /// Transient: a grade is being applied.
    Active,
    Stopped { reason: StopReason },
}

/// Read-only set of named pools.
#[derive(Debug, Clone, Default)]
pub struct PoolRegistry {
    pools: BTreeMap<String, Arc<CalibratedPool>>,
}

impl PoolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, pool: CalibratedPool) {
        self.pools.insert(name.into(), Arc::new(pool));
    }

    pub fn get(&self, name: &str) -> Result<&Arc<CalibratedPool>, SessionError> {
        self.pools
            .get(name)
            .ok_or_else(|| SessionError::UnknownPool(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<CalibratedPool>)> {
        self.pools.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// The result of applying one grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GradeOutcome {
    Next {
        question_id: QuestionId,
        estimate: AbilityEstimate,
    },
    Finished {
        reason: StopReason,
        estimate: AbilityEstimate,
        report: DiagnosticReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSession {
    pub session_id: String,
    pub pool_ref: String,
    pub concept_filter: Option<String>,
    pub policy: SelectionPolicy,
    pub rule: StoppingRule,
    pub responses: Vec<GradedResponse>,
    pub trajectory: Vec<AbilityEstimate>,
    pub status: SessionStatus,
}

impl TestSession {
    /// Opens a session on `pool` and selects the first question at θ̂ = 0.
    pub fn start(
        session_id: impl Into<String>,
        pool_ref: impl Into<String>,
        pool: &CalibratedPool,
        concept_filter: Option<String>,
        policy: SelectionPolicy,
        rule: StoppingRule,
    ) -> Result<(Self, QuestionId), SessionError> {
        rule.validate()?;
        let administered = BTreeSet::new();
        let candidates = CandidateSet::new(pool, &administered, concept_filter.as_deref());
        let first = select_next(&candidates, 0.0, &policy, 1)
            .map_err(|SelectError::PoolExhausted| SessionError::EmptyConceptPool(concept_filter.clone()))?;
        let session = Self {
            session_id: session_id.into(),
            pool_ref: pool_ref.into(),
            concept_filter,
            policy,
            rule,
            responses: Vec::new(),
            trajectory: Vec::new(),
            status: SessionStatus::AwaitingGrade {
                question_id: first.clone(),
            },
        };
        Ok((session, first))
    }

    /// Step number the next grade must carry (1-based).
    pub fn expected_step(&self) -> usize {
        self.responses.len() + 1
    }

    pub fn awaiting(&self) -> Option<&QuestionId> {
        match &self.status {
            SessionStatus::AwaitingGrade { question_id } => Some(question_id),
            _ => None,
        }
    }

    pub fn is_stopped(&self) -> bool {
        matches!(self.status, SessionStatus::Stopped { .. })
    }

    /// Latest estimate; before any grade this is θ̂ = 0 with infinite SE.
    pub fn current_estimate(&self) -> AbilityEstimate {
        self.trajectory.last().copied().unwrap_or(AbilityEstimate {
            theta_hat: 0.0,
            se: f64::INFINITY,
            step: 0,
            loglik: 0.0,
        })
    }

    pub fn administered(&self) -> BTreeSet<QuestionId> {
        self.responses.iter().map(|r| r.item.question_id.clone()).collect()
    }

    pub fn concept_label(&self) -> &str {
        self.concept_filter.as_deref().unwrap_or(OVERALL_CONCEPT)
    }

    /// Grades the awaited question.
    pub fn submit_grade(&mut self, pool: &CalibratedPool, correct: bool) -> Result<GradeOutcome, SessionError> {
        self.submit_grade_at(pool, self.expected_step(), correct)
    }

    /// Grades the awaited question, insisting it is step `step`.
    pub fn submit_grade_at(
        &mut self,
        pool: &CalibratedPool,
        step: usize,
        correct: bool,
    ) -> Result<GradeOutcome, SessionError> {
        let question_id = match &self.status {
            SessionStatus::Stopped { reason } => return Err(SessionError::SessionStopped(*reason)),
            SessionStatus::Active => {
                return Err(SessionError::WrongState {
                    expected: self.expected_step(),
                    got: step,
                })
            }
            SessionStatus::AwaitingGrade { question_id } => question_id.clone(),
        };
        if step != self.expected_step() {
            return Err(SessionError::WrongState {
                expected: self.expected_step(),
                got: step,
            });
        }
        let item = pool
            .get(&question_id)
            .cloned()
            .ok_or_else(|| SessionError::CorruptLog(format!("question {question_id} is not in the pool")))?;

        self.status = SessionStatus::Active;
        self.responses.push(GradedResponse {
            item,
            correct,
            step_index: step,
        });
        let estimate = estimate_ability(&self.responses).expect("at least one response");
        self.trajectory.push(estimate);

        let stop = self.rule.check(step, estimate.se);
        let next = match stop {
            Some(_) => None,
            None => {
                let administered = self.administered();
                let candidates = CandidateSet::new(pool, &administered, self.concept_filter.as_deref());
                select_next(&candidates, estimate.theta_hat, &self.policy, (step + 1) as u64).ok()
            }
        };
        match next {
            Some(question_id) => {
                self.status = SessionStatus::AwaitingGrade {
                    question_id: question_id.clone(),
                };
                Ok(GradeOutcome::Next { question_id, estimate })
            }
            None => {
                let reason = stop.unwrap_or(StopReason::PoolExhausted);
                self.status = SessionStatus::Stopped { reason };
                let report = build_report(&[self], pool)?;
                Ok(GradeOutcome::Finished {
                    reason,
                    estimate,
                    report,
                })
            }
        }
    }

    /// The session as an append-only event sequence.
    pub fn events(&self) -> Vec<SessionEvent> {
        let first = self
            .responses
            .first()
            .map(|r| r.item.question_id.clone())
            .or_else(|| self.awaiting().cloned());
        let mut out = vec![SessionEvent::Start {
            session_id: self.session_id.clone(),
            pool_ref: self.pool_ref.clone(),
            concept_filter: self.concept_filter.clone(),
            policy: self.policy,
            rule: self.rule,
            first_question: first,
        }];
        out.extend(
            self.responses
                .iter()
                .zip(&self.trajectory)
                .map(|(r, e)| self.grade_event(r, e)),
        );
        out
    }

    /// Event record for one graded step.
    pub fn grade_event(&self, response: &GradedResponse, estimate: &AbilityEstimate) -> SessionEvent {
        SessionEvent::Grade {
            session_id: self.session_id.clone(),
            step: response.step_index,
            question_id: response.item.question_id.clone(),
            correct: response.correct,
            theta_hat: estimate.theta_hat,
            se: estimate.se,
        }
    }
}

/// Starts a session on a registered pool.
pub fn start_session(
    registry: &PoolRegistry,
    session_id: impl Into<String>,
    pool_ref: &str,
    concept_filter: Option<String>,
    policy: SelectionPolicy,
    rule: StoppingRule,
) -> Result<(TestSession, QuestionId), SessionError> {
    let pool = registry.get(pool_ref)?;
    TestSession::start(session_id, pool_ref, pool, concept_filter, policy, rule)
}

/// Grades a session whose pool lives in `registry`.
pub fn submit_grade(
    registry: &PoolRegistry,
    session: &mut TestSession,
    correct: bool,
) -> Result<GradeOutcome, SessionError> {
    let pool = Arc::clone(registry.get(&session.pool_ref)?);
    session.submit_grade(&pool, correct)
}

/// One line of a session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Start {
        session_id: String,
        pool_ref: String,
        #[serde(default)]
        concept_filter: Option<String>,
        policy: SelectionPolicy,
        rule: StoppingRule,
        #[serde(default)]
        first_question: Option<QuestionId>,
    },
    Grade {
        session_id: String,
        step: usize,
        question_id: QuestionId,
        correct: bool,
        theta_hat: f64,
        #[serde(with = "crate::serde_util::f64_or_inf")]
        se: f64,
    },
}

/// Rebuilds a session from its event log, re-running selection and
/// estimation and checking every recorded value against the recomputation.
pub fn replay_session(registry: &PoolRegistry, events: &[SessionEvent]) -> Result<TestSession, SessionError> {
    let corrupt = |msg: String| SessionError::CorruptLog(msg);
    let (first, rest) = events
        .split_first()
        .ok_or_else(|| corrupt("log is empty".into()))?;
    let SessionEvent::Start {
        session_id,
        pool_ref,
        concept_filter,
        policy,
        rule,
        first_question,
    } = first
    else {
        return Err(corrupt("log does not begin with a start record".into()));
    };
    let pool = registry.get(pool_ref)?;
    let (mut session, q1) =
        TestSession::start(session_id.clone(), pool_ref.clone(), pool, concept_filter.clone(), *policy, *rule)?;
    if first_question.as_ref().is_some_and(|q| *q != q1) {
        return Err(corrupt(format!("first question {first_question:?} does not match selection {q1}")));
    }

    let mut seen = BTreeSet::new();
    for ev in rest {
        let SessionEvent::Grade {
            session_id: sid,
            step,
            question_id,
            correct,
            theta_hat,
            se,
        } = ev
        else {
            return Err(corrupt("second start record".into()));
        };
        if sid != session_id {
            return Err(corrupt(format!("record for session {sid} inside log of {session_id}")));
        }
        if !seen.insert(question_id.clone()) {
            return Err(corrupt(format!("question {question_id} administered twice")));
        }
        if *step != session.expected_step() {
            return Err(corrupt(format!("step {step} out of order, expected {}", session.expected_step())));
        }
        match session.awaiting() {
            Some(q) if q == question_id => {}
            Some(q) => return Err(corrupt(format!("step {step} graded {question_id} but {q} was selected"))),
            None => return Err(corrupt(format!("grade at step {step} after the session stopped"))),
        }
        session.submit_grade_at(pool, *step, *correct)?;
        let est = session.current_estimate();
        let same_se = est.se.to_bits() == se.to_bits() || (est.se.is_infinite() && se.is_infinite());
        if est.theta_hat.to_bits() != theta_hat.to_bits() || !same_se {
            return Err(corrupt(format!("step {step} estimate diverges from the recorded value")));
        }
    }
    Ok(session)
}

/// One concept row of a diagnostic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub concept: String,
    pub theta_hat: f64,
    /// Min-max image of θ̂ against the human population, in `[0, 1]`.
    pub normalized_theta: f64,
    #[serde(with = "crate::serde_util::f64_or_inf")]
    pub se: f64,
    pub items_used: usize,
    /// Ability of the top-20% human (80th percentile), raw and normalized.
    pub top20_theta: f64,
    pub top20_normalized: f64,
    /// Ability of the top-50% human (median), raw and normalized.
    pub top50_theta: f64,
    pub top50_normalized: f64,
}

impl ConceptEntry {
    pub fn surpasses_high(&self) -> bool {
        self.theta_hat > self.top20_theta
    }

    pub fn surpasses_mid(&self) -> bool {
        self.theta_hat > self.top50_theta
    }
}

/// Per-concept normalized abilities set against human reference points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub pool_ref: String,
    pub entries: Vec<ConceptEntry>,
    pub average_normalized: f64,
    pub average_top20: f64,
    pub average_top50: f64,
    /// Examinee placed among the high- and mid-ability human groups, best first.
    pub rank: String,
}

impl DiagnosticReport {
    /// Plain-text table: one row per concept, an average row and a rank line.
    /// `*` marks rows above the top-20% human, `_` rows above the median.
    pub fn render(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.concept.len())
            .chain(["Average".len(), "concept".len()])
            .max()
            .unwrap_or(8);
        let mut s = format!(
            "{:<width$}  {:>8}  {:>7}  {:>6}  {:>5}  {:>7}  {:>7}\n",
            "concept", "examinee", "theta", "se", "items", "top20%", "top50%"
        );
        for e in &self.entries {
            let mark = match (e.surpasses_high(), e.surpasses_mid()) {
                (true, _) => "*",
                (false, true) => "_",
                _ => " ",
            };
            s.push_str(&format!(
                "{:<width$}  {:>7.2}{}  {:>7.3}  {:>6.3}  {:>5}  {:>7.2}  {:>7.2}\n",
                e.concept,
                e.normalized_theta,
                mark,
                e.theta_hat,
                e.se,
                e.items_used,
                e.top20_normalized,
                e.top50_normalized
            ));
        }
        s.push_str(&format!(
            "{:<width$}  {:>7.2}   {:>7}  {:>6}  {:>5}  {:>7.2}  {:>7.2}\n",
            "Average", self.average_normalized, "", "", "", self.average_top20, self.average_top50
        ));
        s.push_str(&format!("Rank: {}\n", self.rank));
        s
    }
}

/// Combines finished sessions (typically one per concept) over one pool.
pub fn build_report(sessions: &[&TestSession], pool: &CalibratedPool) -> Result<DiagnosticReport, SessionError> {
    let first = sessions.first().ok_or(SessionError::NoSessions)?;
    if sessions.iter().any(|s| s.pool_ref != first.pool_ref) {
        return Err(SessionError::PoolMismatch);
    }
    if let Some(s) = sessions.iter().find(|s| !s.is_stopped()) {
        return Err(SessionError::SessionNotFinished(s.session_id.clone()));
    }
    let human = &pool.human_abilities;
    let entries: Vec<ConceptEntry> = sessions
        .iter()
        .map(|s| {
            let est = s.current_estimate();
            let reference = pool.reference_abilities(s.concept_filter.as_deref());
            let top20 = reference.quantile(0.8);
            let top50 = reference.quantile(0.5);
            ConceptEntry {
                concept: s.concept_label().to_owned(),
                theta_hat: est.theta_hat,
                normalized_theta: human.normalize(est.theta_hat),
                se: est.se,
                items_used: s.responses.len(),
                top20_theta: top20,
                top20_normalized: human.normalize(top20),
                top50_theta: top50,
                top50_normalized: human.normalize(top50),
            }
        })
        .collect();
    let n = entries.len() as f64;
    let average_normalized = entries.iter().map(|e| e.normalized_theta).sum::<f64>() / n;
    let average_top20 = entries.iter().map(|e| e.top20_normalized).sum::<f64>() / n;
    let average_top50 = entries.iter().map(|e| e.top50_normalized).sum::<f64>() / n;
    let rank = rank_line(average_normalized, average_top20, average_top50);
    Ok(DiagnosticReport {
        pool_ref: first.pool_ref.clone(),
        entries,
        average_normalized,
        average_top20,
        average_top50,
        rank,
    })
}

fn rank_line(examinee: f64, high: f64, mid: f64) -> String {
    let mut rows = [("Examinee", examinee), ("High-Ability", high), ("Mid-Ability", mid)];
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut s = rows[0].0.to_owned();
    for w in rows.windows(2) {
        let sep = if (w[0].1 - w[1].1).abs() < 0.005 { " ≈ " } else { " > " };
        s.push_str(sep);
        s.push_str(w[1].0);
    }
    s
}
