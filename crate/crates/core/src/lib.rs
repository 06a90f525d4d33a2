//! Adaptive testing engine built on the three-parameter logistic item
//! response model.
//!
//! * [`irt`]: response probability, derivative, information, log-likelihood.
//! * [`calibration`]: joint maximum-likelihood pool calibration from logs.
//! * [`estimator`]: ability MLE and standard error.
//! * [`selector`]: Fisher-information and random question selection.
//! * [`session`]: the graded adaptive-test state machine and reports.
//! * [`simulator`]: Monte-Carlo experiments on synthetic examinees.
//! * [`datastore`]: log ingestion, pool files and session event logs.

pub mod calibration;
pub mod datastore;
pub mod estimator;
pub mod irt;
pub mod pool;
pub mod selector;
pub mod session;
pub mod simulator;
pub mod serde_util;

pub use calibration::{calibrate, CalibrationConfig, CalibrationError, ResponseLog};
pub use datastore::{ingest_logs, load_pool, save_pool, DatastoreError, LogFormat};
pub use estimator::{estimate_ability, AbilityEstimate, GradedResponse};
pub use irt::{Ability, ItemParams, ModelKind, QuestionId};
pub use pool::{AbilityDistribution, CalibratedPool};
pub use selector::{select_next, CandidateSet, SelectionPolicy};
pub use session::{
    build_report, replay_session, start_session, submit_grade, DiagnosticReport, GradeOutcome, PoolRegistry,
    SessionError, SessionEvent, SessionStatus, StopReason, StoppingRule, TestSession,
};
