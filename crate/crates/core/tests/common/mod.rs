#![allow(dead_code)]

use std::collections::BTreeSet;

use adaptest_core::estimator::{total_loglik, GradedResponse};
use adaptest_core::irt::{ItemParams, THETA_MAX, THETA_MIN};
use adaptest_core::pool::{AbilityDistribution, CalibratedPool};
use adaptest_core::selector::SelectionPolicy;
use adaptest_core::session::{
    build_report, replay_session, PoolRegistry, SessionError, SessionStatus, StoppingRule, TestSession,
};
use adaptest_core::estimate_ability;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_item(rng: &mut impl Rng, id: String) -> ItemParams {
    ItemParams::new(
        id,
        rng.random_range(0.3..2.5),
        rng.random_range(-3.0..3.0),
        rng.random_range(0.0..0.3),
    )
    .unwrap()
}

/// Argmax of the log-likelihood over a uniform grid on the ability scale.
pub fn dense_grid_argmax(responses: &[GradedResponse], step: f64) -> f64 {
    let n = ((THETA_MAX - THETA_MIN) / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, THETA_MIN);
    for k in 0..=n {
        let theta = THETA_MIN + k as f64 * step;
        let ll = total_loglik(responses, theta);
        if ll > best.0 {
            best = (ll, theta);
        }
    }
    best.1
}

pub fn random_session(rng: &mut impl Rng, len: usize) -> Vec<GradedResponse> {
    (0..len)
        .map(|k| GradedResponse {
            item: random_item(rng, format!("q{k}")),
            correct: rng.random_bool(0.5),
            step_index: k + 1,
        })
        .collect()
}

/// A 60-item pool in two concepts with a small human population.
pub fn session_pool() -> CalibratedPool {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pool = CalibratedPool::from_items((0..60).map(|k| {
        let concept = if k % 2 == 0 { "Algebra" } else { "Geometry" };
        random_item(&mut rng, format!("q{k:02}")).with_concept(concept)
    }));
    pool.human_abilities = AbilityDistribution::from_values((0..200).map(|k| -2.0 + 0.02 * k as f64).collect());
    pool
}

pub fn session_registry() -> PoolRegistry {
    let mut reg = PoolRegistry::new();
    reg.insert("main", session_pool());
    reg
}

/// Drives one session with random operations (grades with correct, stale,
/// or future step numbers) and checks every state-machine invariant.
/// Returns the number of accepted grades.
pub fn check_random_sequence(registry: &PoolRegistry, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = registry.get("main").map_err(|e| e.to_string())?.clone();
    let max_length = rng.random_range(1..=12);
    let rule = StoppingRule {
        max_length,
        min_length: rng.random_range(0..=max_length),
        se_threshold: rng.random_range(0.2..1.2),
    };
    let policy = if rng.random_bool(0.5) {
        SelectionPolicy::Fisher
    } else {
        SelectionPolicy::Random { seed: rng.random() }
    };
    let concept = match rng.random_range(0..3) {
        0 => None,
        1 => Some("Algebra".to_owned()),
        _ => Some("Geometry".to_owned()),
    };
    let (mut s, _) = TestSession::start(format!("s{seed}"), "main", &pool, concept, policy, rule)
        .map_err(|e| e.to_string())?;

    let ops = rng.random_range(1..30);
    let mut accepted = 0;
    for _ in 0..ops {
        let delta: i64 = rng.random_range(-2..=2);
        let step = (s.expected_step() as i64 + delta).max(0) as usize;
        let correct = rng.random_bool(0.5);
        let before = s.clone();
        let result = s.submit_grade_at(&pool, step, correct);
        match (&before.status, result) {
            (SessionStatus::Stopped { reason }, Err(SessionError::SessionStopped(r))) if *reason == r => {
                if s != before {
                    return Err("rejected grade on stopped session changed state".into());
                }
            }
            (SessionStatus::AwaitingGrade { .. }, Err(SessionError::WrongState { expected, got }))
                if step != before.expected_step() && expected == before.expected_step() && got == step =>
            {
                if s != before {
                    return Err("rejected stale grade changed state".into());
                }
            }
            (SessionStatus::AwaitingGrade { question_id }, Ok(_)) if step == before.expected_step() => {
                accepted += 1;
                let last = s.responses.last().unwrap();
                if last.item.question_id != *question_id || last.correct != correct {
                    return Err("accepted grade recorded the wrong question".into());
                }
            }
            (status, other) => return Err(format!("status {status:?}, step {step}: unexpected {other:?}")),
        }
        if matches!(s.status, SessionStatus::Active) {
            return Err("transient Active state leaked".into());
        }
        if s.responses.len() > rule.max_length {
            return Err("session exceeded max_length".into());
        }
    }

    for (t, est) in s.trajectory.iter().enumerate() {
        if est.step != t + 1 {
            return Err(format!("trajectory[{t}].step = {}", est.step));
        }
        let fresh = estimate_ability(&s.responses[..=t]).unwrap();
        if fresh != *est {
            return Err(format!("trajectory[{t}] differs from recomputation"));
        }
    }
    let ids: BTreeSet<_> = s.responses.iter().map(|r| &r.item.question_id).collect();
    if ids.len() != s.responses.len() {
        return Err("question repeated".into());
    }
    if s.is_stopped() {
        let report = build_report(&[&s], &pool).map_err(|e| e.to_string())?;
        for e in &report.entries {
            for v in [e.normalized_theta, e.top20_normalized, e.top50_normalized] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("normalized value {v} outside [0, 1]"));
                }
            }
        }
    }

    let events = s.events();
    let replayed = replay_session(registry, &events).map_err(|e| e.to_string())?;
    if replayed != s {
        return Err("replay differs from live session".into());
    }
    let text: String = events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    let parsed = adaptest_core::datastore::parse_event_log(&text).map_err(|e| e.to_string())?;
    if replay_session(registry, &parsed.events).map_err(|e| e.to_string())? != s {
        return Err("replay from serialized log differs".into());
    }
    Ok(accepted)
}
