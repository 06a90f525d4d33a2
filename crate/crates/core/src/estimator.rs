//! Maximum-likelihood ability estimation and its standard error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irt::{item_information, response_loglik, ItemParams, THETA_MAX, THETA_MIN};

/// Number of points in the coarse ability grid (step 0.05 over `[-4, 4]`).
pub const GRID_POINTS: usize = 161;
/// Width below which the golden-section bracket is considered converged.
pub const REFINE_TOL: f64 = 1e-6;
/// Total information below which the standard error is reported as infinite.
pub const MIN_TOTAL_INFORMATION: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("cannot estimate ability from an empty response set")]
    EmptyResponses,
}

/// One administered and graded question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedResponse {
    pub item: ItemParams,
    pub correct: bool,
    /// 1-based test step.
    pub step_index: usize,
}

/// Ability estimate after `step` responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate {
    pub theta_hat: f64,
    /// Standard error; `f64::INFINITY` when the responses carry no information.
    #[serde(with = "crate::serde_util::f64_or_inf")]
    pub se: f64,
    pub step: usize,
    pub loglik: f64,
}

/// Total log-likelihood of `responses` at `theta`, summed in response order.
pub fn total_loglik(responses: &[GradedResponse], theta: f64) -> f64 {
    responses
        .iter()
        .map(|r| response_loglik(&r.item, theta, r.correct))
        .sum()
}

/// Sum of item information at `theta`.
pub fn total_information<'a, I>(items: I, theta: f64) -> f64
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    items.into_iter().map(|it| item_information(it, theta)).sum()
}

/// Maximum-likelihood ability over `[THETA_MIN, THETA_MAX]`.
///
/// A 161-point grid locates every local maximum, each is refined by
/// golden-section search, and the best candidate (grid points included) wins.
/// All-correct and all-wrong patterns return the scale bounds.
pub fn estimate_ability(responses: &[GradedResponse]) -> Result<AbilityEstimate, EstimatorError> {
    if responses.is_empty() {
        return Err(EstimatorError::EmptyResponses);
    }
    let theta_hat = if responses.iter().all(|r| r.correct) {
        THETA_MAX
    } else if responses.iter().all(|r| !r.correct) {
        THETA_MIN
    } else {
        maximize(|t| total_loglik(responses, t))
    };
    Ok(AbilityEstimate {
        theta_hat,
        se: standard_error(responses, theta_hat),
        step: responses.len(),
        loglik: total_loglik(responses, theta_hat),
    })
}

fn grid_point(k: usize) -> f64 {
    THETA_MIN + (THETA_MAX - THETA_MIN) * k as f64 / (GRID_POINTS - 1) as f64
}

fn maximize<F: Fn(f64) -> f64>(f: F) -> f64 {
    let values: Vec<f64> = (0..GRID_POINTS).map(|k| f(grid_point(k))).collect();

    let mut best_theta = grid_point(0);
    let mut best_val = values[0];
    for (k, &v) in values.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best_theta = grid_point(k);
        }
    }

    for k in 0..GRID_POINTS {
        let left = if k == 0 { f64::NEG_INFINITY } else { values[k - 1] };
        let right = if k + 1 == GRID_POINTS { f64::NEG_INFINITY } else { values[k + 1] };
        if values[k] < left || values[k] < right {
            continue;
        }
        let lo = grid_point(k.saturating_sub(1));
        let hi = grid_point((k + 1).min(GRID_POINTS - 1));
        let (t, v) = golden_section(&f, lo, hi);
        if v > best_val {
            best_val = v;
            best_theta = t;
        }
    }
    best_theta
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > REFINE_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// `1 / sqrt(Σ I_j(θ̂))`, or infinity when the total information is below
/// `MIN_TOTAL_INFORMATION`.
pub fn standard_error(responses: &[GradedResponse], theta_hat: f64) -> f64 {
    let info = total_information(responses.iter().map(|r| &r.item), theta_hat);
    if info < MIN_TOTAL_INFORMATION {
        f64::INFINITY
    } else {
        1.0 / info.sqrt()
    }
}

/// Predicted large-sample variance of θ̂ at the true ability: the inverse of
/// the summed item information, i.e. `1 / (t · Ī(θ0))`.
pub fn asymptotic_variance<'a, I>(items: I, theta0: f64) -> f64
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    let info = total_information(items, theta0);
    if info <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / info
    }
}
