//! Logistic item-response models.
//!
//! The three-parameter logistic (3PL) response function is
//!
//! ```text
//! p(θ) = c + (1 − c) · 1 / (1 + exp(−α(θ − β)))
//! ```
//!
//! with discrimination `α`, difficulty `β` and guessing floor `c`. The
//! one-parameter form is the special case `α = 1, c = 0`. There is no `D = 1.7`
//! scaling constant.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound of the ability scale.
pub const THETA_MIN: f64 = -4.0;
/// Upper bound of the ability scale.
pub const THETA_MAX: f64 = 4.0;
/// Probability guard used by the log-likelihood and information terms.
pub const EPS_NUM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrtError {
    #[error("question {id}: discrimination must be finite and > 0, got {value}")]
    InvalidAlpha { id: QuestionId, value: f64 },
    #[error("question {id}: difficulty must be finite, got {value}")]
    InvalidBeta { id: QuestionId, value: f64 },
    #[error("question {id}: guessing factor must lie in [0, 1), got {value}")]
    InvalidGuessing { id: QuestionId, value: f64 },
}

/// Opaque question identifier. Ordering is lexicographic and is used for
/// every deterministic tie-break in the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub String);

impl QuestionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for QuestionId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for QuestionId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Calibrated parameters of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub question_id: QuestionId,
    /// Discrimination, > 0.
    pub alpha: f64,
    /// Difficulty, on the ability scale.
    pub beta: f64,
    /// Guessing factor in `[0, 1)`.
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

impl ItemParams {
    /// Builds a validated item.
    pub fn new(
        question_id: impl Into<QuestionId>,
        alpha: f64,
        beta: f64,
        c: f64,
    ) -> Result<Self, IrtError> {
        let item = Self {
            question_id: question_id.into(),
            alpha,
            beta,
            c,
            concept: None,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn with_concept(mut self, concept: impl Into<String>) -> Self {
        self.concept = Some(concept.into());
        self
    }

    pub fn validate(&self) -> Result<(), IrtError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(IrtError::InvalidAlpha {
                id: self.question_id.clone(),
                value: self.alpha,
            });
        }
        if !self.beta.is_finite() {
            return Err(IrtError::InvalidBeta {
                id: self.question_id.clone(),
                value: self.beta,
            });
        }
        if !(self.c >= 0.0 && self.c < 1.0) {
            return Err(IrtError::InvalidGuessing {
                id: self.question_id.clone(),
                value: self.c,
            });
        }
        Ok(())
    }
}

/// A latent ability value, clamped to `[THETA_MIN, THETA_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ability(f64);

impl Ability {
    pub fn new(theta: f64) -> Self {
        Self(theta.clamp(THETA_MIN, THETA_MAX))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Ability {
    fn default() -> Self {
        Self(0.0)
    }
}

impl From<Ability> for f64 {
    fn from(a: Ability) -> f64 {
        a.0
    }
}

/// Which logistic model variant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    OnePL,
    #[default]
    ThreePL,
}

impl ModelKind {
    /// The parameters this variant actually evaluates: the 1PL keeps only
    /// the item's difficulty.
    pub fn effective(self, item: &ItemParams) -> ItemParams {
        match self {
            ModelKind::ThreePL => item.clone(),
            ModelKind::OnePL => ItemParams {
                question_id: item.question_id.clone(),
                alpha: 1.0,
                beta: item.beta,
                c: 0.0,
                concept: item.concept.clone(),
            },
        }
    }

    pub fn prob_correct(self, item: &ItemParams, theta: f64) -> f64 {
        prob_correct(&self.effective(item), theta)
    }

    pub fn prob_derivative(self, item: &ItemParams, theta: f64) -> f64 {
        prob_derivative(&self.effective(item), theta)
    }

    pub fn item_information(self, item: &ItemParams, theta: f64) -> f64 {
        item_information(&self.effective(item), theta)
    }

    pub fn response_loglik(self, item: &ItemParams, theta: f64, correct: bool) -> f64 {
        response_loglik(&self.effective(item), theta, correct)
    }
}

/// Logistic function, split by sign so neither branch overflows.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Returns `(σ, 1 − σ)` with the complement computed without cancellation.
#[inline]
fn sigmoid_pair(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e / (1.0 + e);
    if z >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

/// Probability of a correct response at ability `theta`.
#[inline]
pub fn prob_correct(item: &ItemParams, theta: f64) -> f64 {
    let s = sigmoid(item.alpha * (theta - item.beta));
    item.c + (1.0 - item.c) * s
}

/// Probability of an incorrect response, `(1 − c)(1 − σ)`.
#[inline]
pub fn prob_incorrect(item: &ItemParams, theta: f64) -> f64 {
    (1.0 - item.c) * sigmoid(-item.alpha * (theta - item.beta))
}

/// `dp/dθ = (1 − c) α σ (1 − σ)`.
#[inline]
pub fn prob_derivative(item: &ItemParams, theta: f64) -> f64 {
    let (s, sc) = sigmoid_pair(item.alpha * (theta - item.beta));
    (1.0 - item.c) * item.alpha * s * sc
}

/// Fisher information `p′² / (p (1 − p))` of one item at `theta`.
///
/// Returns 0 once `p` is within `EPS_NUM` of 1.
#[inline]
pub fn item_information(item: &ItemParams, theta: f64) -> f64 {
    let (s, sc) = sigmoid_pair(item.alpha * (theta - item.beta));
    let p = item.c + (1.0 - item.c) * s;
    if p >= 1.0 - EPS_NUM {
        return 0.0;
    }
    let q = (1.0 - item.c) * sc;
    let denom = p * q;
    if denom <= 0.0 {
        return 0.0;
    }
    let dp = (1.0 - item.c) * item.alpha * s * sc;
    dp * dp / denom
}

/// Log-likelihood of one graded response, with both probabilities clamped to
/// `[EPS_NUM, 1 − EPS_NUM]`.
#[inline]
pub fn response_loglik(item: &ItemParams, theta: f64, correct: bool) -> f64 {
    let p = if correct {
        prob_correct(item, theta)
    } else {
        prob_incorrect(item, theta)
    };
    p.clamp(EPS_NUM, 1.0 - EPS_NUM).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(alpha: f64, beta: f64, c: f64) -> ItemParams {
        ItemParams::new("q", alpha, beta, c).unwrap()
    }

    #[test]
    fn prob_correct_examples() {
        assert_eq!(prob_correct(&item(1.0, 0.0, 0.0), 0.0), 0.5);
        assert!((prob_correct(&item(2.0, 1.0, 0.2), 1.0) - 0.6).abs() < 1e-15);
        // 30-digit evaluation: 0.25 + 0.75 / (1 + exp(-2.25))
        let expected = 0.928_487_901_325_667_8_f64;
        assert!((prob_correct(&item(1.5, -0.5, 0.25), 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(prob_derivative(&item(1.0, 0.0, 0.0), 0.0), 0.25);
        assert_eq!(prob_derivative(&item(2.0, 0.0, 0.5), 0.0), 0.25);
        let it = item(1.3, 0.2, 0.15);
        let h = 1e-5;
        let fd = (prob_correct(&it, 0.7 + h) - prob_correct(&it, 0.7 - h)) / (2.0 * h);
        assert!((prob_derivative(&it, 0.7) - fd).abs() < 1e-6);
    }

    #[test]
    fn information_examples() {
        assert!((item_information(&item(2.0, 0.0, 0.0), 0.0) - 1.0).abs() < 1e-15);
        assert!((item_information(&item(1.0, 0.0, 0.0), 0.0) - 0.25).abs() < 1e-15);
        // p = 0.65, p' = 0.175, I = 0.030625 / 0.2275
        let guessed = item_information(&item(1.0, 0.0, 0.3), 0.0);
        assert!((guessed - 0.134_615_384_615_384_6).abs() < 1e-14);
        assert!(guessed < 0.25);
    }

    #[test]
    fn information_vanishes_near_certainty() {
        let it = item(5.0, -4.0, 0.5);
        assert_eq!(item_information(&it, 50.0), 0.0);
    }

    #[test]
    fn loglik_examples() {
        let ln_half = 0.5f64.ln();
        assert!((response_loglik(&item(1.0, 0.0, 0.0), 0.0, true) - ln_half).abs() < 1e-15);
        assert!((response_loglik(&item(1.0, 0.0, 0.0), 0.0, false) - ln_half).abs() < 1e-15);
        assert!((response_loglik(&item(2.0, 1.0, 0.2), 1.0, false) - 0.4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loglik_is_finite_at_extremes() {
        let it = item(5.0, 0.0, 0.0);
        assert!((response_loglik(&it, -1e6, true) - EPS_NUM.ln()).abs() < 1e-9);
        assert!(response_loglik(&it, 1e6, false).is_finite());
    }

    #[test]
    fn invalid_items_are_rejected() {
        assert!(matches!(
            ItemParams::new("a", 0.0, 0.0, 0.0),
            Err(IrtError::InvalidAlpha { .. })
        ));
        assert!(matches!(
            ItemParams::new("a", 1.0, f64::NAN, 0.0),
            Err(IrtError::InvalidBeta { .. })
        ));
        assert!(matches!(
            ItemParams::new("a", 1.0, 0.0, 1.0),
            Err(IrtError::InvalidGuessing { .. })
        ));
    }

    #[test]
    fn ability_clamps() {
        assert_eq!(Ability::new(9.0).value(), THETA_MAX);
        assert_eq!(Ability::new(-9.0).value(), THETA_MIN);
        assert_eq!(Ability::new(0.3).value(), 0.3);
    }

    #[test]
    fn one_pl_matches_three_pl_with_unit_slope() {
        let it = item(1.7, 0.4, 0.2);
        let plain = item(1.0, 0.4, 0.0);
        for k in 0..=80 {
            let theta = -4.0 + 0.1 * k as f64;
            assert_eq!(
                ModelKind::OnePL.prob_correct(&it, theta).to_bits(),
                prob_correct(&plain, theta).to_bits()
            );
            assert_eq!(
                ModelKind::OnePL.item_information(&it, theta).to_bits(),
                item_information(&plain, theta).to_bits()
            );
        }
    }
}
