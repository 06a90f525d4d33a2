//! Adaptive question selection.
//!
//! `Fisher` picks the remaining question with the largest item information at
//! the current ability estimate. `Random` draws uniformly from the remaining
//! questions and stands in for a fixed, randomly sampled test form.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irt::{item_information, ItemParams, QuestionId};
use crate::pool::CalibratedPool;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("no unadministered questions remain")]
    PoolExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    Fisher,
    Random {
        seed: u64,
    },
}

/// The questions still available to a session.
#[derive(Debug, Clone, Copy)]
pub struct CandidateSet<'a> {
    pub pool: &'a CalibratedPool,
    pub administered: &'a BTreeSet<QuestionId>,
    pub concept_filter: Option<&'a str>,
}

impl<'a> CandidateSet<'a> {
    pub fn new(
        pool: &'a CalibratedPool,
        administered: &'a BTreeSet<QuestionId>,
        concept_filter: Option<&'a str>,
    ) -> Self {
        Self {
            pool,
            administered,
            concept_filter,
        }
    }

    /// Remaining candidates in question-id order.
    pub fn iter(&self) -> impl Iterator<Item = &'a ItemParams> + '_ {
        let administered = self.administered;
        let concept = self.concept_filter;
        self.pool.items.values().filter(move |it| {
            !administered.contains(&it.question_id)
                && concept.is_none_or(|c| it.concept.as_deref() == Some(c))
        })
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }
}

/// Chooses the next question for an examinee currently estimated at `theta`.
///
/// `draw_index` identifies the draw within the policy's random stream; it is
/// ignored by `Fisher`.
pub fn select_next(
    candidates: &CandidateSet<'_>,
    theta: f64,
    policy: &SelectionPolicy,
    draw_index: u64,
) -> Result<QuestionId, SelectError> {
    match policy {
        SelectionPolicy::Fisher => {
            let mut best: Option<(&ItemParams, f64)> = None;
            for it in candidates.iter() {
                let info = item_information(it, theta);
                // strict comparison keeps the smallest id on ties
                if best.is_none_or(|(_, b)| info > b) {
                    best = Some((it, info));
                }
            }
            best.map(|(it, _)| it.question_id.clone())
                .ok_or(SelectError::PoolExhausted)
        }
        SelectionPolicy::Random { seed } => {
            let n = candidates.len();
            if n == 0 {
                return Err(SelectError::PoolExhausted);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(draw_index);
            let k = rng.random_range(0..n);
            Ok(candidates
                .iter()
                .nth(k)
                .expect("index below candidate count")
                .question_id
                .clone())
        }
    }
}

/// Item information of one candidate over an ability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationRow {
    pub question_id: QuestionId,
    pub information: Vec<f64>,
}

/// Information of every candidate at every grid point.
pub fn information_profile(candidates: &CandidateSet<'_>, theta_grid: &[f64]) -> Vec<InformationRow> {
    candidates
        .iter()
        .map(|it| InformationRow {
            question_id: it.question_id.clone(),
            information: theta_grid.iter().map(|&t| item_information(it, t)).collect(),
        })
        .collect()
}
