//! The calibrated question pool and the human ability distribution it carries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationConfig, FitReport};
use crate::irt::{ItemParams, QuestionId, THETA_MAX, THETA_MIN};

/// Number of quantile points kept when a distribution is sketched.
pub const SKETCH_POINTS: usize = 1001;

/// Abilities of a human reference population, kept sorted.
///
/// Large populations may be reduced to an evenly spaced quantile sketch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbilityDistribution {
    Full {
        values: Vec<f64>,
    },
    /// `values[k]` is the `k / (values.len() - 1)` quantile of `count`
    /// original values.
    Quantiles { count: usize, values: Vec<f64> },
}

impl Default for AbilityDistribution {
    fn default() -> Self {
        AbilityDistribution::Full { values: Vec::new() }
    }
}

impl AbilityDistribution {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        AbilityDistribution::Full { values }
    }

    /// Evenly spaced `points`-quantile sketch of this distribution.
    pub fn sketch(&self, points: usize) -> Self {
        let points = points.max(2);
        let values = (0..points)
            .map(|k| self.quantile(k as f64 / (points - 1) as f64))
            .collect();
        AbilityDistribution::Quantiles {
            count: self.len(),
            values,
        }
    }

    fn points(&self) -> &[f64] {
        match self {
            AbilityDistribution::Full { values } => values,
            AbilityDistribution::Quantiles { values, .. } => values,
        }
    }

    /// Number of examinees represented.
    pub fn len(&self) -> usize {
        match self {
            AbilityDistribution::Full { values } => values.len(),
            AbilityDistribution::Quantiles { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.points().first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.points().last().copied()
    }

    /// Linearly interpolated quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let pts = self.points();
        match pts.len() {
            0 => f64::NAN,
            1 => pts[0],
            n => {
                let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                pts[lo] + (h - lo as f64) * (pts[hi] - pts[lo])
            }
        }
    }

    /// Min-max image of `theta` in `[0, 1]`. Empty or degenerate
    /// distributions fall back to the ability-scale bounds.
    pub fn normalize(&self, theta: f64) -> f64 {
        let (lo, hi) = match (self.min(), self.max()) {
            (Some(lo), Some(hi)) if hi > lo => (lo, hi),
            _ => (THETA_MIN, THETA_MAX),
        };
        ((theta - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Where a pool came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<CalibrationConfig>,
    /// Hex SHA-256 of the canonical training records, or a free-form tag for
    /// synthetic pools.
    pub dataset_digest: String,
}

/// A bank of calibrated questions plus the human population it was fitted on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibratedPool {
    pub items: BTreeMap<QuestionId, ItemParams>,
    /// Optional question text shown during live sessions.
    pub content: BTreeMap<QuestionId, String>,
    /// Standardized abilities of the calibration examinees.
    pub human_abilities: AbilityDistribution,
    /// Per-concept ability distributions of the same examinees, estimated from
    /// their responses on that concept's items only.
    pub concept_abilities: BTreeMap<String, AbilityDistribution>,
    /// Items whose estimates rest on degenerate (all-correct or all-wrong) data.
    pub low_confidence: BTreeSet<QuestionId>,
    pub fit_report: Option<FitReport>,
    pub provenance: Provenance,
}

impl CalibratedPool {
    pub fn from_items<I: IntoIterator<Item = ItemParams>>(items: I) -> Self {
        Self {
            items: items
                .into_iter()
                .map(|it| (it.question_id.clone(), it))
                .collect(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &QuestionId) -> Option<&ItemParams> {
        self.items.get(id)
    }

    /// Question counts per concept; untagged items are not counted.
    pub fn concepts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for it in self.items.values() {
            if let Some(c) = &it.concept {
                *out.entry(c.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Human reference distribution for a concept, falling back to the
    /// overall population when no concept-specific one exists.
    pub fn reference_abilities(&self, concept: Option<&str>) -> &AbilityDistribution {
        concept
            .and_then(|c| self.concept_abilities.get(c))
            .filter(|d| !d.is_empty())
            .unwrap_or(&self.human_abilities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let d = AbilityDistribution::from_values(vec![3.0, 1.0, 2.0, 0.0]);
        assert_eq!(d.min(), Some(0.0));
        assert_eq!(d.max(), Some(3.0));
        assert_eq!(d.quantile(0.5), 1.5);
        assert!((d.quantile(0.8) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn normalize_endpoints() {
        let d = AbilityDistribution::from_values(vec![-2.0, 0.0, 2.0]);
        assert_eq!(d.normalize(2.0), 1.0);
        assert_eq!(d.normalize(-2.0), 0.0);
        assert_eq!(d.normalize(0.0), 0.5);
        assert_eq!(d.normalize(9.0), 1.0);
    }

    #[test]
    fn empty_distribution_uses_scale_bounds() {
        let d = AbilityDistribution::default();
        assert_eq!(d.normalize(0.0), 0.5);
        assert!(d.quantile(0.5).is_nan());
    }

    #[test]
    fn sketch_tracks_full_quantiles() {
        let values: Vec<f64> = (0..200_000).map(|k| (k as f64 / 199_999.0) * 8.0 - 4.0).collect();
        let full = AbilityDistribution::from_values(values);
        let sk = full.sketch(SKETCH_POINTS);
        assert_eq!(sk.len(), 200_000);
        for q in [0.01, 0.2, 0.5, 0.8, 0.99] {
            assert!((sk.quantile(q) - full.quantile(q)).abs() < 1e-3 * 8.0);
        }
        assert_eq!(sk.min(), full.min());
        assert_eq!(sk.max(), full.max());
    }
}
