//! Monte-Carlo experiments with synthetic examinees.
//!
//! Every synthetic examinee answers a given question the same way no matter
//! which policy administered it: the random draws behind a response depend
//! only on the examinee's seed and the question id. Comparing policies on the
//! same examinees therefore uses common random numbers.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ResponseLog;
use crate::estimator::{asymptotic_variance, estimate_ability, AbilityEstimate, GradedResponse};
use crate::irt::{prob_correct, ItemParams, QuestionId};
use crate::pool::{AbilityDistribution, CalibratedPool, Provenance};
use crate::selector::{select_next, CandidateSet, SelectError, SelectionPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("pool has {available} questions but the experiment needs {needed}")]
    PoolTooSmall { available: usize, needed: usize },
    #[error("guess {guess} and slip {slip} must be probabilities with guess + slip < 1")]
    InvalidNoise { guess: f64, slip: f64 },
    #[error("at least {min} replications are required, got {got}")]
    TooFewReplications { min: usize, got: usize },
    #[error("at least 2 examinees are required, got {0}")]
    TooFewExaminees(usize),
    #[error("jaccard similarity is undefined for two empty sets")]
    BothEmpty,
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// A simulated test taker with known ability and response noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExaminee {
    pub true_theta: f64,
    /// Probability an incorrect latent answer is observed as correct.
    pub guess: f64,
    /// Probability a correct latent answer is observed as incorrect.
    pub slip: f64,
    pub seed: u64,
}

impl SyntheticExaminee {
    pub fn new(true_theta: f64, guess: f64, slip: f64, seed: u64) -> Result<Self, SimError> {
        let ex = Self {
            true_theta,
            guess,
            slip,
            seed,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn noiseless(true_theta: f64, seed: u64) -> Self {
        Self {
            true_theta,
            guess: 0.0,
            slip: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = (0.0..=1.0).contains(&self.guess)
            && (0.0..=1.0).contains(&self.slip)
            && self.guess + self.slip < 1.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidNoise {
                guess: self.guess,
                slip: self.slip,
            })
        }
    }

    /// Observed-correct probability: `(1 − s)·p + g·(1 − p)`.
    pub fn observed_probability(&self, item: &ItemParams) -> f64 {
        let p = prob_correct(item, self.true_theta);
        (1.0 - self.slip) * p + self.guess * (1.0 - p)
    }

    /// Answer to `item`, reproducible per (examinee, question).
    pub fn respond(&self, item: &ItemParams) -> bool {
        oracle_response(self, item, question_stream(&item.question_id))
    }
}

/// Stable 64-bit FNV-1a hash of a question id, used as its random stream.
pub fn question_stream(id: &QuestionId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Draws one response. The latent outcome is Bernoulli(p(θ0)); a latent
/// correct answer then slips to incorrect with probability `slip`, and a
/// latent incorrect answer is guessed correct with probability `guess`.
/// `draw` selects the random stream, so equal arguments give equal answers.
pub fn oracle_response(examinee: &SyntheticExaminee, item: &ItemParams, draw: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(examinee.seed);
    rng.set_stream(draw);
    let latent = rng.random::<f64>() < prob_correct(item, examinee.true_theta);
    let flip: f64 = rng.random();
    if latent {
        flip >= examinee.slip
    } else {
        flip < examinee.guess
    }
}

/// Random pool: α ~ U[0.5, 2.5], β ~ N(0, 1), c ~ U[0, 0.3]. Human abilities
/// are 1,000 standard-normal draws so reports have a reference population.
pub fn generate_pool(n_items: usize, seed: u64) -> CalibratedPool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_items.saturating_sub(1).to_string().len().max(4);
    let items = (0..n_items).map(|k| ItemParams {
        question_id: QuestionId(format!("q{k:0width$}")),
        alpha: rng.random_range(0.5..2.5),
        beta: StandardNormal.sample(&mut rng),
        c: rng.random_range(0.0..0.3),
        concept: None,
    });
    let mut pool = CalibratedPool::from_items(items.collect::<Vec<_>>());
    let humans: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    pool.human_abilities = AbilityDistribution::from_values(humans);
    pool.provenance = Provenance {
        config: None,
        dataset_digest: format!("synthetic:{n_items}:{seed}"),
    };
    pool
}

/// Assigns concepts to a pool's items in id order, `(name, count)` at a time.
/// Items beyond the listed counts stay untagged.
pub fn assign_concepts(pool: &mut CalibratedPool, concepts: &[(&str, usize)]) {
    let mut names = concepts
        .iter()
        .flat_map(|&(name, count)| std::iter::repeat_n(name, count));
    for item in pool.items.values_mut() {
        item.concept = names.next().map(str::to_owned);
    }
}

/// Noise-free response logs for `n_examinees` standard-normal examinees.
/// With `per_examinee = None` everyone answers every question; otherwise each
/// answers a random subset of that size.
pub fn generate_logs(
    pool: &CalibratedPool,
    n_examinees: usize,
    per_examinee: Option<usize>,
    seed: u64,
) -> (Vec<ResponseLog>, BTreeMap<String, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<&ItemParams> = pool.items.values().collect();
    let width = n_examinees.saturating_sub(1).to_string().len().max(4);
    let mut logs = Vec::new();
    let mut truth = BTreeMap::new();
    let mut order: Vec<usize> = (0..items.len()).collect();
    for e in 0..n_examinees {
        let id = format!("s{e:0width$}");
        let theta: f64 = StandardNormal.sample(&mut rng);
        let chosen: &[usize] = match per_examinee {
            Some(k) if k < items.len() => {
                let (head, _) = order.partial_shuffle(&mut rng, k);
                head
            }
            _ => &order,
        };
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for j in chosen {
            let correct = rng.random::<f64>() < prob_correct(items[j], theta);
            logs.push(ResponseLog::new(id.clone(), items[j].question_id.clone(), correct));
        }
        truth.insert(id, theta);
    }
    (logs, truth)
}

/// One step of a fixed-length simulated test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub question_id: QuestionId,
    pub correct: bool,
    pub estimate: AbilityEstimate,
}

/// Runs an adaptive test of exactly `steps` questions (no early stopping),
/// starting from θ̂ = 0.
pub fn simulate_test(
    examinee: &SyntheticExaminee,
    pool: &CalibratedPool,
    policy: &SelectionPolicy,
    steps: usize,
) -> Result<Vec<SimStep>, SimError> {
    let mut administered = BTreeSet::new();
    let mut responses: Vec<GradedResponse> = Vec::with_capacity(steps);
    let mut out = Vec::with_capacity(steps);
    let mut theta = 0.0;
    for step in 1..=steps {
        let candidates = CandidateSet::new(pool, &administered, None);
        let qid = select_next(&candidates, theta, policy, step as u64)?;
        let item = pool.items[&qid].clone();
        let correct = examinee.respond(&item);
        responses.push(GradedResponse {
            item,
            correct,
            step_index: step,
        });
        let estimate = estimate_ability(&responses).expect("responses are non-empty");
        theta = estimate.theta_hat;
        administered.insert(qid.clone());
        out.push(SimStep {
            question_id: qid,
            correct,
            estimate,
        });
    }
    Ok(out)
}

/// Per-step MSE of θ̂ for each policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurves {
    /// `fisher[t-1]` is the MSE after `t` adaptively selected questions.
    pub fisher: Vec<f64>,
    /// Same for random (fixed-form) selection.
    pub random: Vec<f64>,
    pub efficiency: Efficiency,
}

/// How many Fisher-selected questions match the random baseline's final
/// accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub baseline_steps: usize,
    pub baseline_mse: f64,
    /// First step at which Fisher's MSE is ≤ the baseline's terminal MSE.
    pub fisher_steps: Option<usize>,
    /// `fisher_steps / baseline_steps`.
    pub ratio: Option<f64>,
}

/// Mean SE curve under one guess/slip condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeCurve {
    pub guess: f64,
    pub slip: f64,
    /// `mean_se[t-1]` is the mean standard error after `t` questions.
    pub mean_se: Vec<f64>,
}

/// Pairwise Jaccard similarity of the question sets administered to
/// simulated examinees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub mean_off_diagonal: f64,
}

/// Empirical vs predicted variance of θ̂ at a fixed test length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub t: usize,
    pub mean_theta_hat: f64,
    pub empirical_variance: f64,
    pub predicted_variance: f64,
}

/// Collected results of the simulation experiments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub true_thetas: Vec<f64>,
    pub mse: Option<MseCurves>,
    pub se: Vec<SeCurve>,
    pub jaccard: Option<JaccardMatrix>,
    pub variance: Vec<VarianceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseConfig {
    pub n_examinees: usize,
    /// Length of the adaptive (Fisher) curve.
    pub max_steps: usize,
    /// Length of the random-selection baseline curve.
    pub baseline_steps: usize,
    pub seed: u64,
}

impl Default for MseConfig {
    fn default() -> Self {
        Self {
            n_examinees: 100,
            max_steps: 20,
            baseline_steps: 100,
            seed: 0,
        }
    }
}

/// Standard-normal true abilities with per-examinee seeds, drawn from `seed`.
pub fn draw_examinees(n: usize, guess: f64, slip: f64, seed: u64) -> Vec<SyntheticExaminee> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| SyntheticExaminee {
            true_theta: normal.sample(&mut rng),
            guess,
            slip,
            seed: rng.next_u64(),
        })
        .collect()
}

/// Per-step MSE of Fisher vs random selection on the same examinees.
pub fn run_mse_experiment(pool: &CalibratedPool, config: &MseConfig) -> Result<SimulationReport, SimError> {
    if config.n_examinees < 2 {
        return Err(SimError::TooFewExaminees(config.n_examinees));
    }
    let needed = config.max_steps.max(config.baseline_steps);
    if pool.len() < needed {
        return Err(SimError::PoolTooSmall {
            available: pool.len(),
            needed,
        });
    }
    let examinees = draw_examinees(config.n_examinees, 0.0, 0.0, config.seed);
    let mut fisher_sq = vec![0.0; config.max_steps];
    let mut random_sq = vec![0.0; config.baseline_steps];
    for ex in &examinees {
        let fisher = simulate_test(ex, pool, &SelectionPolicy::Fisher, config.max_steps)?;
        let random_policy = SelectionPolicy::Random {
            seed: ex.seed ^ 0x9e37_79b9_7f4a_7c15,
        };
        let random = simulate_test(ex, pool, &random_policy, config.baseline_steps)?;
        for (acc, s) in fisher_sq.iter_mut().zip(&fisher) {
            *acc += (s.estimate.theta_hat - ex.true_theta).powi(2);
        }
        for (acc, s) in random_sq.iter_mut().zip(&random) {
            *acc += (s.estimate.theta_hat - ex.true_theta).powi(2);
        }
    }
    let n = config.n_examinees as f64;
    let fisher: Vec<f64> = fisher_sq.into_iter().map(|v| v / n).collect();
    let random: Vec<f64> = random_sq.into_iter().map(|v| v / n).collect();
    let efficiency = efficiency(&fisher, &random);
    Ok(SimulationReport {
        seed: config.seed,
        true_thetas: examinees.iter().map(|e| e.true_theta).collect(),
        mse: Some(MseCurves {
            fisher,
            random,
            efficiency,
        }),
        ..Default::default()
    })
}

/// First Fisher step reaching the baseline's terminal MSE.
pub fn efficiency(fisher: &[f64], baseline: &[f64]) -> Efficiency {
    let baseline_steps = baseline.len();
    let baseline_mse = baseline.last().copied().unwrap_or(f64::NAN);
    let fisher_steps = fisher.iter().position(|&m| m <= baseline_mse).map(|k| k + 1);
    Efficiency {
        baseline_steps,
        baseline_mse,
        fisher_steps,
        ratio: fisher_steps.map(|s| s as f64 / baseline_steps as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub n_examinees: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            n_examinees: 100,
            max_steps: 20,
            seed: 0,
        }
    }
}

/// Mean SE per step of Fisher-driven tests under each `(guess, slip)`
/// condition. All conditions share the same true abilities and seeds.
pub fn run_se_experiment(
    pool: &CalibratedPool,
    conditions: &[(f64, f64)],
    config: &SeConfig,
) -> Result<SimulationReport, SimError> {
    if pool.len() < config.max_steps {
        return Err(SimError::PoolTooSmall {
            available: pool.len(),
            needed: config.max_steps,
        });
    }
    let base = draw_examinees(config.n_examinees, 0.0, 0.0, config.seed);
    let mut curves = Vec::with_capacity(conditions.len());
    for &(guess, slip) in conditions {
        let mut sum = vec![0.0; config.max_steps];
        for ex in &base {
            let ex = SyntheticExaminee::new(ex.true_theta, guess, slip, ex.seed)?;
            let run = simulate_test(&ex, pool, &SelectionPolicy::Fisher, config.max_steps)?;
            for (acc, s) in sum.iter_mut().zip(&run) {
                *acc += s.estimate.se;
            }
        }
        let n = config.n_examinees.max(1) as f64;
        curves.push(SeCurve {
            guess,
            slip,
            mean_se: sum.into_iter().map(|v| v / n).collect(),
        });
    }
    Ok(SimulationReport {
        seed: config.seed,
        true_thetas: base.iter().map(|e| e.true_theta).collect(),
        se: curves,
        ..Default::default()
    })
}

/// `|A ∩ B| / |A ∪ B|`.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, SimError> {
    if a.is_empty() && b.is_empty() {
        return Err(SimError::BothEmpty);
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Runs Fisher-driven tests for `examinees` and compares the administered
/// question sets pairwise.
pub fn run_jaccard_experiment(
    pool: &CalibratedPool,
    examinees: &[SyntheticExaminee],
    max_steps: usize,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    if examinees.len() < 2 {
        return Err(SimError::TooFewExaminees(examinees.len()));
    }
    if pool.len() < max_steps {
        return Err(SimError::PoolTooSmall {
            available: pool.len(),
            needed: max_steps,
        });
    }
    let mut sets = Vec::with_capacity(examinees.len());
    for ex in examinees {
        let run = simulate_test(ex, pool, &SelectionPolicy::Fisher, max_steps)?;
        sets.push(run.into_iter().map(|s| s.question_id).collect::<BTreeSet<_>>());
    }
    let n = sets.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            values[i][j] = jaccard(&sets[i], &sets[j])?;
            if i != j {
                off += values[i][j];
            }
        }
    }
    Ok(SimulationReport {
        seed,
        true_thetas: examinees.iter().map(|e| e.true_theta).collect(),
        jaccard: Some(JaccardMatrix {
            labels: (0..n).map(|k| format!("examinee{k}")).collect(),
            values,
            mean_off_diagonal: off / (n * (n - 1)) as f64,
        }),
        ..Default::default()
    })
}

pub const MIN_VARIANCE_REPLICATIONS: usize = 500;

/// Compares the spread of θ̂ over `replications` simulated tests of `t`
/// copies of `template` against the predicted `1 / (t · I(θ0))`.
pub fn run_variance_check(
    template: &ItemParams,
    theta0: f64,
    t_values: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<VarianceRow>, SimError> {
    if replications < MIN_VARIANCE_REPLICATIONS {
        return Err(SimError::TooFewReplications {
            min: MIN_VARIANCE_REPLICATIONS,
            got: replications,
        });
    }
    let t_max = t_values.iter().copied().max().unwrap_or(0);
    let items: Vec<ItemParams> = (0..t_max)
        .map(|k| ItemParams {
            question_id: QuestionId(format!("v{k:05}")),
            ..template.clone()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates: Vec<Vec<f64>> = vec![Vec::with_capacity(replications); t_values.len()];
    for _ in 0..replications {
        let ex = SyntheticExaminee::noiseless(theta0, rng.next_u64());
        let responses: Vec<GradedResponse> = items
            .iter()
            .enumerate()
            .map(|(k, item)| GradedResponse {
                item: item.clone(),
                correct: oracle_response(&ex, item, k as u64),
                step_index: k + 1,
            })
            .collect();
        for (slot, &t) in estimates.iter_mut().zip(t_values) {
            if t == 0 {
                continue;
            }
            let est = estimate_ability(&responses[..t]).expect("non-empty");
            slot.push(est.theta_hat);
        }
    }
    Ok(t_values
        .iter()
        .zip(estimates)
        .map(|(&t, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            VarianceRow {
                t,
                mean_theta_hat: mean,
                empirical_variance: var,
                predicted_variance: asymptotic_variance(&items[..t], theta0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(a: f64, b: f64, c: f64) -> ItemParams {
        ItemParams::new("x", a, b, c).unwrap()
    }

    #[test]
    fn noise_rejected_when_uninformative() {
        assert!(SyntheticExaminee::new(0.0, 0.6, 0.4, 1).is_err());
        assert!(SyntheticExaminee::new(0.0, -0.1, 0.0, 1).is_err());
        assert!(SyntheticExaminee::new(0.0, 0.1, 0.3, 1).is_ok());
    }

    #[test]
    fn observed_probability_examples() {
        let it = item(1.0, 0.0, 0.0);
        assert_eq!(SyntheticExaminee::noiseless(0.0, 1).observed_probability(&it), 0.5);
        let noisy = SyntheticExaminee::new(0.0, 0.1, 0.3, 1).unwrap();
        assert!((noisy.observed_probability(&it) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn certain_item_observed_with_slip() {
        // p is 1 to machine precision far above the difficulty
        let it = item(5.0, -4.0, 0.0);
        let ex = SyntheticExaminee::new(50.0, 0.0, 0.3, 5).unwrap();
        assert!((ex.observed_probability(&it) - 0.7).abs() < 1e-12);
        let n = 100_000;
        let hits = (0..n).filter(|&d| oracle_response(&ex, &it, d)).count() as f64;
        let sd = (0.7 * 0.3 / n as f64).sqrt();
        assert!((hits / n as f64 - 0.7).abs() < 3.0 * sd);
    }

    #[test]
    fn responses_are_reproducible() {
        let ex = SyntheticExaminee::new(0.3, 0.1, 0.1, 77).unwrap();
        let it = item(1.0, 0.2, 0.1);
        let a: Vec<bool> = (0..50).map(|d| oracle_response(&ex, &it, d)).collect();
        let b: Vec<bool> = (0..50).map(|d| oracle_response(&ex, &it, d)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn jaccard_examples() {
        let a: BTreeSet<u32> = [1, 2].into_iter().collect();
        let b: BTreeSet<u32> = [2, 3].into_iter().collect();
        assert!((jaccard(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        let empty = BTreeSet::<u32>::new();
        assert_eq!(jaccard(&empty, &empty), Err(SimError::BothEmpty));
        assert_eq!(jaccard(&a, &empty).unwrap(), 0.0);
    }

    #[test]
    fn stream_hash_is_stable() {
        // FNV-1a reference values
        assert_eq!(question_stream(&QuestionId::from("")), 0xcbf2_9ce4_8422_2325);
        assert_eq!(question_stream(&QuestionId::from("a")), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn generated_pool_respects_recipe() {
        let pool = generate_pool(500, 3);
        assert_eq!(pool.len(), 500);
        for it in pool.items.values() {
            assert!((0.5..2.5).contains(&it.alpha));
            assert!((0.0..0.3).contains(&it.c));
            it.validate().unwrap();
        }
        assert_eq!(pool.human_abilities.len(), 1000);
        assert_eq!(generate_pool(500, 3), pool);
    }

    #[test]
    fn assign_concepts_in_order() {
        let mut pool = generate_pool(10, 1);
        assign_concepts(&mut pool, &[("A", 3), ("B", 5)]);
        let counts = pool.concepts();
        assert_eq!(counts["A"], 3);
        assert_eq!(counts["B"], 5);
        assert_eq!(counts.values().sum::<usize>(), 8);
    }

    #[test]
    fn too_small_pool_is_rejected() {
        let pool = generate_pool(10, 1);
        let err = run_mse_experiment(&pool, &MseConfig::default()).unwrap_err();
        assert_eq!(err, SimError::PoolTooSmall { available: 10, needed: 100 });
    }

    #[test]
    fn empty_condition_list_gives_empty_report() {
        let pool = generate_pool(30, 1);
        let report = run_se_experiment(&pool, &[], &SeConfig::default()).unwrap();
        assert!(report.se.is_empty());
    }

    #[test]
    fn variance_check_needs_replications() {
        let err = run_variance_check(&item(1.0, 0.0, 0.0), 0.0, &[10], 100, 1).unwrap_err();
        assert!(matches!(err, SimError::TooFewReplications { .. }));
    }

    #[test]
    fn single_step_variance_is_finite() {
        let rows = run_variance_check(&item(1.0, 0.0, 0.0), 0.0, &[1], 500, 2).unwrap();
        assert!(rows[0].empirical_variance.is_finite());
        assert!(rows[0].empirical_variance > 0.0);
    }

    #[test]
    fn efficiency_finds_first_crossing() {
        let e = efficiency(&[1.0, 0.5, 0.2, 0.1], &[2.0, 1.0, 0.6, 0.3, 0.25]);
        assert_eq!(e.fisher_steps, Some(3));
        assert_eq!(e.ratio, Some(0.6));
        let none = efficiency(&[1.0], &[0.5]);
        assert_eq!(none.fisher_steps, None);
    }
}
