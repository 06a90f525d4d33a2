//! Question-pool calibration by joint maximum likelihood.
//!
//! Item parameters and training-examinee abilities are fitted together by
//! alternating block-coordinate gradient ascent: one projected step for every
//! item with abilities held fixed, then one for every examinee with items held
//! fixed. Each parameter block's step is accepted only if its own
//! log-likelihood does not drop (the step is halved otherwise), so the total
//! training log-likelihood never decreases. A held-out split drives early
//! stopping, and the final abilities are standardized to mean 0 / sd 1 with
//! the items rescaled to match.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::{estimate_ability, GradedResponse};
use crate::irt::{ItemParams, QuestionId, EPS_NUM, THETA_MAX, THETA_MIN};
use crate::pool::{AbilityDistribution, CalibratedPool, Provenance};

/// One graded answer of one examinee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseLog {
    pub examinee_id: String,
    pub question_id: QuestionId,
    pub correct: bool,
}

impl ResponseLog {
    pub fn new(examinee_id: impl Into<String>, question_id: impl Into<QuestionId>, correct: bool) -> Self {
        Self {
            examinee_id: examinee_id.into(),
            question_id: question_id.into(),
            correct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            alpha_min: 0.05,
            alpha_max: 5.0,
            beta_min: -4.0,
            beta_max: 4.0,
            c_min: 0.0,
            c_max: 0.6,
        }
    }
}

impl ParamBounds {
    pub fn contains(&self, item: &ItemParams) -> bool {
        (self.alpha_min..=self.alpha_max).contains(&item.alpha)
            && (self.beta_min..=self.beta_max).contains(&item.beta)
            && (self.c_min..=self.c_max).contains(&item.c)
    }

    fn project(&self, alpha: f64, beta: f64, c: f64) -> (f64, f64, f64) {
        (
            alpha.clamp(self.alpha_min, self.alpha_max),
            beta.clamp(self.beta_min, self.beta_max),
            c.clamp(self.c_min, self.c_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub validation_fraction: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub bounds: ParamBounds,
    pub seed: u64,
    pub min_logs_per_examinee: usize,
    pub min_logs_per_question: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            max_epochs: 500,
            patience: 10,
            learning_rate: 0.05,
            bounds: ParamBounds::default(),
            seed: 0,
            min_logs_per_examinee: 5,
            min_logs_per_question: 10,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let b = &self.bounds;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CalibrationError::InvalidConfig(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CalibrationError::InvalidConfig("learning rate must be positive".into()));
        }
        let ordered = 0.0 < b.alpha_min
            && b.alpha_min <= b.alpha_max
            && b.beta_min <= b.beta_max
            && 0.0 <= b.c_min
            && b.c_min <= b.c_max
            && b.c_max < 1.0;
        if !ordered {
            return Err(CalibrationError::InvalidConfig(format!("bounds are not ordered: {b:?}")));
        }
        Ok(())
    }
}

/// Summary of one calibration run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub train_loglik: f64,
    pub validation_loglik: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_logs: usize,
    pub validation_logs: usize,
    pub examinees: usize,
    pub questions: usize,
    pub dropped_examinees: usize,
    pub dropped_questions: usize,
    /// All-correct or all-wrong questions; their difficulty sits on a bound.
    pub degenerate: Vec<QuestionId>,
    /// Items whose standardized parameters had to be clipped back into bounds.
    pub clamped_after_standardization: Vec<QuestionId>,
    /// Training log-likelihood after every accepted block step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_loglik_history: Vec<f64>,
}

impl FitReport {
    /// Plain-text rendering written next to the pool file.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("calibration fit report\n");
        s.push_str(&format!("examinees            {}\n", self.examinees));
        s.push_str(&format!("questions            {}\n", self.questions));
        s.push_str(&format!("dropped examinees    {}\n", self.dropped_examinees));
        s.push_str(&format!("dropped questions    {}\n", self.dropped_questions));
        s.push_str(&format!("train logs           {}\n", self.train_logs));
        s.push_str(&format!("validation logs      {}\n", self.validation_logs));
        s.push_str(&format!("epochs run           {}\n", self.epochs_run));
        s.push_str(&format!("best epoch           {}\n", self.best_epoch));
        s.push_str(&format!("stopped early        {}\n", self.stopped_early));
        s.push_str(&format!("train loglik         {:.6}\n", self.train_loglik));
        s.push_str(&format!("validation loglik    {:.6}\n", self.validation_loglik));
        if !self.degenerate.is_empty() {
            let ids: Vec<&str> = self.degenerate.iter().map(|q| q.as_str()).collect();
            s.push_str(&format!("low confidence       {}\n", ids.join(" ")));
        }
        if !self.clamped_after_standardization.is_empty() {
            let ids: Vec<&str> = self.clamped_after_standardization.iter().map(|q| q.as_str()).collect();
            s.push_str(&format!("clamped              {}\n", ids.join(" ")));
        }
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no data left after min-support filtering (need at least 2 questions and 2 examinees)")]
    EmptyDataset,
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
}

/// Result of [`calibrate`]: the pool plus the per-examinee abilities it was
/// fitted with (standardized).
#[derive(Debug, Clone)]
pub struct Calibration {
    pub pool: CalibratedPool,
    pub examinee_abilities: BTreeMap<String, f64>,
}

/// Splits logs into training and validation sets, stratified per examinee.
///
/// Each examinee contributes `round(fraction · n)` of their `n` logs to
/// validation, capped so at least one stays in training. Deterministic for a
/// given seed regardless of input order.
pub fn split_train_validation(
    logs: &[ResponseLog],
    fraction: f64,
    seed: u64,
) -> (Vec<ResponseLog>, Vec<ResponseLog>) {
    let mut by_examinee: BTreeMap<&str, Vec<&ResponseLog>> = BTreeMap::new();
    for log in logs {
        by_examinee.entry(&log.examinee_id).or_default().push(log);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(logs.len());
    let mut validation = Vec::new();
    for (_, mut group) in by_examinee {
        group.sort_by(|a, b| a.question_id.cmp(&b.question_id).then(a.correct.cmp(&b.correct)));
        group.shuffle(&mut rng);
        let n = group.len();
        let n_val = ((fraction * n as f64).round() as usize).min(n - 1);
        validation.extend(group[..n_val].iter().map(|l| (*l).clone()));
        train.extend(group[n_val..].iter().map(|l| (*l).clone()));
    }
    (train, validation)
}

/// Drops duplicate (examinee, question) pairs, keeping the first.
fn dedup(logs: &[ResponseLog]) -> Vec<&ResponseLog> {
    let mut seen = BTreeSet::new();
    logs.iter()
        .filter(|l| seen.insert((l.examinee_id.as_str(), l.question_id.as_str())))
        .collect()
}

/// Repeatedly removes examinees and questions below the support thresholds.
fn filter_support<'a>(mut logs: Vec<&'a ResponseLog>, config: &CalibrationConfig) -> Vec<&'a ResponseLog> {
    loop {
        let mut per_examinee: HashMap<&str, usize> = HashMap::new();
        let mut per_question: HashMap<&str, usize> = HashMap::new();
        for l in &logs {
            *per_examinee.entry(&l.examinee_id).or_insert(0) += 1;
            *per_question.entry(l.question_id.as_str()).or_insert(0) += 1;
        }
        let before = logs.len();
        logs.retain(|l| {
            per_examinee[l.examinee_id.as_str()] >= config.min_logs_per_examinee
                && per_question[l.question_id.as_str()] >= config.min_logs_per_question
        });
        if logs.len() == before {
            return logs;
        }
    }
}

pub(crate) fn dataset_digest(logs: &[&ResponseLog]) -> String {
    let mut lines: Vec<String> = logs
        .iter()
        .map(|l| format!("{}\t{}\t{}\n", l.examinee_id, l.question_id, u8::from(l.correct)))
        .collect();
    lines.sort();
    let mut hasher = Sha256::new();
    for line in &lines {
        hasher.update(line.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Compensated (Neumaier) summation.
fn accurate_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Log-likelihood term and the partial derivative of it with respect to `p`,
/// evaluated through the logistic core for accuracy.
#[inline]
fn term(alpha: f64, beta: f64, c: f64, theta: f64, y: bool) -> (f64, f64, f64, f64) {
    let z = alpha * (theta - beta);
    let e = (-z.abs()).exp();
    let (s, sc) = if z >= 0.0 {
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        (e / (1.0 + e), 1.0 / (1.0 + e))
    };
    let p = (c + (1.0 - c) * s).clamp(EPS_NUM, 1.0 - EPS_NUM);
    let q = ((1.0 - c) * sc).clamp(EPS_NUM, 1.0 - EPS_NUM);
    let (ll, dp) = if y { (p.ln(), 1.0 / p) } else { (q.ln(), -1.0 / q) };
    (ll, dp, s, sc)
}

/// Compressed adjacency: entries of group `g` live in `idx[start[g]..start[g+1]]`.
struct Groups {
    start: Vec<usize>,
    other: Vec<u32>,
    y: Vec<bool>,
}

impl Groups {
    fn build(n_groups: usize, pairs: &[(u32, u32, bool)]) -> Self {
        let mut counts = vec![0usize; n_groups + 1];
        for &(g, _, _) in pairs {
            counts[g as usize + 1] += 1;
        }
        for k in 1..=n_groups {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut other = vec![0u32; pairs.len()];
        let mut y = vec![false; pairs.len()];
        for &(g, o, yy) in pairs {
            let slot = fill[g as usize];
            other[slot] = o;
            y[slot] = yy;
            fill[g as usize] += 1;
        }
        Self { start: counts, other, y }
    }

    fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.start[g]..self.start[g + 1]
    }
}

#[derive(Clone)]
struct State {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    c: Vec<f64>,
    theta: Vec<f64>,
}

struct Fitter<'a> {
    config: &'a CalibrationConfig,
    by_item: Groups,
    by_examinee: Groups,
    frozen: Vec<bool>,
}

const MAX_HALVINGS: usize = 12;
/// Added to each diagonal information entry, per observation.
const FISHER_RIDGE: f64 = 1e-3;

impl Fitter<'_> {
    fn item_loglik(&self, j: usize, a: f64, b: f64, c: f64, theta: &[f64]) -> f64 {
        let r = self.by_item.range(j);
        accurate_sum(
            self.by_item.other[r.clone()]
                .iter()
                .zip(&self.by_item.y[r])
                .map(|(&i, &y)| term(a, b, c, theta[i as usize], y).0),
        )
    }

    fn examinee_loglik(&self, i: usize, theta: f64, st: &State) -> f64 {
        let r = self.by_examinee.range(i);
        accurate_sum(
            self.by_examinee.other[r.clone()]
                .iter()
                .zip(&self.by_examinee.y[r])
                .map(|(&j, &y)| {
                    let j = j as usize;
                    term(st.alpha[j], st.beta[j], st.c[j], theta, y).0
                }),
        )
    }

    fn total_loglik(&self, st: &State) -> f64 {
        accurate_sum(
            (0..st.alpha.len()).map(|j| self.item_loglik(j, st.alpha[j], st.beta[j], st.c[j], &st.theta)),
        )
    }

    /// One projected step per item; returns the summed item log-likelihoods.
    fn item_step(&self, st: &mut State) -> f64 {
        let lr = self.config.learning_rate;
        let bounds = &self.config.bounds;
        let mut totals = Vec::with_capacity(st.alpha.len());
        for j in 0..st.alpha.len() {
            let r = self.by_item.range(j);
            if r.is_empty() {
                continue;
            }
            let (a, b, c) = (st.alpha[j], st.beta[j], st.c[j]);
            if self.frozen[j] {
                totals.push(self.item_loglik(j, a, b, c, &st.theta));
                continue;
            }
            let mut g = [0.0f64; 3];
            let mut info = [0.0f64; 3];
            let mut ll = Vec::with_capacity(r.len());
            for (&i, &y) in self.by_item.other[r.clone()].iter().zip(&self.by_item.y[r.clone()]) {
                let theta = st.theta[i as usize];
                let (l, dp, s, sc) = term(a, b, c, theta, y);
                ll.push(l);
                let pq = ((c + (1.0 - c) * s) * (1.0 - c) * sc).max(EPS_NUM);
                let core = (1.0 - c) * s * sc;
                let d = [core * (theta - b), -core * a, sc];
                for k in 0..3 {
                    g[k] += dp * d[k];
                    info[k] += d[k] * d[k] / pq;
                }
            }
            let ridge = FISHER_RIDGE * r.len() as f64;
            let dir: Vec<f64> = (0..3).map(|k| g[k] / (info[k] + ridge)).collect();
            let base = accurate_sum(ll);
            let mut best = base;
            let mut step = lr;
            for _ in 0..MAX_HALVINGS {
                let (na, nb, nc) = bounds.project(a + step * dir[0], b + step * dir[1], c + step * dir[2]);
                if (na, nb, nc) == (a, b, c) {
                    break;
                }
                let cand = self.item_loglik(j, na, nb, nc, &st.theta);
                if cand >= base {
                    st.alpha[j] = na;
                    st.beta[j] = nb;
                    st.c[j] = nc;
                    best = cand;
                    break;
                }
                step *= 0.5;
            }
            totals.push(best);
        }
        accurate_sum(totals)
    }

    /// One projected step per examinee; returns the summed examinee
    /// log-likelihoods.
    fn ability_step(&self, st: &mut State) -> f64 {
        let lr = self.config.learning_rate;
        let mut totals = Vec::with_capacity(st.theta.len());
        for i in 0..st.theta.len() {
            let r = self.by_examinee.range(i);
            if r.is_empty() {
                continue;
            }
            let theta = st.theta[i];
            let (mut g, mut info, mut ll) = (0.0, 0.0, Vec::with_capacity(r.len()));
            for (&j, &y) in self.by_examinee.other[r.clone()].iter().zip(&self.by_examinee.y[r.clone()]) {
                let j = j as usize;
                let (a, c) = (st.alpha[j], st.c[j]);
                let (l, dp, s, sc) = term(a, st.beta[j], c, theta, y);
                ll.push(l);
                let d = (1.0 - c) * a * s * sc;
                let pq = ((c + (1.0 - c) * s) * (1.0 - c) * sc).max(EPS_NUM);
                g += dp * d;
                info += d * d / pq;
            }
            let dir = g / (info + FISHER_RIDGE * r.len() as f64);
            let base = accurate_sum(ll);
            let mut best = base;
            let mut step = lr;
            for _ in 0..MAX_HALVINGS {
                let nt = (theta + step * dir).clamp(THETA_MIN, THETA_MAX);
                if nt == theta {
                    break;
                }
                let cand = self.examinee_loglik(i, nt, st);
                if cand >= base {
                    st.theta[i] = nt;
                    best = cand;
                    break;
                }
                step *= 0.5;
            }
            totals.push(best);
        }
        accurate_sum(totals)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(0.02, 0.98);
    (p / (1.0 - p)).ln()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = accurate_sum(values.iter().copied()) / n;
    let var = accurate_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

/// Outcome of rescaling a fitted solution onto the standardized ability scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub items: Vec<ItemParams>,
    pub abilities: Vec<f64>,
    /// Items whose rescaled parameters fell outside `bounds` and were clipped.
    pub clamped: Vec<QuestionId>,
}

/// Rescales abilities to mean 0 / population sd 1 and transforms items so
/// every `α(θ − β)` is unchanged: `θ' = (θ − μ)/σ`, `β' = (β − μ)/σ`,
/// `α' = α σ`. Items pushed outside `bounds` are clipped and reported.
pub fn standardize(items: &[ItemParams], abilities: &[f64], bounds: &ParamBounds) -> Standardized {
    let (mean, sd) = mean_sd(abilities);
    let sd = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    let abilities = abilities.iter().map(|t| (t - mean) / sd).collect();
    let mut clamped = Vec::new();
    let items = items
        .iter()
        .map(|it| {
            let alpha = it.alpha * sd;
            let beta = (it.beta - mean) / sd;
            let (a, b, c) = bounds.project(alpha, beta, it.c);
            if a != alpha || b != beta || c != it.c {
                clamped.push(it.question_id.clone());
            }
            ItemParams {
                alpha: a,
                beta: b,
                c,
                ..it.clone()
            }
        })
        .collect();
    Standardized {
        items,
        abilities,
        clamped,
    }
}

/// Calibrates a pool from response logs with no concept tags.
pub fn calibrate(logs: &[ResponseLog], config: &CalibrationConfig) -> Result<Calibration, CalibrationError> {
    calibrate_with_concepts(logs, &BTreeMap::new(), config)
}

/// Calibrates a pool, tagging items with `concepts` and estimating per-concept
/// human ability distributions.
pub fn calibrate_with_concepts(
    logs: &[ResponseLog],
    concepts: &BTreeMap<QuestionId, String>,
    config: &CalibrationConfig,
) -> Result<Calibration, CalibrationError> {
    config.validate()?;
    let unique = dedup(logs);
    let filtered = filter_support(unique, config);

    let examinee_ids: Vec<&str> = filtered
        .iter()
        .map(|l| l.examinee_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let question_ids: Vec<&QuestionId> = filtered
        .iter()
        .map(|l| &l.question_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if examinee_ids.len() < 2 || question_ids.len() < 2 {
        return Err(CalibrationError::EmptyDataset);
    }
    let all_examinees: BTreeSet<&str> = logs.iter().map(|l| l.examinee_id.as_str()).collect();
    let all_questions: BTreeSet<&str> = logs.iter().map(|l| l.question_id.as_str()).collect();

    let e_index: HashMap<&str, u32> = examinee_ids.iter().enumerate().map(|(k, &e)| (e, k as u32)).collect();
    let q_index: HashMap<&str, u32> = question_ids
        .iter()
        .enumerate()
        .map(|(k, q)| (q.as_str(), k as u32))
        .collect();
    let (m, n) = (examinee_ids.len(), question_ids.len());

    let owned: Vec<ResponseLog> = filtered.iter().map(|l| (*l).clone()).collect();
    let (train, validation) = split_train_validation(&owned, config.validation_fraction, config.seed);
    let encode = |logs: &[ResponseLog]| -> Vec<(u32, u32, bool)> {
        logs.iter()
            .map(|l| (e_index[l.examinee_id.as_str()], q_index[l.question_id.as_str()], l.correct))
            .collect()
    };
    let train_enc = encode(&train);
    let val_enc = encode(&validation);

    let by_item = Groups::build(n, &train_enc.iter().map(|&(e, q, y)| (q, e, y)).collect::<Vec<_>>());
    let by_examinee = Groups::build(m, &train_enc);
    let val_by_item = Groups::build(n, &val_enc.iter().map(|&(e, q, y)| (q, e, y)).collect::<Vec<_>>());

    // Degeneracy is judged on all surviving logs.
    let mut right = vec![0usize; n];
    let mut total = vec![0usize; n];
    for l in &filtered {
        let j = q_index[l.question_id.as_str()] as usize;
        total[j] += 1;
        right[j] += usize::from(l.correct);
    }
    let b = config.bounds;
    let frozen: Vec<bool> = (0..n).map(|j| right[j] == 0 || right[j] == total[j]).collect();

    let mut st = State {
        alpha: vec![1.0f64.clamp(b.alpha_min, b.alpha_max); n],
        beta: (0..n)
            .map(|j| {
                if right[j] == total[j] {
                    b.beta_min
                } else if right[j] == 0 {
                    b.beta_max
                } else {
                    (-logit(right[j] as f64 / total[j] as f64)).clamp(b.beta_min, b.beta_max)
                }
            })
            .collect(),
        c: (0..n).map(|j| if frozen[j] { b.c_min } else { 0.1f64.clamp(b.c_min, b.c_max) }).collect(),
        theta: vec![0.0; m],
    };
    {
        let mut right_e = vec![0usize; m];
        let mut total_e = vec![0usize; m];
        for &(e, _, y) in &train_enc {
            total_e[e as usize] += 1;
            right_e[e as usize] += usize::from(y);
        }
        let raw: Vec<f64> = (0..m).map(|i| logit(right_e[i] as f64 / total_e[i].max(1) as f64)).collect();
        let (mu, sd) = mean_sd(&raw);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        st.theta = raw.iter().map(|t| ((t - mu) / sd).clamp(THETA_MIN, THETA_MAX)).collect();
    }

    let fitter = Fitter {
        config,
        by_item,
        by_examinee,
        frozen: frozen.clone(),
    };
    let validation_loglik = |st: &State| -> f64 {
        accurate_sum((0..n).map(|j| {
            let r = val_by_item.range(j);
            accurate_sum(
                val_by_item.other[r.clone()]
                    .iter()
                    .zip(&val_by_item.y[r])
                    .map(|(&i, &y)| term(st.alpha[j], st.beta[j], st.c[j], st.theta[i as usize], y).0),
            )
        }))
    };

    let mut history = vec![fitter.total_loglik(&st)];
    let mut best = st.clone();
    let mut best_val = validation_loglik(&st);
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        history.push(fitter.item_step(&mut st));
        history.push(fitter.ability_step(&mut st));

        let val = validation_loglik(&st);
        if val > best_val || validation.is_empty() {
            best_val = val;
            best = st.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let train_loglik = fitter.total_loglik(&best);
    let fitted: Vec<ItemParams> = (0..n)
        .map(|j| ItemParams {
            question_id: question_ids[j].clone(),
            alpha: best.alpha[j],
            beta: best.beta[j],
            c: best.c[j],
            concept: concepts.get(question_ids[j]).cloned(),
        })
        .collect();
    let std = standardize(&fitted, &best.theta, &b);

    let examinee_abilities: BTreeMap<String, f64> = examinee_ids
        .iter()
        .zip(&std.abilities)
        .map(|(e, t)| ((*e).to_owned(), *t))
        .collect();
    let items: BTreeMap<QuestionId, ItemParams> = std
        .items
        .into_iter()
        .map(|it| (it.question_id.clone(), it))
        .collect();
    let degenerate: Vec<QuestionId> = (0..n).filter(|&j| frozen[j]).map(|j| question_ids[j].clone()).collect();

    let concept_abilities = concept_distributions(&owned, &items, config.min_logs_per_examinee);

    let fit_report = FitReport {
        train_loglik,
        validation_loglik: best_val,
        epochs_run,
        best_epoch,
        stopped_early,
        train_logs: train.len(),
        validation_logs: validation.len(),
        examinees: m,
        questions: n,
        dropped_examinees: all_examinees.len() - m,
        dropped_questions: all_questions.len() - n,
        degenerate: degenerate.clone(),
        clamped_after_standardization: std.clamped,
        train_loglik_history: history,
    };

    let pool = CalibratedPool {
        items,
        content: BTreeMap::new(),
        human_abilities: AbilityDistribution::from_values(std.abilities),
        concept_abilities,
        low_confidence: degenerate.into_iter().collect(),
        fit_report: Some(fit_report),
        provenance: Provenance {
            config: Some(config.clone()),
            dataset_digest: dataset_digest(&filtered),
        },
    };
    Ok(Calibration {
        pool,
        examinee_abilities,
    })
}

/// Per-concept ability distributions: each examinee with at least `min_logs`
/// answers on a concept's items gets an MLE ability from those answers alone.
fn concept_distributions(
    logs: &[ResponseLog],
    items: &BTreeMap<QuestionId, ItemParams>,
    min_logs: usize,
) -> BTreeMap<String, AbilityDistribution> {
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<GradedResponse>>> = BTreeMap::new();
    for l in logs {
        let Some(item) = items.get(&l.question_id) else { continue };
        let Some(concept) = item.concept.as_deref() else { continue };
        let per = grouped.entry(concept).or_default().entry(&l.examinee_id).or_default();
        let step_index = per.len() + 1;
        per.push(GradedResponse {
            item: item.clone(),
            correct: l.correct,
            step_index,
        });
    }
    grouped
        .into_iter()
        .map(|(concept, per)| {
            let values = per
                .values()
                .filter(|rs| rs.len() >= min_logs.max(1))
                .filter_map(|rs| estimate_ability(rs).ok())
                .map(|e| e.theta_hat)
                .collect();
            (concept.to_owned(), AbilityDistribution::from_values(values))
        })
        .collect()
}

/// Summary of a pool's item parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStatistics {
    pub question_count: usize,
    pub concept_counts: BTreeMap<String, usize>,
    pub alpha: ParamSummary,
    pub beta: ParamSummary,
    pub c: ParamSummary,
    /// Largest difficulty.
    pub hardest: QuestionId,
    /// Smallest difficulty.
    pub easiest: QuestionId,
    pub most_discriminating: QuestionId,
    pub least_discriminating: QuestionId,
    pub most_guessable: QuestionId,
    pub least_guessable: QuestionId,
    /// Questions with `c` above [`GUESSABLE_THRESHOLD`].
    pub guessable: Vec<QuestionId>,
    pub low_confidence: Vec<QuestionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub const GUESSABLE_THRESHOLD: f64 = 0.9;

/// Pool summary. Returns `None` for an empty pool. Extremes tie-break on the
/// smallest question id.
pub fn pool_statistics(pool: &CalibratedPool) -> Option<PoolStatistics> {
    if pool.is_empty() {
        return None;
    }
    let items: Vec<&ItemParams> = pool.items.values().collect();
    let summary = |f: fn(&ItemParams) -> f64| {
        let vals: Vec<f64> = items.iter().map(|it| f(it)).collect();
        ParamSummary {
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: accurate_sum(vals.iter().copied()) / vals.len() as f64,
        }
    };
    // items are in id order, so strict comparisons keep the smallest id
    let argmax = |f: fn(&ItemParams) -> f64| {
        let mut best = items[0];
        for it in &items[1..] {
            if f(it) > f(best) {
                best = it;
            }
        }
        best.question_id.clone()
    };
    let argmin = |f: fn(&ItemParams) -> f64| {
        let mut best = items[0];
        for it in &items[1..] {
            if f(it) < f(best) {
                best = it;
            }
        }
        best.question_id.clone()
    };
    Some(PoolStatistics {
        question_count: items.len(),
        concept_counts: pool.concepts(),
        alpha: summary(|it| it.alpha),
        beta: summary(|it| it.beta),
        c: summary(|it| it.c),
        hardest: argmax(|it| it.beta),
        easiest: argmin(|it| it.beta),
        most_discriminating: argmax(|it| it.alpha),
        least_discriminating: argmin(|it| it.alpha),
        most_guessable: argmax(|it| it.c),
        least_guessable: argmin(|it| it.c),
        guessable: items
            .iter()
            .filter(|it| it.c > GUESSABLE_THRESHOLD)
            .map(|it| it.question_id.clone())
            .collect(),
        low_confidence: pool.low_confidence.iter().cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logs_for(examinee: &str, n: usize) -> Vec<ResponseLog> {
        (0..n)
            .map(|k| ResponseLog::new(examinee, format!("q{k}"), k % 2 == 0))
            .collect()
    }

    #[test]
    fn tiny_dataset_is_empty_after_filtering() {
        let logs = vec![ResponseLog::new("e1", "q1", true), ResponseLog::new("e1", "q2", false)];
        assert_eq!(
            calibrate(&logs, &CalibrationConfig::default()).unwrap_err(),
            CalibrationError::EmptyDataset
        );
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let config = CalibrationConfig {
            validation_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            calibrate(&[], &config),
            Err(CalibrationError::InvalidConfig(_))
        ));
    }

    #[test]
    fn split_ten_logs() {
        let logs = logs_for("e1", 10);
        let (train, val) = split_train_validation(&logs, 0.2, 7);
        assert_eq!((train.len(), val.len()), (8, 2));
        let (train2, val2) = split_train_validation(&logs, 0.2, 7);
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        let mut reversed = logs.clone();
        reversed.reverse();
        let (train3, _) = split_train_validation(&reversed, 0.2, 7);
        assert_eq!(train, train3);
    }

    #[test]
    fn single_log_stays_in_training() {
        let logs = logs_for("e1", 1);
        let (train, val) = split_train_validation(&logs, 0.9, 1);
        assert_eq!(train.len(), 1);
        assert!(val.is_empty());
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let mut logs = Vec::new();
        for e in 0..20 {
            logs.extend(logs_for(&format!("e{e}"), 1 + e % 7));
        }
        let (train, val) = split_train_validation(&logs, 0.3, 3);
        assert_eq!(train.len() + val.len(), logs.len());
        let mut all: Vec<_> = train.iter().chain(&val).cloned().collect();
        all.sort_by(|a, b| (&a.examinee_id, &a.question_id).cmp(&(&b.examinee_id, &b.question_id)));
        let mut orig = logs.clone();
        orig.sort_by(|a, b| (&a.examinee_id, &a.question_id).cmp(&(&b.examinee_id, &b.question_id)));
        assert_eq!(all, orig);
        let train_examinees: BTreeSet<_> = train.iter().map(|l| &l.examinee_id).collect();
        assert_eq!(train_examinees.len(), 20);
    }

    #[test]
    fn neumaier_beats_naive() {
        let vals = [1e16, 1.0, -1e16];
        assert_eq!(accurate_sum(vals), 1.0);
    }

    #[test]
    fn statistics_extremes() {
        let pool = CalibratedPool::from_items([
            ItemParams::new("a", 1.0, -1.0, 0.1).unwrap(),
            ItemParams::new("b", 2.0, 0.0, 0.951).unwrap(),
            ItemParams::new("c", 0.5, 2.0, 0.0).unwrap(),
        ]);
        let s = pool_statistics(&pool).unwrap();
        assert_eq!(s.hardest, "c".into());
        assert_eq!(s.easiest, "a".into());
        assert_eq!(s.most_discriminating, "b".into());
        assert_eq!(s.guessable, vec![QuestionId::from("b")]);
        assert!((s.beta.mean - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn statistics_single_item() {
        let pool = CalibratedPool::from_items([ItemParams::new("only", 1.0, 0.3, 0.2).unwrap()]);
        let s = pool_statistics(&pool).unwrap();
        assert_eq!(s.hardest, s.easiest);
        assert_eq!(s.hardest, "only".into());
    }

    #[test]
    fn statistics_tie_break_on_id() {
        let pool = CalibratedPool::from_items([
            ItemParams::new("b", 1.0, 1.0, 0.0).unwrap(),
            ItemParams::new("a", 1.0, 1.0, 0.0).unwrap(),
        ]);
        let s = pool_statistics(&pool).unwrap();
        assert_eq!(s.hardest, "a".into());
        assert_eq!(s.easiest, "a".into());
    }

    #[test]
    fn empty_pool_has_no_statistics() {
        assert!(pool_statistics(&CalibratedPool::default()).is_none());
    }

    #[test]
    fn standardize_preserves_logits() {
        let items = vec![ItemParams::new("a", 1.2, 0.5, 0.1).unwrap()];
        let thetas = vec![-1.0, 0.0, 2.5, 0.3];
        let s = standardize(&items, &thetas, &ParamBounds::default());
        for (t, t2) in thetas.iter().zip(&s.abilities) {
            let before = 1.2 * (t - 0.5);
            let after = s.items[0].alpha * (t2 - s.items[0].beta);
            assert!((before - after).abs() < 1e-12);
        }
        assert!(s.clamped.is_empty());
    }
}
