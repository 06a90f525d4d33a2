use std::collections::BTreeMap;

use adaptest_core::calibration::{calibrate, calibrate_with_concepts, split_train_validation, CalibrationConfig};
use adaptest_core::irt::QuestionId;
use adaptest_core::simulator::{generate_logs, generate_pool};
use adaptest_core::ResponseLog;

fn small_dataset() -> (Vec<ResponseLog>, adaptest_core::CalibratedPool) {
    let truth = generate_pool(30, 11);
    let (logs, _) = generate_logs(&truth, 400, None, 12);
    (logs, truth)
}

fn fast_config() -> CalibrationConfig {
    CalibrationConfig {
        max_epochs: 60,
        ..CalibrationConfig::default()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[test]
fn training_likelihood_never_decreases() {
    let (logs, _) = small_dataset();
    let cal = calibrate(&logs, &fast_config()).unwrap();
    let history = &cal.pool.fit_report.as_ref().unwrap().train_loglik_history;
    assert!(history.len() > 2);
    for w in history.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn abilities_are_standardized() {
    let (logs, _) = small_dataset();
    let cal = calibrate(&logs, &fast_config()).unwrap();
    let values: Vec<f64> = cal.examinee_abilities.values().copied().collect();
    let (m, sd) = mean_sd(&values);
    assert!(m.abs() <= 1e-6, "mean {m}");
    assert!((sd - 1.0).abs() <= 1e-6, "sd {sd}");
    let h = &cal.pool.human_abilities;
    assert_eq!(h.len(), values.len());
}

#[test]
fn parameters_respect_bounds() {
    let (logs, _) = small_dataset();
    let config = fast_config();
    let cal = calibrate(&logs, &config).unwrap();
    for it in cal.pool.items.values() {
        assert!(config.bounds.contains(it), "{it:?}");
        assert!(it.validate().is_ok());
    }
}

#[test]
fn calibration_is_deterministic() {
    let (logs, _) = small_dataset();
    let a = calibrate(&logs, &fast_config()).unwrap();
    let b = calibrate(&logs, &fast_config()).unwrap();
    assert_eq!(a.pool, b.pool);
    assert_eq!(a.examinee_abilities, b.examinee_abilities);
    let other_seed = CalibrationConfig { seed: 5, ..fast_config() };
    let c = calibrate(&logs, &other_seed).unwrap();
    assert_ne!(a.pool.fit_report, c.pool.fit_report);
}

#[test]
fn recovers_difficulty_ordering_on_small_data() {
    let (logs, truth) = small_dataset();
    let cal = calibrate(&logs, &CalibrationConfig::default()).unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = truth
        .items
        .values()
        .map(|t| (t.beta, cal.pool.items[&t.question_id].beta))
        .unzip();
    let (mx, sx) = mean_sd(&x);
    let (my, sy) = mean_sd(&y);
    let r = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 * sx * sy);
    assert!(r > 0.9, "beta correlation {r}");
}

#[test]
fn degenerate_questions_are_flagged_not_fatal() {
    let (mut logs, _) = small_dataset();
    for l in logs.iter_mut().filter(|l| l.question_id.as_str() == "q0003") {
        l.correct = true;
    }
    let cal = calibrate(&logs, &fast_config()).unwrap();
    let id = QuestionId::from("q0003");
    assert!(cal.pool.low_confidence.contains(&id));
    assert!(cal.pool.fit_report.as_ref().unwrap().degenerate.contains(&id));
    // Pinned at the lower difficulty bound, so it stays the easiest item.
    let easiest = cal.pool.items.values().map(|it| it.beta).fold(f64::INFINITY, f64::min);
    assert_eq!(cal.pool.items[&id].beta, easiest);
}

#[test]
fn concept_tags_and_distributions() {
    let (logs, _) = small_dataset();
    let concepts: BTreeMap<QuestionId, String> = (0..30)
        .map(|k| (QuestionId(format!("q{k:04}")), if k < 15 { "Algebra" } else { "Geometry" }.to_owned()))
        .collect();
    let cal = calibrate_with_concepts(&logs, &concepts, &fast_config()).unwrap();
    assert_eq!(cal.pool.concepts().get("Algebra"), Some(&15));
    let algebra = &cal.pool.concept_abilities["Algebra"];
    assert_eq!(algebra.len(), 400);
}

#[test]
fn split_sizes_differ_by_at_most_examinee_count() {
    // 66,437 logs over 1,500 examinees, split in half.
    let mut logs = Vec::with_capacity(66_437);
    for k in 0..66_437usize {
        let e = k % 1_500;
        logs.push(ResponseLog::new(format!("e{e}"), format!("q{k}"), k % 3 == 0));
    }
    let (train, val) = split_train_validation(&logs, 0.5, 9);
    assert_eq!(train.len() + val.len(), logs.len());
    assert!(train.len().abs_diff(val.len()) <= 1_500);
    let (train2, val2) = split_train_validation(&logs, 0.5, 9);
    assert_eq!((train, val), (train2, val2));
}

#[test]
fn table_scale_dataset_completes() {
    // 2,242 questions and 176,155 logs.
    let truth = generate_pool(2_242, 21);
    let (mut logs, _) = generate_logs(&truth, 8_008, Some(22), 22);
    logs.truncate(176_155);
    let cal = calibrate(&logs, &CalibrationConfig::default()).unwrap();
    assert_eq!(cal.pool.len(), 2_242);
    let report = cal.pool.fit_report.unwrap();
    assert_eq!(report.train_logs + report.validation_logs, 176_155 - 1);
    assert_eq!(report.dropped_examinees, 1);
}
