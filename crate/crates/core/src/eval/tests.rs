use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn classification_examples() {
    let all = ConfusionCounts { n_tp: 10, n_tn: 5, n_fp: 0, n_fn: 0 };
    let m = classification_metrics(&all).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.f1, Some(1.0));

    let c = ConfusionCounts { n_tp: 45, n_tn: 48, n_fp: 2, n_fn: 5 };
    let m = classification_metrics(&c).unwrap();
    assert!(close(m.accuracy, 0.93, 1e-12));
    assert!(close(m.precision.unwrap(), 45.0 / 47.0, 1e-12));
    assert!(close(m.precision.unwrap(), 0.957, 5e-4));
    assert!(close(m.recall.unwrap(), 0.90, 1e-12));

    let none = ConfusionCounts { n_tp: 0, n_tn: 4, n_fp: 0, n_fn: 0 };
    let m = classification_metrics(&none).unwrap();
    assert_eq!(m.precision, None);
    assert_eq!(m.recall, None);
    assert_eq!(m.f1, None);
    assert!(classification_metrics(&ConfusionCounts::default()).is_err());
}

#[test]
fn paper_table_row_is_consistent() {
    // precision 96.6 % and recall 88 % give F1 92.1 %
    let (p, r): (f64, f64) = (0.966, 0.88);
    assert!(close(2.0 * p * r / (p + r), 0.921, 5e-4));
}

#[test]
fn wilson_examples() {
    assert_eq!(wilson_interval(37, 50, 0.0).unwrap(), (0.74, 0.74));
    assert_eq!(wilson_interval(20, 20, 1.96).unwrap().1, 1.0);
    let (lo, hi) = wilson_interval(93, 100, 1.96).unwrap();
    // closed form evaluated independently: centre 0.91758..., half-width 0.05063...
    assert!(close(lo, 0.8625, 1e-3), "{lo}");
    assert!(close(hi, 0.9656, 1e-3), "{hi}");
    assert!(wilson_interval(3, 2, 1.96).is_err());
    assert!(wilson_interval(0, 0, 1.96).is_err());
}

#[test]
fn regression_examples() {
    assert_eq!(regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
    assert_eq!(error_metrics(&[3.0, -3.0]).unwrap(), (3.0, 3.0));
    assert_eq!(error_metrics(&[0.0, 0.0, 0.0, 6.0]).unwrap(), (3.0, 1.5));
    assert!(error_metrics(&[]).is_err());
    assert!(regression_metrics(&[1.0], &[]).is_err());
}

#[test]
fn detection_rate_examples() {
    let r = detection_rates(&ConfusionCounts { n_tp: 9, n_tn: 90, n_fp: 10, n_fn: 1 });
    assert!(close(r.p_d.unwrap(), 0.9, 1e-12));
    assert!(close(r.p_fa.unwrap(), 0.1, 1e-12));
    let r = detection_rates(&ConfusionCounts { n_tp: 4, n_tn: 0, n_fp: 0, n_fn: 0 });
    assert_eq!(r.p_d, Some(1.0));
    assert_eq!(r.p_fa, None);
}

fn metrics_with(rmse_p: f64, rmse_r: f64) -> Metrics {
    Metrics {
        counts: ConfusionCounts::default(),
        accuracy: Some(0.9),
        accuracy_interval: None,
        precision: Some(0.9),
        recall: Some(0.8),
        f1: Some(0.85),
        rmse_position_m: Some(rmse_p),
        mae_position_m: Some(1.0),
        rmse_reflectance_db: Some(rmse_r),
        mae_reflectance_db: Some(2.0),
        n_positive: 0,
    }
}

#[test]
fn improvement_examples() {
    let m = metrics_with(2.17, 3.65);
    assert!(improvement_delta(&m, &m).iter().all(|d| d.delta == Some(0.0)));
    let single = metrics_with(4.4, 5.0);
    let d = improvement_delta(&m, &single);
    let get = |name: &str| d.iter().find(|x| x.metric == name).unwrap().delta.unwrap();
    assert!(close(get("rmse_position_m"), 0.507, 5e-4));
    assert!(close(get("rmse_reflectance_db"), 0.27, 1e-12));
    assert_eq!(relative_improvement(1.0, 0.0), None);
}

#[test]
fn recall_equals_detection_probability() {
    let c = ConfusionCounts { n_tp: 17, n_tn: 30, n_fp: 3, n_fn: 6 };
    assert_eq!(classification_metrics(&c).unwrap().recall, detection_rates(&c).p_d);
}

#[test]
fn report_axis_must_increase() {
    let mut r = StudyReport::new(StudyKind::SnrSweep, "snr_db");
    r.push(2.0, "", "accuracy", Some(0.5));
    r.push(2.0, "", "f1", Some(0.5));
    r.push(3.0, "", "accuracy", Some(0.6));
    assert!(r.validate().is_ok());
    assert_eq!(r.value(3.0, "", "accuracy"), Some(0.6));
    r.push(2.5, "", "accuracy", Some(0.6));
    assert!(r.validate().is_err());
}

#[test]
fn seed_summary_rows() {
    let mut r = StudyReport::new(StudyKind::FeatureAblation, "feature_set_index");
    r.push_seed_summary(0.0, "base", "accuracy", &[0.9, 0.92, 0.94]);
    let row = r.row(0.0, "base", "accuracy").unwrap();
    assert!(close(row.value.unwrap(), 0.92, 1e-12));
    assert!(row.lower.unwrap() < 0.92 && row.upper.unwrap() > 0.92);
    assert!(r.value(0.0, "base", "accuracy_std").is_some());
}

proptest! {
    #[test]
    fn wilson_contains_point_and_narrows(k in 0usize..50, n in 1usize..50, z in 0.0f64..4.0) {
        let k = k.min(n);
        let (lo, hi) = wilson_interval(k, n, z).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        if z > 0.1 && k > 0 && k < n {
            let (lo2, hi2) = wilson_interval(4 * k, 4 * n, z).unwrap();
            prop_assert!(hi2 - lo2 < hi - lo);
        }
    }

    #[test]
    fn rmse_dominates_mae(errors in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
        let (rmse, mae) = error_metrics(&errors).unwrap();
        prop_assert!(rmse + 1e-9 >= mae);
    }
}

#[test]
fn summarize_scores_positives_only() {
    let scores = vec![
        WindowScore { snr_db: 3.2, actual: true, p_event: Some(0.9), detected: true, position_error_m: Some(1.6), reflectance_error_db: Some(-2.0) },
        WindowScore { snr_db: 3.2, actual: false, p_event: Some(0.7), detected: true, position_error_m: None, reflectance_error_db: None },
        WindowScore { snr_db: 9.9, actual: true, p_event: Some(0.1), detected: false, position_error_m: Some(0.0), reflectance_error_db: Some(2.0) },
    ];
    let m = summarize(&scores);
    assert_eq!(m.counts, ConfusionCounts { n_tp: 1, n_tn: 0, n_fp: 1, n_fn: 1 });
    assert!(close(m.rmse_reflectance_db.unwrap(), 2.0, 1e-12));
    assert!(close(m.mae_position_m.unwrap(), 0.8, 1e-12));
    let bins: Vec<i64> = snr_sweep_scores(&scores).into_iter().map(|b| b.0).collect();
    assert_eq!(bins, vec![3, 10]);
}
