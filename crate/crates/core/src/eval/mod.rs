//! Metrics, confidence intervals and the study runners.

mod compare;
mod metrics;
mod report;
mod studies;

pub use compare::{
    averaging_time_curve, calibrate_detectors, compare_detectors, AveragingSpec, Calibration, CompareSpec, Comparison,
};
pub use metrics::{
    classification_metrics, detection_rates, error_metrics, evaluate, improvement_delta, regression_metrics,
    relative_improvement, score_windows, summarize, wilson_interval, ClassificationMetrics, ConfusionCounts,
    DetectionRates, EvalOptions, MetricDelta, Metrics, WindowScore, WILSON_Z,
};
pub use report::{mean_std, ReportRow, StudyKind, StudyReport};
pub use studies::{
    default_scenarios, feature_ablation, robustness, sequence_length, single_vs_multi, snr_bin, snr_sweep,
    snr_sweep_scores, train_seeded, Scenario, StudyPlan,
};

#[cfg(test)]
mod tests;
