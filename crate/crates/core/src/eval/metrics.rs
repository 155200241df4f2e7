use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{decode_reflectance, WindowSample};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{predict_all, ModelParams};

/// Default critical value of the Wilson interval (95 %).
pub const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_tp: usize,
    pub n_tn: usize,
    pub n_fp: usize,
    pub n_fn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.n_tp + self.n_tn + self.n_fp + self.n_fn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.n_tp += 1,
            (false, false) => self.n_tn += 1,
            (true, false) => self.n_fp += 1,
            (false, true) => self.n_fn += 1,
        }
    }

    pub fn correct(&self) -> usize {
        self.n_tp + self.n_tn
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Rates with a zero denominator are `None` rather than 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classification_metrics(counts: &ConfusionCounts) -> Result<ClassificationMetrics> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::invalid("no instances to score"));
    }
    let precision = ratio(counts.n_tp, counts.n_tp + counts.n_fp);
    let recall = ratio(counts.n_tp, counts.n_tp + counts.n_fn);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(ClassificationMetrics {
        accuracy: counts.correct() as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::invalid(alloc::format!(
            "Wilson interval needs 0 <= k <= n, n >= 1 (k = {successes}, n = {trials})"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * math::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lower.min(p), upper.max(p)))
}

/// `(rmse, mae)` of `pred - truth`.
pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::invalid("prediction and truth lengths differ"));
    }
    let errors: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    error_metrics(&errors)
}

/// `(rmse, mae)` of precomputed errors.
pub fn error_metrics(errors: &[f64]) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::invalid("no errors to summarize"));
    }
    let n = errors.len() as f64;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    Ok((math::sqrt(mse), mae))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub p_d: Option<f64>,
    pub p_fa: Option<f64>,
}

pub fn detection_rates(counts: &ConfusionCounts) -> DetectionRates {
    DetectionRates {
        p_d: ratio(counts.n_tp, counts.n_tp + counts.n_fn),
        p_fa: ratio(counts.n_fp, counts.n_fp + counts.n_tn),
    }
}

/// Everything reported for one evaluated set of windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub accuracy_interval: Option<(f64, f64)>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub rmse_position_m: Option<f64>,
    pub mae_position_m: Option<f64>,
    pub rmse_reflectance_db: Option<f64>,
    pub mae_reflectance_db: Option<f64>,
    pub n_positive: usize,
}

impl Metrics {
    /// `(name, value)` pairs in report order.
    pub fn named(&self) -> [(&'static str, Option<f64>); 9] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("rmse_position_m", self.rmse_position_m),
            ("mae_position_m", self.mae_position_m),
            ("rmse_reflectance_db", self.rmse_reflectance_db),
            ("mae_reflectance_db", self.mae_reflectance_db),
            ("n", Some(self.counts.total() as f64)),
        ]
    }
}

/// Outcome of the model on one labelled window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub snr_db: f64,
    pub actual: bool,
    pub p_event: Option<f64>,
    pub detected: bool,
    /// Positives only; against the nearest true event in the window.
    pub position_error_m: Option<f64>,
    pub reflectance_error_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// `p_event` above which a window is called positive.
    pub threshold: f64,
    pub sampling_interval_m: f64,
    pub reflectance_range: (f64, f64),
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            sampling_interval_m: 0.8,
            reflectance_range: crate::dataset::DEFAULT_REFLECTANCE_RANGE,
        }
    }
}

/// Scores every window; regression errors are de-normalized to meters and dB.
pub fn score_windows<'a, I>(params: &ModelParams, windows: I, opts: &EvalOptions) -> Result<Vec<WindowScore>>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let windows: Vec<&WindowSample> = windows.into_iter().collect();
    let preds = predict_all(params, windows.iter().copied())?;
    let mut out = Vec::with_capacity(windows.len());
    for (w, p) in windows.iter().zip(preds) {
        let t = w
            .targets
            .as_ref()
            .ok_or_else(|| Error::invalid("cannot score a window without targets"))?;
        let scale = (w.features.len().max(2) - 1) as f64 * opts.sampling_interval_m;
        let position_error_m = match (t.is_positive(), p.position, t.position_target) {
            (true, Some(y), Some(tp)) => Some(
                core::iter::once(tp)
                    .chain(t.other_positions.iter().copied())
                    .map(|c| (y - c) * scale)
                    .fold(f64::NAN, |best, e| if best.is_nan() || e.abs() < best.abs() { e } else { best }),
            ),
            _ => None,
        };
        let reflectance_error_db = match (t.is_positive(), p.reflectance, t.reflectance_target) {
            (true, Some(y), Some(tr)) => Some(
                decode_reflectance(y, opts.reflectance_range) - decode_reflectance(tr, opts.reflectance_range),
            ),
            _ => None,
        };
        out.push(WindowScore {
            snr_db: w.snr_db,
            actual: t.is_positive(),
            p_event: p.p_event,
            detected: p.p_event.is_some_and(|pe| pe > opts.threshold),
            position_error_m,
            reflectance_error_db,
        });
    }
    Ok(out)
}

/// Aggregates window scores into [`Metrics`].
pub fn summarize<'a, I>(scores: I) -> Metrics
where
    I: IntoIterator<Item = &'a WindowScore>,
{
    let mut counts = ConfusionCounts::default();
    let mut pos_err = Vec::new();
    let mut refl_err = Vec::new();
    let mut has_detection = false;
    let mut n_positive = 0;
    for s in scores {
        has_detection |= s.p_event.is_some();
        counts.record(s.detected, s.actual);
        n_positive += s.actual as usize;
        pos_err.extend(s.position_error_m);
        refl_err.extend(s.reflectance_error_db);
    }
    let cls = if has_detection {
        classification_metrics(&counts).ok()
    } else {
        None
    };
    let (rmse_p, mae_p) = error_metrics(&pos_err).map_or((None, None), |(r, m)| (Some(r), Some(m)));
    let (rmse_r, mae_r) = error_metrics(&refl_err).map_or((None, None), |(r, m)| (Some(r), Some(m)));
    Metrics {
        counts,
        accuracy: cls.map(|c| c.accuracy),
        accuracy_interval: cls.and_then(|_| wilson_interval(counts.correct(), counts.total(), WILSON_Z).ok()),
        precision: cls.and_then(|c| c.precision),
        recall: cls.and_then(|c| c.recall),
        f1: cls.and_then(|c| c.f1),
        rmse_position_m: rmse_p,
        mae_position_m: mae_p,
        rmse_reflectance_db: rmse_r,
        mae_reflectance_db: mae_r,
        n_positive,
    }
}

/// Scores and summarizes in one go.
pub fn evaluate<'a, I>(params: &ModelParams, windows: I, opts: &EvalOptions) -> Result<Metrics>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    Ok(summarize(&score_windows(params, windows, opts)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: &'static str,
    /// `None` when the single-task value is missing or zero for a ratio.
    pub delta: Option<f64>,
}

/// Classification metrics: `multi - single`. Error metrics:
/// `1 - multi / single`. Positive values favour the multitask model.
pub fn improvement_delta(multi: &Metrics, single: &Metrics) -> Vec<MetricDelta> {
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let rel = |a: Option<f64>, b: Option<f64>| {
        let (a, b) = (a?, b?);
        (b != 0.0).then(|| 1.0 - a / b)
    };
    alloc::vec![
        MetricDelta { metric: "accuracy", delta: diff(multi.accuracy, single.accuracy) },
        MetricDelta { metric: "precision", delta: diff(multi.precision, single.precision) },
        MetricDelta { metric: "recall", delta: diff(multi.recall, single.recall) },
        MetricDelta { metric: "f1", delta: diff(multi.f1, single.f1) },
        MetricDelta { metric: "rmse_position_m", delta: rel(multi.rmse_position_m, single.rmse_position_m) },
        MetricDelta { metric: "mae_position_m", delta: rel(multi.mae_position_m, single.mae_position_m) },
        MetricDelta { metric: "rmse_reflectance_db", delta: rel(multi.rmse_reflectance_db, single.rmse_reflectance_db) },
        MetricDelta { metric: "mae_reflectance_db", delta: rel(multi.mae_reflectance_db, single.mae_reflectance_db) },
    ]
}

/// `1 - multi / single` for one error metric.
pub fn relative_improvement(multi: f64, single: f64) -> Option<f64> {
    (single != 0.0).then(|| 1.0 - multi / single)
}
