use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Evaluate,
    SnrSweep,
    FeatureAblation,
    SequenceLength,
    Robustness,
    SingleVsMulti,
    CompareDetectors,
    AveragingTime,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Evaluate => "evaluate",
            StudyKind::SnrSweep => "snr_sweep",
            StudyKind::FeatureAblation => "feature_ablation",
            StudyKind::SequenceLength => "sequence_length",
            StudyKind::Robustness => "robustness",
            StudyKind::SingleVsMulti => "single_vs_multi",
            StudyKind::CompareDetectors => "compare_detectors",
            StudyKind::AveragingTime => "averaging_time",
        }
    }
}

impl core::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            StudyKind::Evaluate,
            StudyKind::SnrSweep,
            StudyKind::FeatureAblation,
            StudyKind::SequenceLength,
            StudyKind::Robustness,
            StudyKind::SingleVsMulti,
            StudyKind::CompareDetectors,
            StudyKind::AveragingTime,
        ];
        all.into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Configuration(alloc::format!("unknown study kind `{s}`")))
    }
}

/// One value of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub axis_value: f64,
    pub label: String,
    pub metric: String,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub axis_name: String,
    pub rows: Vec<ReportRow>,
    /// Fixtures, seeds, thresholds and anything else needed to reproduce.
    pub provenance: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn new(kind: StudyKind, axis_name: &str) -> Self {
        StudyReport {
            kind,
            axis_name: axis_name.into(),
            rows: Vec::new(),
            provenance: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, axis_value: f64, label: &str, metric: &str, value: Option<f64>) {
        self.push_interval(axis_value, label, metric, value, None);
    }

    pub fn push_interval(
        &mut self,
        axis_value: f64,
        label: &str,
        metric: &str,
        value: Option<f64>,
        bounds: Option<(f64, f64)>,
    ) {
        self.rows.push(ReportRow {
            axis_value,
            label: label.into(),
            metric: metric.into(),
            value,
            lower: bounds.map(|b| b.0),
            upper: bounds.map(|b| b.1),
        });
    }

    /// All fields of `m`; accuracy carries its Wilson interval.
    pub fn push_metrics(&mut self, axis_value: f64, label: &str, m: &Metrics) {
        for (name, value) in m.named() {
            let bounds = if name == "accuracy" { m.accuracy_interval } else { None };
            self.push_interval(axis_value, label, name, value, bounds);
        }
    }

    /// Mean over seeds with `mean ± std` bounds, plus a `<metric>_std` row.
    pub fn push_seed_summary(&mut self, axis_value: f64, label: &str, metric: &str, values: &[f64]) {
        let (mean, std) = mean_std(values);
        let bounds = mean.zip(std).map(|(m, s)| (m - s, m + s));
        self.push_interval(axis_value, label, metric, mean, bounds);
        self.push(axis_value, label, &alloc::format!("{metric}_std"), std);
    }

    pub fn note(&mut self, text: impl ToString) {
        self.notes.push(text.to_string());
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.provenance.insert(key.into(), value.to_string());
    }

    /// First row matching label and metric at `axis_value`.
    pub fn value(&self, axis_value: f64, label: &str, metric: &str) -> Option<f64> {
        self.row(axis_value, label, metric).and_then(|r| r.value)
    }

    pub fn row(&self, axis_value: f64, label: &str, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.label == label && r.metric == metric)
    }

    /// Distinct axis values in order of appearance.
    pub fn axis(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.axis_value) {
                out.push(r.axis_value);
            }
        }
        out
    }

    /// The axis must be strictly increasing with rows grouped per point.
    pub fn validate(&self) -> Result<()> {
        let axis = self.axis();
        if axis.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(core::cmp::Ordering::Less)) {
            return Err(Error::invalid(alloc::format!(
                "{} report axis is not strictly increasing",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    (Some(math::mean(values)), Some(math::std_dev(values)))
}
