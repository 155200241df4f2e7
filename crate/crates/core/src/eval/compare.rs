use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::{detection_rates, error_metrics, wilson_interval, ConfusionCounts, WILSON_Z};
use super::report::{StudyKind, StudyReport};
use super::studies::snr_bin;
use crate::baselines::{threshold_from_statistics, Detector};
use crate::dataset::{
    trace_windows, CorpusOptions, FeatureSet, SimulationGrid, WindowPolicy, WindowSample,
};
use crate::error::{Error, Result};
use crate::nn::{predict_all, ModelParams};
use crate::rng;
use crate::trace_sim::{self, AcquisitionConfig, OtdrTrace};

/// Detector comparison at a calibrated false-alarm probability, on windows
/// that hold either a complete event or no event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    /// Traces of the test corpus (normally with stratified SNR).
    pub grid: SimulationGrid,
    pub baseline_window_len: usize,
    pub detectors: Vec<Detector>,
    pub target_pfa: f64,
    /// Traces whose noise windows calibrate the thresholds.
    pub calibration_traces: usize,
    pub seed: u64,
    pub calibration_seed: u64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            grid: SimulationGrid {
                n_traces: 2800,
                stratified_snr: true,
                ..SimulationGrid::default()
            },
            baseline_window_len: 100,
            detectors: alloc::vec![
                Detector::R1msde { pulse_width_samples: 6 },
                Detector::TwoPoint { fit_half_width: crate::baselines::DEFAULT_FIT_HALF_WIDTH },
            ],
            target_pfa: 0.1,
            calibration_traces: 2000,
            seed: 0xC0DE,
            calibration_seed: 0xCA1B,
        }
    }
}

/// Thresholds reaching the target false-alarm probability on calibration noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target_pfa: f64,
    /// On `p_event`.
    pub ml_threshold: f64,
    pub baselines: Vec<(Detector, f64)>,
}

struct PairedWindows {
    ml: (WindowSample, WindowSample),
    baseline: (WindowSample, WindowSample),
}

fn window_options(len: usize, feature_set: FeatureSet, range: (f64, f64)) -> CorpusOptions {
    CorpusOptions {
        window_len: len,
        feature_set,
        window_policy: WindowPolicy::CompleteOnly,
        reflectance_range: range,
        ..CorpusOptions::default()
    }
}

fn paired(
    trace: &OtdrTrace,
    ml: &CorpusOptions,
    baseline: &CorpusOptions,
    seed: u64,
) -> Result<PairedWindows> {
    Ok(PairedWindows {
        ml: trace_windows(trace, ml, rng::stream_seed(seed, 0x3A1D))?,
        baseline: trace_windows(trace, baseline, rng::stream_seed(seed, 0xBA5E))?,
    })
}

fn grid_windows(
    grid: &SimulationGrid,
    n_traces: usize,
    ml: &CorpusOptions,
    baseline: &CorpusOptions,
    seed: u64,
) -> Result<Vec<PairedWindows>> {
    let grid = SimulationGrid {
        n_traces,
        ..grid.clone()
    };
    grid.setups(seed)?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let trace = trace_sim::synthesize_trace(&s.config, &s.events)?;
            paired(&trace, ml, baseline, rng::derive_seed(seed, i as u64))
        })
        .collect()
}

fn options(params: &ModelParams, spec_len: usize) -> (CorpusOptions, CorpusOptions) {
    let range = crate::dataset::DEFAULT_REFLECTANCE_RANGE;
    (
        window_options(params.window_len, params.feature_set.clone(), range),
        window_options(spec_len, FeatureSet::base(), range),
    )
}

fn p_events(params: &ModelParams, windows: &[&WindowSample]) -> Result<Vec<f64>> {
    predict_all(params, windows.iter().copied())?
        .into_iter()
        .map(|p| {
            p.p_event
                .ok_or_else(|| Error::Configuration("model has no detection head to compare".into()))
        })
        .collect()
}

/// Calibrates the model threshold and every baseline on the noise windows of
/// `spec.calibration_traces` traces drawn with `spec.calibration_seed`.
pub fn calibrate_detectors(params: &ModelParams, spec: &CompareSpec) -> Result<Calibration> {
    let (ml_opts, base_opts) = options(params, spec.baseline_window_len);
    let pairs = grid_windows(&spec.grid, spec.calibration_traces, &ml_opts, &base_opts, spec.calibration_seed)?;
    let ml_noise: Vec<&WindowSample> = pairs.iter().map(|p| &p.ml.1).collect();
    let ml_threshold = threshold_from_statistics(&p_events(params, &ml_noise)?, spec.target_pfa)?;
    let mut baselines = Vec::new();
    for det in &spec.detectors {
        let stats = pairs
            .iter()
            .map(|p| det.statistic(&p.baseline.1.features).map(|s| s.0))
            .collect::<Result<Vec<f64>>>()?;
        baselines.push((*det, threshold_from_statistics(&stats, spec.target_pfa)?));
    }
    Ok(Calibration {
        target_pfa: spec.target_pfa,
        ml_threshold,
        baselines,
    })
}

/// Per-detector outcome on one window pair.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    snr_db: f64,
    hit: bool,
    false_alarm: bool,
    position_error_m: f64,
}

fn ml_outcomes(params: &ModelParams, pairs: &[PairedWindows], threshold: f64, dx: f64) -> Result<Vec<Outcome>> {
    let events: Vec<&WindowSample> = pairs.iter().map(|p| &p.ml.0).collect();
    let noise: Vec<&WindowSample> = pairs.iter().map(|p| &p.ml.1).collect();
    let pe = predict_all(params, events.iter().copied())?;
    let pn = p_events(params, &noise)?;
    let scale = (params.window_len - 1) as f64 * dx;
    Ok(events
        .iter()
        .zip(pe)
        .zip(pn)
        .map(|((w, p), noise_p)| {
            let truth = w.targets.as_ref().and_then(|t| t.position_target).unwrap_or(f64::NAN);
            Outcome {
                snr_db: w.snr_db,
                hit: p.p_event.is_some_and(|v| v > threshold),
                false_alarm: noise_p > threshold,
                position_error_m: p.position.map_or(f64::NAN, |y| (y - truth) * scale),
            }
        })
        .collect())
}

fn baseline_outcomes(det: &Detector, threshold: f64, pairs: &[PairedWindows], dx: f64) -> Result<Vec<Outcome>> {
    pairs
        .iter()
        .map(|p| {
            let (event, noise) = &p.baseline;
            let (stat, k) = det.statistic(&event.features)?;
            let (noise_stat, _) = det.statistic(&noise.features)?;
            let len = event.features.len();
            let truth = event
                .targets
                .as_ref()
                .and_then(|t| t.position_target)
                .map_or(f64::NAN, |t| t * (len - 1) as f64);
            Ok(Outcome {
                snr_db: event.snr_db,
                hit: stat > threshold,
                false_alarm: noise_stat > threshold,
                position_error_m: (k as f64 - truth) * dx,
            })
        })
        .collect()
}

fn push_outcomes(report: &mut StudyReport, label: &str, outcomes: &[Outcome]) -> Result<f64> {
    let mut bins: Vec<i64> = outcomes.iter().map(|o| snr_bin(o.snr_db)).collect();
    bins.sort_unstable();
    bins.dedup();
    for b in bins {
        let sel: Vec<&Outcome> = outcomes.iter().filter(|o| snr_bin(o.snr_db) == b).collect();
        let mut counts = ConfusionCounts::default();
        for o in &sel {
            counts.record(o.hit, true);
            counts.record(o.false_alarm, false);
        }
        let rates = detection_rates(&counts);
        let p_d_ci = wilson_interval(counts.n_tp, counts.n_tp + counts.n_fn, WILSON_Z).ok();
        report.push_interval(b as f64, label, "p_d", rates.p_d, p_d_ci);
        report.push(b as f64, label, "p_fa", rates.p_fa);
        let errors: Vec<f64> = sel.iter().map(|o| o.position_error_m).filter(|e| e.is_finite()).collect();
        report.push(b as f64, label, "rmse_position_m", error_metrics(&errors).ok().map(|e| e.0));
        report.push(b as f64, label, "n_events", Some(sel.len() as f64));
    }
    let fa = outcomes.iter().filter(|o| o.false_alarm).count();
    Ok(fa as f64 / outcomes.len().max(1) as f64)
}

fn sort_rows(report: &mut StudyReport) {
    // stable: keeps label order within each axis value
    report.rows.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value));
}

/// Result of [`compare_detectors`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub report: StudyReport,
    pub calibration: Calibration,
    /// Empirical false-alarm rate on all held-out noise windows, per label.
    pub held_out_pfa: BTreeMap<String, f64>,
}

/// Per-SNR-bin detection probability, false-alarm rate and position RMSE
/// of the model and each baseline at their calibrated thresholds.
pub fn compare_detectors(params: &ModelParams, spec: &CompareSpec, calibration: &Calibration) -> Result<Comparison> {
    let (ml_opts, base_opts) = options(params, spec.baseline_window_len);
    let pairs = grid_windows(&spec.grid, spec.grid.n_traces, &ml_opts, &base_opts, spec.seed)?;
    let dx = spec.grid.sampling_interval_m;
    let mut report = StudyReport::new(StudyKind::CompareDetectors, "snr_db");
    let mut held_out_pfa = BTreeMap::new();
    let ml = ml_outcomes(params, &pairs, calibration.ml_threshold, dx)?;
    held_out_pfa.insert(String::from("ml"), push_outcomes(&mut report, "ml", &ml)?);
    for (det, thr) in &calibration.baselines {
        let out = baseline_outcomes(det, *thr, &pairs, dx)?;
        held_out_pfa.insert(det.name().into(), push_outcomes(&mut report, det.name(), &out)?);
    }
    sort_rows(&mut report);
    report.set("target_pfa", spec.target_pfa);
    report.set("ml_threshold", format!("{:e}", calibration.ml_threshold));
    for (det, thr) in &calibration.baselines {
        report.set(&format!("{}_threshold", det.name()), format!("{thr:e}"));
    }
    for (k, v) in &held_out_pfa {
        report.set(&format!("{k}_held_out_pfa"), v);
    }
    report.set("ml_window_len", params.window_len);
    report.set("baseline_window_len", spec.baseline_window_len);
    report.set("seed", spec.seed);
    report.set("calibration_seed", spec.calibration_seed);
    report.set("n_traces", spec.grid.n_traces);
    report.note("windows hold a complete event or no event; position RMSE over all event windows");
    Ok(Comparison {
        report,
        calibration: calibration.clone(),
        held_out_pfa,
    })
}

/// Accuracy against averaging count for a fixed event and setup; the
/// averaging time of each point comes from the round-trip relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingSpec {
    pub acquisition: AcquisitionConfig,
    pub reflectance_db: f64,
    pub n_avg: Vec<u64>,
    pub traces_per_point: usize,
    /// Accuracy level whose first crossing is reported.
    pub accuracy_target: f64,
    pub seed: u64,
    pub baseline_window_len: usize,
}

impl Default for AveragingSpec {
    fn default() -> Self {
        AveragingSpec {
            acquisition: AcquisitionConfig {
                fiber_length_m: 8785.0,
                ..AcquisitionConfig::default()
            },
            reflectance_db: -45.0,
            n_avg: (0..17).map(|k| 1u64 << k).collect(),
            traces_per_point: 300,
            accuracy_target: 0.9,
            seed: 0xA7A7,
            baseline_window_len: 100,
        }
    }
}

/// Correct decisions over the event and the noise window of every trace.
fn correct_decisions(outcomes: &[Outcome]) -> usize {
    outcomes.iter().map(|o| o.hit as usize + !o.false_alarm as usize).sum()
}

/// Sweeps the averaging count; each point synthesizes fresh traces with the
/// event at a random position and scores both window types at the
/// calibrated thresholds.
pub fn averaging_time_curve(params: &ModelParams, spec: &AveragingSpec, calibration: &Calibration) -> Result<StudyReport> {
    let (ml_opts, base_opts) = options(params, spec.baseline_window_len);
    let cfg0 = &spec.acquisition;
    cfg0.validate()?;
    let n = cfg0.n_samples();
    let pw = cfg0.pulse_width_samples;
    let tail = trace_sim::DEFAULT_NOISE_SAMPLES;
    let lo = n / 20 + 1;
    let hi = n
        .checked_sub(tail + 2 * pw)
        .filter(|&h| h > lo)
        .ok_or_else(|| Error::Configuration("fiber too short for the averaging sweep".into()))?;
    let mut n_avgs = spec.n_avg.clone();
    n_avgs.sort_unstable();
    n_avgs.dedup();

    let mut report = StudyReport::new(StudyKind::AveragingTime, "n_avg");
    let mut labels: Vec<String> = alloc::vec![String::from("ml")];
    labels.extend(calibration.baselines.iter().map(|(d, _)| String::from(d.name())));
    let mut first_crossing: Vec<Option<u64>> = alloc::vec![None; labels.len()];
    let dx = cfg0.sampling_interval_m;

    for &n_avg in &n_avgs {
        let point_seed = rng::derive_seed(spec.seed, n_avg);
        let mut r = rng::seeded(point_seed);
        let mut pairs = Vec::with_capacity(spec.traces_per_point);
        let mut snr_sum = 0.0;
        for i in 0..spec.traces_per_point {
            let cfg = AcquisitionConfig {
                n_avg,
                seed: rng::derive_seed(point_seed, i as u64),
                ..cfg0.clone()
            };
            let idx = r.random_range(lo..=hi);
            let trace = trace_sim::synthesize_trace(&cfg, &[(idx as f64 * dx, spec.reflectance_db)])?;
            snr_sum += trace.snr_db[0];
            pairs.push(paired(&trace, &ml_opts, &base_opts, cfg.seed)?);
        }
        let axis = n_avg as f64;
        let tau = trace_sim::averaging_time(axis, cfg0.fiber_length_m, cfg0.refractive_index);
        report.push(axis, "", "tau_s", Some(tau));
        report.push(axis, "", "snr_db", Some(snr_sum / spec.traces_per_point.max(1) as f64));
        let mut correct = alloc::vec![correct_decisions(&ml_outcomes(params, &pairs, calibration.ml_threshold, dx)?)];
        for (det, thr) in &calibration.baselines {
            correct.push(correct_decisions(&baseline_outcomes(det, *thr, &pairs, dx)?));
        }
        let total = 2 * spec.traces_per_point;
        for (k, c) in correct.into_iter().enumerate() {
            let label = &labels[k];
            let acc = c as f64 / total.max(1) as f64;
            let ci = wilson_interval(c, total, WILSON_Z).ok();
            report.push_interval(axis, label, "accuracy", Some(acc), ci);
            if acc >= spec.accuracy_target && first_crossing[k].is_none() {
                first_crossing[k] = Some(n_avg);
            }
        }
    }
    for (label, hit) in labels.iter().zip(&first_crossing) {
        let key = format!("{label}_first_n_avg_at_target");
        match hit {
            Some(n_avg) => {
                report.set(&key, n_avg);
                let tau = trace_sim::averaging_time(*n_avg as f64, cfg0.fiber_length_m, cfg0.refractive_index);
                report.set(&format!("{label}_tau_at_target_s"), format!("{tau:e}"));
            }
            None => report.set(&key, "never"),
        }
    }
    report.set("accuracy_target", spec.accuracy_target);
    report.set("reflectance_db", spec.reflectance_db);
    report.set("fiber_length_m", cfg0.fiber_length_m);
    report.set("target_pfa", calibration.target_pfa);
    report.set("seed", spec.seed);
    report.note("accuracy over one event window and one noise window per trace at the calibrated thresholds");
    Ok(report)
}
