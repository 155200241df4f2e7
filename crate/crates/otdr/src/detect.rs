//! Event detection on a whole trace: segment, score every window, merge
//! overlapping positives by non-maximum suppression, report absolute
//! positions and reflectances.

use otdr_core::dataset::{
    decode_position, decode_reflectance, estimate_window_snr_db, segment_trace, AuxFeature, WindowSample,
};
use otdr_core::nn::{predict_all, Task};
use otdr_core::trace_sim::{estimate_noise_sigma, OtdrTrace, DEFAULT_NOISE_SAMPLES};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_file::SavedModel;

/// Normalized noise windows can look like weak events, so long traces
/// need an amplitude floor; pure-noise windows rarely exceed about 5 dB.
pub const DEFAULT_MIN_WINDOW_SNR_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    /// Defaults to half the window length.
    pub stride: Option<usize>,
    pub threshold: f64,
    /// Candidates whose window peak stays below this many dB over the
    /// trace's tail noise are dropped.
    pub min_window_snr_db: Option<f64>,
    /// Must equal the model's window length when given.
    pub window_len: Option<usize>,
    /// Position of a reference reflector checked before anything else.
    pub reflector_pos_m: Option<f64>,
    /// Analyse the whole trace even when the reflector check passes.
    pub full_analysis: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            stride: None,
            threshold: 0.5,
            min_window_snr_db: Some(DEFAULT_MIN_WINDOW_SNR_DB),
            window_len: None,
            reflector_pos_m: None,
            full_analysis: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub position_m: f64,
    /// Fractional sample index.
    pub position_index: f64,
    pub reflectance_db: Option<f64>,
    pub p_event: f64,
    pub window_origin: usize,
    /// Peak of the window against the trace's tail noise, in dB.
    pub window_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityCheck {
    pub reflector_pos_m: f64,
    pub window_origin: usize,
    pub p_event: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub integrity: Option<IntegrityCheck>,
    /// False when the reflector check passed and no full analysis was asked for.
    pub analysed: bool,
    /// Sorted by position; the reference reflector is left out.
    pub events: Vec<DetectedEvent>,
    pub n_events: usize,
    pub n_windows: usize,
    pub window_len: usize,
    pub stride: usize,
    pub threshold: f64,
}

struct Scorer<'a> {
    model: &'a SavedModel,
    trace: &'a OtdrTrace,
    tail_sigma: f64,
}

impl Scorer<'_> {
    fn aux(&self, w: &WindowSample) -> Vec<f64> {
        self.model
            .params
            .feature_set
            .features()
            .iter()
            .map(|&f| match f {
                AuxFeature::Snr => self.window_snr(w.window_origin),
                other => other.raw_value(f64::NAN, &self.trace.config),
            })
            .collect()
    }

    fn window_snr(&self, origin: usize) -> f64 {
        let len = self.model.params.window_len;
        estimate_window_snr_db(&self.trace.samples[origin..origin + len], self.tail_sigma)
    }

    fn score(&self, windows: &mut [WindowSample]) -> Result<Vec<DetectedEvent>> {
        for w in windows.iter_mut() {
            w.aux = self.aux(w);
        }
        let len = self.model.params.window_len;
        let dx = self.trace.config.sampling_interval_m;
        let preds = predict_all(&self.model.params, windows.iter())?;
        Ok(windows
            .iter()
            .zip(preds)
            .map(|(w, p)| {
                let index = decode_position(p.position.unwrap_or(0.5), w.window_origin, len);
                DetectedEvent {
                    position_m: index * dx,
                    position_index: index,
                    reflectance_db: p
                        .reflectance
                        .map(|r| decode_reflectance(r, self.model.meta.reflectance_range)),
                    p_event: p.p_event.unwrap_or(0.0),
                    window_origin: w.window_origin,
                    window_snr_db: self.window_snr(w.window_origin),
                }
            })
            .collect())
    }
}

/// Keeps the most confident candidate of every cluster: a candidate is
/// dropped when a stronger one lies within `radius` samples.
pub fn non_max_suppression(mut candidates: Vec<DetectedEvent>, radius: f64) -> Vec<DetectedEvent> {
    candidates.sort_by(|a, b| {
        b.p_event
            .total_cmp(&a.p_event)
            .then(a.position_index.total_cmp(&b.position_index))
    });
    let mut kept: Vec<DetectedEvent> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| (k.position_index - c.position_index).abs() > radius) {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| a.position_index.total_cmp(&b.position_index));
    kept
}

pub fn detect_events(model: &SavedModel, trace: &OtdrTrace, opts: &DetectOptions) -> Result<DetectionReport> {
    let params = &model.params;
    let len = params.window_len;
    if let Some(w) = opts.window_len {
        if w != len {
            return Err(otdr_core::Error::InvalidArgument(format!(
                "window length {w} does not match the model's {len}"
            ))
            .into());
        }
    }
    if !params.arch.has_task(Task::Detection) || !params.arch.has_task(Task::Position) {
        return Err(Error::Data("detection needs a model with detection and position heads".into()));
    }
    if trace.samples.len() < len {
        return Err(Error::Data(format!(
            "trace has {} samples, fewer than the window length {len}",
            trace.samples.len()
        )));
    }
    let stride = opts.stride.unwrap_or((len / 2).max(1));
    let tail_sigma = estimate_noise_sigma(&trace.samples, DEFAULT_NOISE_SAMPLES.min(trace.samples.len()))?;
    let scorer = Scorer {
        model,
        trace,
        tail_sigma,
    };
    let pw = trace.config.pulse_width_samples as f64;
    let dx = trace.config.sampling_interval_m;

    let integrity = match opts.reflector_pos_m {
        Some(pos_m) => {
            // the window centred on the reflector, kept inside the trace
            let centre = (pos_m / dx).round().max(0.0) as usize + trace.config.pulse_width_samples / 2;
            let origin = centre.saturating_sub(len / 2).min(trace.samples.len() - len);
            let mut one = segment_trace(&trace.samples[origin..origin + len], len, len)?;
            one[0].window_origin = origin;
            let p = scorer.score(&mut one)?[0].p_event;
            Some(IntegrityCheck {
                reflector_pos_m: pos_m,
                window_origin: origin,
                p_event: p,
                passed: p >= opts.threshold,
            })
        }
        None => None,
    };
    let analysed = opts.full_analysis || integrity.as_ref().is_none_or(|c| !c.passed);

    let mut windows = segment_trace(&trace.samples, len, stride)?;
    let n_windows = windows.len();
    let mut events = Vec::new();
    if analysed {
        let candidates: Vec<DetectedEvent> = scorer
            .score(&mut windows)?
            .into_iter()
            .filter(|c| c.p_event >= opts.threshold)
            .filter(|c| opts.min_window_snr_db.is_none_or(|m| c.window_snr_db >= m))
            .collect();
        events = non_max_suppression(candidates, pw);
        if let Some(pos_m) = opts.reflector_pos_m {
            let r = pos_m / dx;
            events.retain(|e| (e.position_index - r).abs() > pw);
        }
    }
    Ok(DetectionReport {
        integrity,
        analysed,
        n_events: events.len(),
        events,
        n_windows,
        window_len: len,
        stride,
        threshold: opts.threshold,
    })
}
