//! Fixed-length supervised windows cut from traces.
//!
//! Training corpora take two windows per trace (one touching an event, one
//! touching none); operational segmentation slides a window over the whole
//! trace. Every window is min-max normalized on its own. Position targets are
//! the event's offset inside the window divided by `window_len - 1`, and the
//! reflectance target maps a fixed global dB range onto `[0, 1]`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Rng};
use crate::trace_sim::{self, AcquisitionConfig, EventTruth, OtdrTrace};

pub const DEFAULT_WINDOW_LEN: usize = 35;
pub const DEFAULT_REFLECTANCE_RANGE: (f64, f64) = (-65.0, -10.0);

/// Auxiliary setup features that can accompany a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxFeature {
    /// Event SNR in dB.
    Snr,
    LaserPower,
    NAvg,
    Attenuation,
}

impl AuxFeature {
    pub const ALL: [AuxFeature; 4] = [
        AuxFeature::Snr,
        AuxFeature::LaserPower,
        AuxFeature::NAvg,
        AuxFeature::Attenuation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuxFeature::Snr => "snr",
            AuxFeature::LaserPower => "laser_power",
            AuxFeature::NAvg => "n_avg",
            AuxFeature::Attenuation => "attenuation",
        }
    }

    /// Maps a raw value (dB, dBm or a record count) to roughly unit scale
    /// for the network input.
    pub fn scale(self, raw: f64) -> f64 {
        match self {
            AuxFeature::Snr => raw / 30.0,
            AuxFeature::LaserPower => raw / 12.0,
            AuxFeature::NAvg => math::log10(raw.max(1.0)) / 5.0,
            AuxFeature::Attenuation => raw / 20.0,
        }
    }

    pub fn raw_value(self, snr_db: f64, cfg: &AcquisitionConfig) -> f64 {
        match self {
            AuxFeature::Snr => snr_db,
            AuxFeature::LaserPower => cfg.laser_power_dbm,
            AuxFeature::NAvg => cfg.n_avg as f64,
            AuxFeature::Attenuation => cfg.attenuation_db,
        }
    }
}

impl FromStr for AuxFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" | "gamma" => Ok(AuxFeature::Snr),
            "laser_power" | "p_laser" => Ok(AuxFeature::LaserPower),
            "n_avg" => Ok(AuxFeature::NAvg),
            "attenuation" | "alpha" => Ok(AuxFeature::Attenuation),
            other => Err(Error::invalid(format!("unknown aux feature `{other}`"))),
        }
    }
}

/// Ordered set of auxiliary features attached to every window of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSet(Vec<AuxFeature>);

impl FeatureSet {
    pub fn new(mut features: Vec<AuxFeature>) -> Self {
        features.sort();
        features.dedup();
        FeatureSet(features)
    }

    /// Power sequence only.
    pub fn base() -> Self {
        FeatureSet(Vec::new())
    }

    /// `(P_laser, N_avg, attenuation)`.
    pub fn setup() -> Self {
        Self::new(vec![AuxFeature::LaserPower, AuxFeature::NAvg, AuxFeature::Attenuation])
    }

    pub fn snr() -> Self {
        Self::new(vec![AuxFeature::Snr])
    }

    pub fn all() -> Self {
        Self::new(AuxFeature::ALL.to_vec())
    }

    /// `(SNR, P_laser, N_avg)`.
    pub fn snr_without_attenuation() -> Self {
        Self::new(vec![AuxFeature::Snr, AuxFeature::LaserPower, AuxFeature::NAvg])
    }

    /// The five input sets compared by the feature ablation study.
    pub fn ablation_sets() -> [FeatureSet; 5] {
        [
            Self::base(),
            Self::setup(),
            Self::snr(),
            Self::all(),
            Self::snr_without_attenuation(),
        ]
    }

    pub fn features(&self) -> &[AuxFeature] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("base");
        }
        for (i, feat) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(feat.name())?;
        }
        Ok(())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "base" {
            return Ok(Self::base());
        }
        let feats = s
            .split(['+', ','])
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(feats))
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSet> for String {
    fn from(f: FeatureSet) -> String {
        f.to_string()
    }
}

/// Where the SNR feature comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    /// True simulation parameters.
    #[default]
    Truth,
    /// SNR re-estimated from the raw window against the trace tail noise.
    Estimated,
}

/// Supervised targets of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub id_class: u8,
    /// Present iff `id_class == 1`.
    pub position_target: Option<f64>,
    /// Present iff `id_class == 1`.
    pub reflectance_target: Option<f64>,
    /// Position targets of further events intersecting the window.
    pub other_positions: Vec<f64>,
}

impl Targets {
    pub fn negative() -> Self {
        Targets {
            id_class: 0,
            position_target: None,
            reflectance_target: None,
            other_positions: Vec::new(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.id_class == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Normalized power levels in `[0, 1]`.
    pub features: Vec<f64>,
    /// Raw auxiliary values in the order of the corpus feature set.
    pub aux: Vec<f64>,
    /// Absent for operational segments.
    pub targets: Option<Targets>,
    pub window_origin: usize,
    /// Ground-truth SNR of the source trace's event (NaN when unknown).
    pub snr_db: f64,
}

impl WindowSample {
    pub fn id_class(&self) -> Option<u8> {
        self.targets.as_ref().map(|t| t.id_class)
    }

    pub fn is_positive(&self) -> bool {
        self.targets.as_ref().is_some_and(Targets::is_positive)
    }
}

/// Min-max normalization of one window; a constant window maps to zeros.
pub fn normalize_window(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::invalid("cannot normalize an empty window"));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("window contains non-finite samples"));
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    if span == 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|&x| ((x - lo) / span).clamp(0.0, 1.0)).collect())
}

/// Encodes the targets of a window starting at `window_origin` relative to one event.
pub fn encode_targets(
    window_origin: usize,
    truth: &EventTruth,
    window_len: usize,
    pulse_width: usize,
    reflectance_range: (f64, f64),
) -> Targets {
    let w_end = window_origin + window_len;
    let p_end = truth.position_index + pulse_width;
    let intersects = truth.position_index < w_end && window_origin < p_end;
    if !intersects {
        return Targets::negative();
    }
    Targets {
        id_class: 1,
        position_target: Some(encode_position(truth.position_index, window_origin, window_len)),
        reflectance_target: Some(encode_reflectance(truth.reflectance_db, reflectance_range)),
        other_positions: Vec::new(),
    }
}

pub fn encode_position(position_index: usize, window_origin: usize, window_len: usize) -> f64 {
    if window_len < 2 {
        return 0.0;
    }
    let offset = position_index as f64 - window_origin as f64;
    offset.clamp(0.0, (window_len - 1) as f64) / (window_len - 1) as f64
}

/// Absolute sample index of a (possibly fractional) position target.
pub fn decode_position(position_target: f64, window_origin: usize, window_len: usize) -> f64 {
    window_origin as f64 + position_target * (window_len.saturating_sub(1)) as f64
}

pub fn encode_reflectance(reflectance_db: f64, (lo, hi): (f64, f64)) -> f64 {
    ((reflectance_db - lo) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn decode_reflectance(target: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + target * (hi - lo)
}

/// Which kind of event window a corpus uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Any window whose span touches the event pulse, partial patterns included.
    #[default]
    AnyOverlap,
    /// Only windows that contain the whole pulse.
    CompleteOnly,
}

/// An event window and a noise window cut from `trace`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub event_origin: usize,
    pub event_index: usize,
    pub noise_origin: usize,
}

/// Draws the origins of one event window and one event-free window.
pub fn draw_window_pair(
    trace: &OtdrTrace,
    window_len: usize,
    policy: WindowPolicy,
    rng: &mut Rng,
) -> Result<WindowPair> {
    let n = trace.len();
    let pw = trace.config.pulse_width_samples;
    if trace.events.is_empty() {
        return Err(Error::invalid("training extraction needs a trace with an event"));
    }
    if window_len == 0 || n < 2 * window_len {
        return Err(Error::invalid(format!(
            "trace of {n} samples is shorter than twice the window length {window_len}"
        )));
    }
    let last_origin = n - window_len;

    let event_index = rng.random_range(0..trace.events.len());
    let p = trace.events[event_index].position_index;
    let (lo, hi) = match policy {
        WindowPolicy::AnyOverlap => ((p + 1).saturating_sub(window_len), (p + pw - 1).min(last_origin)),
        WindowPolicy::CompleteOnly => {
            if window_len < pw {
                return Err(Error::ExtractionFailure(format!(
                    "window of {window_len} cannot hold a {pw}-sample pulse"
                )));
            }
            ((p + pw).saturating_sub(window_len), p.min(last_origin))
        }
    };
    if lo > hi {
        return Err(Error::ExtractionFailure(format!("no window fits the event at {p}")));
    }
    let event_origin = rng.random_range(lo..=hi);

    // Free origin intervals: origins o with [o, o + L) disjoint from every pulse.
    let mut free: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for ev in &trace.events {
        let blocked_lo = (ev.position_index + 1).saturating_sub(window_len);
        let blocked_hi = ev.position_index + pw - 1;
        if blocked_lo > start {
            free.push((start, (blocked_lo - 1).min(last_origin)));
        }
        start = start.max(blocked_hi + 1);
    }
    if start <= last_origin {
        free.push((start, last_origin));
    }
    free.retain(|&(a, b)| a <= b);
    let total: usize = free.iter().map(|&(a, b)| b - a + 1).sum();
    if total == 0 {
        return Err(Error::ExtractionFailure(
            "no event-free window exists in the trace".into(),
        ));
    }
    let mut k = rng.random_range(0..total);
    let mut noise_origin = 0;
    for &(a, b) in &free {
        let len = b - a + 1;
        if k < len {
            noise_origin = a + k;
            break;
        }
        k -= len;
    }

    Ok(WindowPair {
        event_origin,
        event_index,
        noise_origin,
    })
}

/// Builds the labelled window at `origin`, primary target taken from `event_index`.
pub fn labelled_window(
    trace: &OtdrTrace,
    origin: usize,
    window_len: usize,
    primary_event: Option<usize>,
    reflectance_range: (f64, f64),
) -> Result<WindowSample> {
    let pw = trace.config.pulse_width_samples;
    let features = normalize_window(&trace.samples[origin..origin + window_len])?;
    let mut targets = Targets::negative();
    let primary = primary_event.or_else(|| {
        trace
            .events
            .iter()
            .position(|ev| encode_targets(origin, ev, window_len, pw, reflectance_range).is_positive())
    });
    if let Some(i) = primary {
        targets = encode_targets(origin, &trace.events[i], window_len, pw, reflectance_range);
        for (j, ev) in trace.events.iter().enumerate() {
            if j == i {
                continue;
            }
            let t = encode_targets(origin, ev, window_len, pw, reflectance_range);
            if let Some(pos) = t.position_target {
                targets.other_positions.push(pos);
            }
        }
    }
    let snr_db = primary
        .map(|i| trace.snr_db[i])
        .or_else(|| trace.snr_db.first().copied())
        .unwrap_or(f64::NAN);
    Ok(WindowSample {
        features,
        aux: Vec::new(),
        targets: Some(targets),
        window_origin: origin,
        snr_db,
    })
}

/// One event window and one noise window, drawn uniformly from the valid origins.
pub fn extract_training_windows(
    trace: &OtdrTrace,
    window_len: usize,
    seed: u64,
) -> Result<(WindowSample, WindowSample)> {
    extract_windows(trace, window_len, WindowPolicy::AnyOverlap, DEFAULT_REFLECTANCE_RANGE, seed)
}

pub fn extract_windows(
    trace: &OtdrTrace,
    window_len: usize,
    policy: WindowPolicy,
    reflectance_range: (f64, f64),
    seed: u64,
) -> Result<(WindowSample, WindowSample)> {
    let mut rng = rng::seeded(seed);
    let pair = draw_window_pair(trace, window_len, policy, &mut rng)?;
    let event = labelled_window(
        trace,
        pair.event_origin,
        window_len,
        Some(pair.event_index),
        reflectance_range,
    )?;
    let mut noise = labelled_window(trace, pair.noise_origin, window_len, None, reflectance_range)?;
    noise.snr_db = event.snr_db;
    debug_assert!(!noise.is_positive());
    Ok((event, noise))
}

/// Window origins for operational segmentation: `0, stride, 2*stride, ...`
/// plus a right-aligned final window when the stride does not land on it.
pub fn segment_origins(n: usize, window_len: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    if window_len == 0 || window_len > n {
        return Err(Error::invalid(format!(
            "window length {window_len} does not fit a trace of {n} samples"
        )));
    }
    let last = n - window_len;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    Ok(origins)
}

/// Cuts `samples` into normalized, unlabelled windows.
pub fn segment_trace(samples: &[f64], window_len: usize, stride: usize) -> Result<Vec<WindowSample>> {
    segment_origins(samples.len(), window_len, stride)?
        .into_iter()
        .map(|origin| {
            Ok(WindowSample {
                features: normalize_window(&samples[origin..origin + window_len])?,
                aux: Vec::new(),
                targets: None,
                window_origin: origin,
                snr_db: f64::NAN,
            })
        })
        .collect()
}

/// SNR re-estimated from a raw window: top-two mean over the tail noise estimate.
pub fn estimate_window_snr_db(raw_window: &[f64], noise_sigma: f64) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in raw_window {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    let a = 0.5 * (first + second);
    if noise_sigma <= 0.0 {
        return f64::INFINITY;
    }
    // Ratios at or below zero are floored to keep the feature finite.
    trace_sim::ratio_to_db((a / noise_sigma).max(1e-3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub samples: Vec<WindowSample>,
    pub split_tags: Vec<Split>,
    pub feature_set: FeatureSet,
    pub window_len: usize,
    pub reflectance_range: (f64, f64),
    pub sampling_interval_m: f64,
    pub pulse_width_samples: usize,
}

impl Corpus {
    pub fn empty(window_len: usize, feature_set: FeatureSet) -> Self {
        Corpus {
            samples: Vec::new(),
            split_tags: Vec::new(),
            feature_set,
            window_len,
            reflectance_range: DEFAULT_REFLECTANCE_RANGE,
            sampling_interval_m: 0.8,
            pulse_width_samples: 6,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &WindowSample> + '_ {
        self.samples
            .iter()
            .zip(&self.split_tags)
            .filter(move |(_, &s)| s == which)
            .map(|(w, _)| w)
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.split_tags {
            match s {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    /// Tags every sample with one split (used for evaluation-only corpora).
    pub fn tag_all(&mut self, split: Split) {
        self.split_tags = vec![split; self.samples.len()];
    }
}

/// Assigns train/val/test tags: a seeded uniform permutation followed by
/// contiguous blocks of `round(f * n)` samples.
pub fn split_corpus(mut corpus: Corpus, fractions: (f64, f64, f64), seed: u64) -> Result<Corpus> {
    let (a, b, c) = fractions;
    for f in [a, b, c] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid(format!("split fraction {f} outside [0, 1]")));
        }
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must sum to 1"));
    }
    let n = corpus.samples.len();
    let n_train = (math::round(a * n as f64) as usize).min(n);
    let n_val = (math::round(b * n as f64) as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::stream_seed(seed, 0x5917)));
    let mut tags = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        tags[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    corpus.split_tags = tags;
    Ok(corpus)
}

/// How event reflectance is drawn for a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReflectanceLaw {
    /// Linear in the drawn SNR through two anchor points, plus uniform
    /// jitter of `±jitter_db`. Mirrors setups where the received peak level
    /// is the dominant SNR driver.
    TrackSnr {
        snr_anchors_db: (f64, f64),
        reflectance_anchors_db: (f64, f64),
        jitter_db: f64,
    },
    /// Independent of the SNR.
    Uniform { min_db: f64, max_db: f64 },
}

impl Default for ReflectanceLaw {
    fn default() -> Self {
        ReflectanceLaw::TrackSnr {
            snr_anchors_db: (2.0, 30.0),
            reflectance_anchors_db: (-60.0, -14.0),
            jitter_db: 4.0,
        }
    }
}

impl ReflectanceLaw {
    fn draw(&self, snr_db: f64, rng: &mut Rng) -> f64 {
        let r = match *self {
            ReflectanceLaw::TrackSnr {
                snr_anchors_db: (s0, s1),
                reflectance_anchors_db: (r0, r1),
                jitter_db,
            } => {
                let jitter = if jitter_db > 0.0 {
                    rng.random_range(-jitter_db..=jitter_db)
                } else {
                    0.0
                };
                r0 + (r1 - r0) * (snr_db - s0) / (s1 - s0) + jitter
            }
            ReflectanceLaw::Uniform { min_db, max_db } => {
                if max_db > min_db {
                    rng.random_range(min_db..=max_db)
                } else {
                    min_db
                }
            }
        };
        r.clamp(REFLECTANCE_CLAMP_DB.0, REFLECTANCE_CLAMP_DB.1)
    }
}

/// Bounds applied to every drawn reflectance.
pub const REFLECTANCE_CLAMP_DB: (f64, f64) = (-64.0, -10.0);

/// Parameter space from which the traces of a corpus are drawn. Each trace
/// gets a target SNR, a reflectance, a laser power and an attenuation; the
/// averaging count is then solved so the event reaches the target SNR and
/// rejected draws (outside the `n_avg` range) are redrawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationGrid {
    pub n_traces: usize,
    pub fiber_length_m: f64,
    pub sampling_interval_m: f64,
    pub pulse_width_samples: usize,
    pub refractive_index: f64,
    pub base_noise_sigma: f64,
    pub snr_db: (f64, f64),
    /// Spread the SNR evenly over integer-dB bins instead of drawing uniformly.
    pub stratified_snr: bool,
    pub reflectance: ReflectanceLaw,
    pub laser_power_dbm: (f64, f64),
    pub attenuation_db: (f64, f64),
    pub n_avg: (u64, u64),
    /// Spacing choices for a second event; empty means single-event traces.
    pub second_event_spacing_m: Vec<f64>,
    /// Event-free samples kept at the end of each trace for the noise estimate.
    pub noise_tail_samples: usize,
}

impl Default for SimulationGrid {
    fn default() -> Self {
        SimulationGrid {
            n_traces: 6300,
            fiber_length_m: 4000.0,
            sampling_interval_m: 0.8,
            pulse_width_samples: 6,
            refractive_index: 1.468,
            base_noise_sigma: 1e-4,
            snr_db: (2.0, 30.0),
            stratified_snr: false,
            reflectance: ReflectanceLaw::default(),
            laser_power_dbm: (0.0, 12.0),
            attenuation_db: (0.0, 20.0),
            n_avg: (62, 64_000),
            second_event_spacing_m: Vec::new(),
            noise_tail_samples: trace_sim::DEFAULT_NOISE_SAMPLES,
        }
    }
}

/// Acquisition settings and event list of one simulated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSetup {
    pub config: AcquisitionConfig,
    pub events: Vec<(f64, f64)>,
}

impl SimulationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.0 > self.snr_db.1 {
            return Err(Error::invalid("snr_db range is reversed"));
        }
        if self.n_avg.0 < 1 || self.n_avg.0 > self.n_avg.1 {
            return Err(Error::invalid("n_avg range must satisfy 1 <= min <= max"));
        }
        if self.base_noise_sigma <= 0.0 {
            return Err(Error::invalid("grid base_noise_sigma must be > 0"));
        }
        if self.laser_power_dbm.0 > self.laser_power_dbm.1
            || self.attenuation_db.0 > self.attenuation_db.1
        {
            return Err(Error::invalid("grid ranges must be ordered (min, max)"));
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        math::floor(self.fiber_length_m / self.sampling_interval_m + 1e-9) as usize
    }

    fn draw_snr(&self, index: usize, rng: &mut Rng) -> f64 {
        let (lo, hi) = self.snr_db;
        if hi <= lo {
            return lo;
        }
        if self.stratified_snr {
            let first = math::round(lo) as i64;
            let last = math::round(hi) as i64;
            let bins = (last - first + 1).max(1) as usize;
            let b = (first + (index % bins) as i64) as f64;
            let a = (b - 0.5).max(lo);
            let z = (b + 0.5).min(hi);
            if z > a {
                rng.random_range(a..z)
            } else {
                a
            }
        } else {
            rng.random_range(lo..=hi)
        }
    }

    /// Concrete per-trace setups; trace `i` uses the seed `seed ⊕ i`.
    pub fn setups(&self, seed: u64) -> Result<Vec<TraceSetup>> {
        self.validate()?;
        (0..self.n_traces).map(|i| self.setup(seed, i)).collect()
    }

    pub fn setup(&self, seed: u64, index: usize) -> Result<TraceSetup> {
        let trace_seed = rng::derive_seed(seed, index as u64);
        let mut rng = rng::seeded(rng::stream_seed(trace_seed, 0x6_71D));
        let n = self.n_samples();
        let pw = self.pulse_width_samples;
        let max_spacing = self
            .second_event_spacing_m
            .iter()
            .fold(0.0f64, |m, &s| m.max(s));
        let span = pw + math::ceil(max_spacing / self.sampling_interval_m) as usize;
        let lo_idx = n / 20 + 1;
        let hi_idx = n
            .checked_sub(self.noise_tail_samples + span + pw)
            .filter(|&h| h > lo_idx)
            .ok_or_else(|| Error::Configuration("fiber too short for the noise tail".into()))?;

        let noise_db = 10.0 * math::log10(self.base_noise_sigma);
        for _ in 0..10_000 {
            let snr = self.draw_snr(index, &mut rng);
            let r = self.reflectance.draw(snr, &mut rng);
            let p = uniform(&mut rng, self.laser_power_dbm);
            let att = uniform(&mut rng, self.attenuation_db);
            // snr = R + P - att - 10 log10(sigma0) + 5 log10(n_avg)
            let log_navg = (snr - r - p + att + noise_db) / 5.0;
            let n_avg = math::round(math::powf(10.0, log_navg));
            if !(n_avg >= self.n_avg.0 as f64 && n_avg <= self.n_avg.1 as f64) {
                continue;
            }
            let config = AcquisitionConfig {
                fiber_length_m: self.fiber_length_m,
                sampling_interval_m: self.sampling_interval_m,
                pulse_width_samples: pw,
                laser_power_dbm: p,
                attenuation_db: att,
                n_avg: n_avg as u64,
                base_noise_sigma: self.base_noise_sigma,
                refractive_index: self.refractive_index,
                reference_amplitude: 1.0,
                seed: trace_seed,
            };
            let pos_idx = rng.random_range(lo_idx..=hi_idx);
            let mut events = vec![(pos_idx as f64 * self.sampling_interval_m, r)];
            if !self.second_event_spacing_m.is_empty() {
                let k = rng.random_range(0..self.second_event_spacing_m.len());
                let spacing = self.second_event_spacing_m[k];
                let snr2 = self.draw_snr(index, &mut rng);
                let r2 = self.reflectance.draw(snr2, &mut rng);
                events.push((events[0].0 + spacing, r2));
            }
            return Ok(TraceSetup { config, events });
        }
        Err(Error::Configuration(format!(
            "could not draw trace {index}: grid ranges cannot reach the SNR range {:?}",
            self.snr_db
        )))
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Options of [`build_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusOptions {
    pub window_len: usize,
    pub feature_set: FeatureSet,
    pub aux_source: AuxSource,
    pub window_policy: WindowPolicy,
    pub reflectance_range: (f64, f64),
    pub split_fractions: (f64, f64, f64),
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            window_len: DEFAULT_WINDOW_LEN,
            feature_set: FeatureSet::base(),
            aux_source: AuxSource::Truth,
            window_policy: WindowPolicy::AnyOverlap,
            reflectance_range: DEFAULT_REFLECTANCE_RANGE,
            split_fractions: (0.6, 0.2, 0.2),
        }
    }
}

/// Two windows (event + noise) from one trace with aux features attached.
pub fn trace_windows(
    trace: &OtdrTrace,
    opts: &CorpusOptions,
    seed: u64,
) -> Result<(WindowSample, WindowSample)> {
    let (mut event, mut noise) = extract_windows(
        trace,
        opts.window_len,
        opts.window_policy,
        opts.reflectance_range,
        seed,
    )?;
    let tail_sigma = match opts.aux_source {
        AuxSource::Estimated => {
            let n = trace_sim::DEFAULT_NOISE_SAMPLES.min(trace.len());
            Some(trace_sim::estimate_noise_sigma(&trace.samples, n)?)
        }
        AuxSource::Truth => None,
    };
    for w in [&mut event, &mut noise] {
        w.aux = opts
            .feature_set
            .features()
            .iter()
            .map(|&f| match (f, tail_sigma) {
                (AuxFeature::Snr, Some(sigma)) => estimate_window_snr_db(
                    &trace.samples[w.window_origin..w.window_origin + opts.window_len],
                    sigma,
                ),
                _ => f.raw_value(w.snr_db, &trace.config),
            })
            .collect();
    }
    Ok((event, noise))
}

/// Synthesizes every trace of `grid`, extracts two windows per trace,
/// attaches aux features and splits the result.
pub fn build_corpus(grid: &SimulationGrid, opts: &CorpusOptions, seed: u64) -> Result<Corpus> {
    let setups = grid.setups(seed)?;
    let mut samples = Vec::with_capacity(2 * setups.len());
    for (i, setup) in setups.iter().enumerate() {
        let trace = trace_sim::synthesize_trace(&setup.config, &setup.events)?;
        let window_seed = rng::stream_seed(rng::derive_seed(seed, i as u64), 0x3A1D);
        let (event, noise) = trace_windows(&trace, opts, window_seed)?;
        samples.push(event);
        samples.push(noise);
    }
    let corpus = Corpus {
        samples,
        split_tags: Vec::new(),
        feature_set: opts.feature_set.clone(),
        window_len: opts.window_len,
        reflectance_range: opts.reflectance_range,
        sampling_interval_m: grid.sampling_interval_m,
        pulse_width_samples: grid.pulse_width_samples,
    };
    split_corpus(corpus, opts.split_fractions, seed)
}

/// Named grids used by the robustness scenarios.
pub mod scenarios {
    use super::*;

    /// Training-like traces with SNR between 30 and 40 dB.
    pub fn high_snr(base: &SimulationGrid) -> SimulationGrid {
        SimulationGrid {
            snr_db: (30.0, 40.0),
            n_avg: (base.n_avg.0, base.n_avg.1.max(1_000_000)),
            ..base.clone()
        }
    }

    /// Events whose reflectance sits at the bottom of the encoded range,
    /// independent of the SNR.
    pub fn low_reflectance(base: &SimulationGrid) -> SimulationGrid {
        SimulationGrid {
            reflectance: ReflectanceLaw::Uniform {
                min_db: -64.0,
                max_db: -56.0,
            },
            n_avg: (base.n_avg.0, base.n_avg.1.max(1_000_000)),
            ..base.clone()
        }
    }

    /// Two events per trace separated by patch cords of 9, 12, 15 or 18 m.
    pub fn two_event(base: &SimulationGrid) -> SimulationGrid {
        SimulationGrid {
            second_event_spacing_m: vec![9.0, 12.0, 15.0, 18.0],
            ..base.clone()
        }
    }
}

/// Label text for a split fraction triple, e.g. `60/20/20`.
pub fn describe_fractions(f: (f64, f64, f64)) -> String {
    format!(
        "{}/{}/{}",
        math::round(f.0 * 100.0),
        math::round(f.1 * 100.0),
        math::round(f.2 * 100.0)
    )
}
