//! OTDR trace synthesis and the SNR / timing quantities derived from a trace.
//!
//! Traces live in the low-dynamic-range regime: a flat near-zero baseline,
//! one rectangular pulse per reflective event and additive white Gaussian
//! noise whose standard deviation shrinks as `1/sqrt(n_avg)`. Averaging is
//! applied analytically instead of simulating each raw record.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Speed of light used for the averaging time (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.9979e8;

/// `snr_db = SNR_DB_FACTOR * log10(a / sigma)`. Amplitude ratios are
/// expressed as power-style decibels.
pub const SNR_DB_FACTOR: f64 = 10.0;

/// Number of tail samples used for the noise estimate.
pub const DEFAULT_NOISE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub fiber_length_m: f64,
    pub sampling_interval_m: f64,
    pub pulse_width_samples: usize,
    pub laser_power_dbm: f64,
    /// Attenuation applied to the received signal.
    pub attenuation_db: f64,
    /// Number of averaged records.
    pub n_avg: u64,
    /// Noise standard deviation of a single record. Zero gives a noiseless trace.
    pub base_noise_sigma: f64,
    pub refractive_index: f64,
    /// Calibration constant mapping reflectance to peak height.
    pub reference_amplitude: f64,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            fiber_length_m: 10_000.0,
            sampling_interval_m: 0.8,
            pulse_width_samples: 6,
            laser_power_dbm: 0.0,
            attenuation_db: 0.0,
            n_avg: 1000,
            base_noise_sigma: 1e-4,
            refractive_index: 1.468,
            reference_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("fiber_length_m", self.fiber_length_m),
            ("sampling_interval_m", self.sampling_interval_m),
            ("laser_power_dbm", self.laser_power_dbm),
            ("attenuation_db", self.attenuation_db),
            ("base_noise_sigma", self.base_noise_sigma),
            ("refractive_index", self.refractive_index),
            ("reference_amplitude", self.reference_amplitude),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if self.sampling_interval_m <= 0.0 {
            return Err(Error::invalid("sampling_interval_m must be > 0"));
        }
        if self.pulse_width_samples < 1 {
            return Err(Error::invalid("pulse_width_samples must be >= 1"));
        }
        if self.n_avg < 1 {
            return Err(Error::invalid("n_avg must be >= 1"));
        }
        if self.base_noise_sigma < 0.0 {
            return Err(Error::invalid("base_noise_sigma must be >= 0"));
        }
        if self.reference_amplitude <= 0.0 {
            return Err(Error::invalid("reference_amplitude must be > 0"));
        }
        if self.fiber_length_m / self.sampling_interval_m < 2.0 * self.pulse_width_samples as f64 {
            return Err(Error::invalid(
                "fiber_length_m / sampling_interval_m must be >= 2 * pulse_width_samples",
            ));
        }
        Ok(())
    }

    /// `floor(fiber_length_m / sampling_interval_m)`.
    pub fn n_samples(&self) -> usize {
        // tolerate representation error such as 4000 / 0.8 = 4999.999...
        math::floor(self.fiber_length_m / self.sampling_interval_m + 1e-9) as usize
    }

    /// Noise standard deviation after averaging.
    pub fn noise_sigma(&self) -> f64 {
        self.base_noise_sigma / math::sqrt(self.n_avg as f64)
    }

    pub fn index_of(&self, position_m: f64) -> usize {
        math::round(position_m / self.sampling_interval_m) as usize
    }
}

/// Ground truth for one reflective event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub position_index: usize,
    pub position_m: f64,
    pub reflectance_db: f64,
    pub peak_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtdrTrace {
    pub samples: Vec<f64>,
    pub config: AcquisitionConfig,
    pub events: Vec<EventTruth>,
    /// Ground-truth SNR of each event in dB, same order as `events`.
    pub snr_db: Vec<f64>,
}

impl OtdrTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Half-open sample span `[start, end)` covered by an event's pulse.
    pub fn pulse_span(&self, event: &EventTruth) -> (usize, usize) {
        (
            event.position_index,
            event.position_index + self.config.pulse_width_samples,
        )
    }
}

/// Peak height of a reflective event with reflectance `reflectance_db`:
/// `A_ref * 10^(R/10) * 10^((P_laser - att)/10)`.
pub fn reflectance_to_peak_height(reflectance_db: f64, config: &AcquisitionConfig) -> Result<f64> {
    if !reflectance_db.is_finite()
        || !config.laser_power_dbm.is_finite()
        || !config.attenuation_db.is_finite()
        || !config.reference_amplitude.is_finite()
    {
        return Err(Error::invalid("reflectance mapping needs finite inputs"));
    }
    if reflectance_db > 0.0 {
        return Err(Error::invalid("reflectance_db must be <= 0"));
    }
    Ok(config.reference_amplitude
        * math::db_to_linear(reflectance_db)
        * math::db_to_linear(config.laser_power_dbm - config.attenuation_db))
}

/// Inverse of [`reflectance_to_peak_height`].
pub fn peak_height_to_reflectance(peak_height: f64, config: &AcquisitionConfig) -> f64 {
    10.0 * math::log10(peak_height / config.reference_amplitude)
        - (config.laser_power_dbm - config.attenuation_db)
}

/// SNR in dB from an amplitude ratio; `+inf` when the noise is zero.
pub fn ratio_to_db(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        f64::INFINITY
    } else {
        SNR_DB_FACTOR * math::log10(ratio)
    }
}

/// Synthesizes one trace. Events are `(position_m, reflectance_db)` pairs,
/// sorted by position and non-overlapping.
pub fn synthesize_trace(config: &AcquisitionConfig, events: &[(f64, f64)]) -> Result<OtdrTrace> {
    config.validate()?;
    let n = config.n_samples();
    let pw = config.pulse_width_samples;
    let sigma = config.noise_sigma();

    let mut truths = Vec::with_capacity(events.len());
    for &(position_m, reflectance_db) in events {
        if !position_m.is_finite() || position_m <= 0.0 || position_m >= config.fiber_length_m {
            return Err(Error::invalid(format!(
                "event position {position_m} m outside (0, {})",
                config.fiber_length_m
            )));
        }
        let position_index = config.index_of(position_m);
        if position_index + pw > n {
            return Err(Error::invalid(format!(
                "event pulse at index {position_index} runs past the trace end ({n})"
            )));
        }
        if let Some(prev) = truths.last() {
            let prev: &EventTruth = prev;
            if position_index < prev.position_index {
                return Err(Error::invalid("events must be sorted by position"));
            }
            if position_index - prev.position_index < pw {
                return Err(Error::invalid(format!(
                    "events at indices {} and {position_index} overlap",
                    prev.position_index
                )));
            }
        }
        let peak_height = reflectance_to_peak_height(reflectance_db, config)?;
        truths.push(EventTruth {
            position_index,
            position_m: position_index as f64 * config.sampling_interval_m,
            reflectance_db,
            peak_height,
        });
    }

    let mut rng = rng::seeded(config.seed);
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    for ev in &truths {
        for s in &mut samples[ev.position_index..ev.position_index + pw] {
            *s += ev.peak_height;
        }
    }

    let snr_db = truths
        .iter()
        .map(|ev| {
            if sigma == 0.0 {
                f64::INFINITY
            } else {
                ratio_to_db(ev.peak_height / sigma)
            }
        })
        .collect();

    Ok(OtdrTrace {
        samples,
        config: config.clone(),
        events: truths,
        snr_db,
    })
}

/// Noise standard deviation estimated from the final `n` samples as
/// `sqrt(mean(x^2) - mean(x)^2)`.
pub fn estimate_noise_sigma(samples: &[f64], n: usize) -> Result<f64> {
    if n == 0 || n > samples.len() {
        return Err(Error::invalid(format!(
            "noise window of {n} samples does not fit a trace of {}",
            samples.len()
        )));
    }
    let tail = &samples[samples.len() - n..];
    let inv = 1.0 / n as f64;
    let (sum, sum_sq) = tail
        .iter()
        .fold((0.0, 0.0), |(s, q), &x| (s + x, q + x * x));
    let mean = sum * inv;
    let radicand = sum_sq * inv - mean * mean;
    Ok(math::sqrt(radicand.max(0.0)))
}

/// Event height: mean of the two largest samples in
/// `[position_index, position_index + 2 * pulse_width]`.
pub fn estimate_peak_height(samples: &[f64], position_index: usize, pulse_width: usize) -> Result<f64> {
    let end = position_index + 2 * pulse_width;
    if end >= samples.len() {
        return Err(Error::invalid(format!(
            "peak window [{position_index}, {end}] exceeds trace of {}",
            samples.len()
        )));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in &samples[position_index..=end] {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    Ok(0.5 * (first + second))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub ratio: f64,
    pub snr_db: f64,
    /// Set when the estimated noise is exactly zero.
    pub infinite: bool,
}

/// Measured SNR of the event starting at `position_index`.
pub fn compute_snr(
    samples: &[f64],
    position_index: usize,
    pulse_width: usize,
    n_noise: usize,
) -> Result<SnrEstimate> {
    let a = estimate_peak_height(samples, position_index, pulse_width)?;
    let sigma = estimate_noise_sigma(samples, n_noise)?;
    if sigma == 0.0 {
        return Ok(SnrEstimate {
            ratio: f64::INFINITY,
            snr_db: f64::INFINITY,
            infinite: true,
        });
    }
    let ratio = a / sigma;
    Ok(SnrEstimate {
        ratio,
        snr_db: ratio_to_db(ratio),
        infinite: false,
    })
}

/// Acquisition time of `n_avg` round trips: `2 * n_avg * L * n / c`.
pub fn averaging_time(n_avg: f64, fiber_length_m: f64, refractive_index: f64) -> f64 {
    2.0 * n_avg * fiber_length_m * refractive_index / SPEED_OF_LIGHT
}

/// Convenience for tests and callers that want a noiseless rectangle.
pub fn rectangle(len: usize, origin: usize, width: usize, height: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for s in v.iter_mut().skip(origin).take(width) {
        *s = height;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn unity() -> AcquisitionConfig {
        AcquisitionConfig {
            laser_power_dbm: 0.0,
            attenuation_db: 0.0,
            reference_amplitude: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn reflectance_mapping_examples() {
        let cfg = unity();
        assert_eq!(reflectance_to_peak_height(0.0, &cfg).unwrap(), 1.0);
        assert!(rel(reflectance_to_peak_height(-10.0, &cfg).unwrap(), 0.1) < 1e-12);
        let a = reflectance_to_peak_height(-14.0, &cfg).unwrap();
        assert!((a - 0.0398).abs() < 5e-5, "{a}");
        assert!(reflectance_to_peak_height(f64::NAN, &cfg).is_err());
        assert!(reflectance_to_peak_height(1.0, &cfg).is_err());
    }

    #[test]
    fn reflectance_mapping_monotone() {
        let mut cfg = unity();
        let base = reflectance_to_peak_height(-30.0, &cfg).unwrap();
        assert!(reflectance_to_peak_height(-29.0, &cfg).unwrap() > base);
        cfg.laser_power_dbm = 3.0;
        assert!(reflectance_to_peak_height(-30.0, &cfg).unwrap() > base);
        cfg.laser_power_dbm = 0.0;
        cfg.attenuation_db = 3.0;
        assert!(reflectance_to_peak_height(-30.0, &cfg).unwrap() < base);
    }

    #[test]
    fn noiseless_trace_is_exact_rectangle() {
        let cfg = AcquisitionConfig {
            fiber_length_m: 800.0,
            base_noise_sigma: 0.0,
            ..unity()
        };
        let t = synthesize_trace(&cfg, &[(400.0, -10.0)]).unwrap();
        assert_eq!(t.len(), 1000);
        let ev = &t.events[0];
        assert_eq!(ev.position_index, 500);
        let expected = rectangle(1000, 500, 6, ev.peak_height);
        assert_eq!(t.samples, expected);
        assert!(t.snr_db[0].is_infinite());
    }

    #[test]
    fn two_events_nine_metres_apart_are_disjoint() {
        let cfg = AcquisitionConfig {
            fiber_length_m: 800.0,
            base_noise_sigma: 0.0,
            ..unity()
        };
        let t = synthesize_trace(&cfg, &[(400.0, -20.0), (409.0, -14.0)]).unwrap();
        let (a, b) = (&t.events[0], &t.events[1]);
        assert!(b.position_index >= a.position_index + 6);
        let nonzero: Vec<usize> = (0..t.len()).filter(|&i| t.samples[i] != 0.0).collect();
        assert_eq!(nonzero.len(), 12);
        assert!(nonzero[..6].iter().all(|&i| t.samples[i] == a.peak_height));
        assert!(nonzero[6..].iter().all(|&i| t.samples[i] == b.peak_height));
    }

    #[test]
    fn synthesis_rejects_bad_layouts() {
        let cfg = AcquisitionConfig {
            fiber_length_m: 800.0,
            ..unity()
        };
        assert!(synthesize_trace(&cfg, &[(400.0, -20.0), (402.0, -20.0)]).is_err());
        assert!(synthesize_trace(&cfg, &[(409.0, -20.0), (400.0, -20.0)]).is_err());
        assert!(synthesize_trace(&cfg, &[(0.0, -20.0)]).is_err());
        assert!(synthesize_trace(&cfg, &[(800.0, -20.0)]).is_err());
        assert!(synthesize_trace(&cfg, &[(799.0, -20.0)]).is_err());
        let bad = AcquisitionConfig { n_avg: 0, ..cfg.clone() };
        assert!(synthesize_trace(&bad, &[]).is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = AcquisitionConfig {
            fiber_length_m: 2000.0,
            seed: 42,
            ..Default::default()
        };
        let a = synthesize_trace(&cfg, &[(1000.0, -30.0)]).unwrap();
        let b = synthesize_trace(&cfg, &[(1000.0, -30.0)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_estimate_examples() {
        assert_eq!(estimate_noise_sigma(&[3.0; 50], 50).unwrap(), 0.0);
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((estimate_noise_sigma(&alt, 1000).unwrap() - 1.0).abs() < 1e-12);
        assert!(estimate_noise_sigma(&alt, 1001).is_err());
        assert!(estimate_noise_sigma(&alt, 0).is_err());
    }

    #[test]
    fn peak_height_examples() {
        let w = [1.0, 2.0, 5.0, 7.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(estimate_peak_height(&w, 0, 6).unwrap(), 6.0);
        assert_eq!(estimate_peak_height(&[2.5; 20], 3, 6).unwrap(), 2.5);
        assert!(estimate_peak_height(&[0.0; 12], 0, 6).is_err());
        assert!(estimate_peak_height(&[0.0; 13], 0, 6).is_ok());
    }

    #[test]
    fn snr_examples() {
        let mut x: Vec<f64> = (0..1100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for v in &mut x[10..16] {
            *v = 1.0;
        }
        let s = compute_snr(&x, 10, 6, 1000).unwrap();
        assert!((s.ratio - 1.0).abs() < 1e-12);
        assert!(s.snr_db.abs() < 1e-12);
        for v in &mut x[10..16] {
            *v = 10.0;
        }
        let s = compute_snr(&x, 10, 6, 1000).unwrap();
        assert!((s.snr_db - 10.0).abs() < 1e-12);

        let flat = rectangle(1100, 10, 6, 1.0);
        let s = compute_snr(&flat, 10, 6, 1000).unwrap();
        assert!(s.infinite && s.snr_db.is_infinite());
    }

    #[test]
    fn averaging_time_examples() {
        assert_eq!(averaging_time(0.0, 1e4, 1.5), 0.0);
        assert!(rel(averaging_time(1.0, 1e4, 1.5), 1.0007e-4) < 1e-4);
        assert!(rel(averaging_time(62.0, 8785.0, 1.468), 5.33e-3) < 1e-3);
        let t = averaging_time(37.0, 1234.0, 1.468);
        assert_eq!(averaging_time(74.0, 1234.0, 1.468), 2.0 * t);
    }
}
