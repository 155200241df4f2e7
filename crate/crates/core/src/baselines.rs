//! Classical reflective-event detectors: a two-point least-squares edge
//! detector and a rank-1 matched-subspace GLRT with a rectangular template,
//! plus empirical threshold calibration to a false-alarm target.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Relative size below which a residual energy counts as exactly zero.
const ZERO_RESIDUAL: f64 = 1e-20;

pub const DEFAULT_FIT_HALF_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorDecision {
    pub detected: bool,
    /// Defined iff `detected`.
    pub position_index: Option<usize>,
    pub statistic: f64,
    pub threshold: f64,
}

impl DetectorDecision {
    fn new(statistic: f64, position: usize, threshold: f64) -> Self {
        let detected = statistic > threshold;
        DetectorDecision {
            detected,
            position_index: detected.then_some(position),
            statistic,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    TwoPoint { fit_half_width: usize },
    R1msde { pulse_width_samples: usize },
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::TwoPoint { .. } => "two_point",
            Detector::R1msde { .. } => "r1msde",
        }
    }

    /// Decision statistic and its arg-max position.
    pub fn statistic(&self, window: &[f64]) -> Result<(f64, usize)> {
        match *self {
            Detector::TwoPoint { fit_half_width } => two_point_statistic(window, fit_half_width),
            Detector::R1msde { pulse_width_samples } => r1msde_statistic(window, pulse_width_samples),
        }
    }

    pub fn detect(&self, window: &[f64], threshold: f64) -> Result<DetectorDecision> {
        let (s, k) = self.statistic(window)?;
        Ok(DetectorDecision::new(s, k, threshold))
    }
}

/// Least-squares line through `ys` at abscissae `x0, x0+1, ...`; returns
/// the fitted value at `at` and the residual sum of squares.
fn fit_line(ys: &[f64], x0: f64, at: f64) -> (f64, f64) {
    let n = ys.len() as f64;
    let xm = x0 + (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = x0 + i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ssr = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let r = y - (ym + slope * (x0 + i as f64 - xm));
            r * r
        })
        .sum();
    (ym + slope * (at - xm), ssr)
}

fn two_point_statistic(window: &[f64], h: usize) -> Result<(f64, usize)> {
    if h < 3 {
        return Err(Error::invalid("fit_half_width must be >= 3 to leave residual degrees of freedom"));
    }
    if window.len() < 2 * h + 1 {
        return Err(Error::invalid(format!(
            "window of {} samples is shorter than 2 * {h} + 1",
            window.len()
        )));
    }
    let energy: f64 = window.iter().map(|x| x * x).sum();
    let dof = (2 * h - 4) as f64;
    let mut best = (f64::NEG_INFINITY, h);
    for k in h..=window.len() - h {
        let split = k as f64 - 0.5;
        let (left, ssr_l) = fit_line(&window[k - h..k], (k - h) as f64, split);
        let (right, ssr_r) = fit_line(&window[k..k + h], k as f64, split);
        let jump = right - left;
        let ssr = ssr_l + ssr_r;
        let stat = if ssr <= ZERO_RESIDUAL * energy.max(f64::MIN_POSITIVE) {
            if jump > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            jump / math::sqrt(ssr / dof)
        };
        if stat > best.0 {
            best = (stat, k);
        }
    }
    Ok(best)
}

/// Two-point method: independent least-squares lines on `fit_half_width`
/// samples either side of every split; the statistic is the largest rising
/// jump between the two fits at the split, in units of the pooled residual
/// standard deviation.
pub fn two_point_detect(window: &[f64], fit_half_width: usize, threshold: f64) -> Result<DetectorDecision> {
    Detector::TwoPoint { fit_half_width }.detect(window, threshold)
}

fn r1msde_statistic(window: &[f64], w: usize) -> Result<(f64, usize)> {
    let m = window.len();
    if w == 0 || m < w {
        return Err(Error::invalid(format!(
            "window of {m} samples cannot hold a pulse of width {w}"
        )));
    }
    if window.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("window contains non-finite samples"));
    }
    let mean = math::mean(window);
    let centered: Vec<f64> = window.iter().map(|x| x - mean).collect();
    let energy: f64 = centered.iter().map(|x| x * x).sum();
    if energy == 0.0 || w == m {
        return Ok((0.0, 0));
    }
    // squared norm of the mean-removed rectangle
    let template_norm = w as f64 * (1.0 - w as f64 / m as f64);
    let mut sum: f64 = centered[..w].iter().sum();
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..=m - w {
        if k > 0 {
            sum += centered[k + w - 1] - centered[k - 1];
        }
        let proj = sum * sum / template_norm;
        let rest = energy - proj;
        let stat = if rest <= 1e-12 * energy {
            if proj > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            proj / rest
        };
        // a reflective event raises the trace; a dip is not a candidate
        let stat = if sum > 0.0 { stat } else { 0.0 };
        if stat > best.0 {
            best = (stat, k);
        }
    }
    Ok(best)
}

/// Rank-1 matched-subspace GLRT: for every origin `k`, the energy of the
/// mean-removed window captured by the mean-removed unit rectangle at `k`
/// divided by the energy left over. Invariant to `c * x + b` for `c > 0`.
pub fn r1msde_detect(window: &[f64], pulse_width_samples: usize, threshold: f64) -> Result<DetectorDecision> {
    Detector::R1msde { pulse_width_samples }.detect(window, threshold)
}

/// Smallest threshold whose strict exceedance rate over `statistics` is at
/// most `target_pfa`: the empirical `1 - target_pfa` quantile.
pub fn threshold_from_statistics(statistics: &[f64], target_pfa: f64) -> Result<f64> {
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::invalid(format!("target_pfa {target_pfa} outside (0, 1)")));
    }
    let n = statistics.len();
    if (n as f64) < 100.0 / target_pfa - 1e-9 {
        return Err(Error::invalid(format!(
            "{n} noise windows are too few for P_FA {target_pfa} (need {})",
            math::ceil(100.0 / target_pfa)
        )));
    }
    if statistics.iter().any(|s| s.is_nan()) {
        return Err(Error::CalibrationFailure("NaN statistic".into()));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::CalibrationFailure(format!(
            "all {n} statistics equal {}",
            sorted[0]
        )));
    }
    let rank = (math::ceil((1.0 - target_pfa) * n as f64) as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// Calibrates `detector` on pure-noise windows.
pub fn calibrate_threshold<'a, I>(detector: &Detector, noise_windows: I, target_pfa: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let stats = noise_windows
        .into_iter()
        .map(|w| detector.statistic(w).map(|(s, _)| s))
        .collect::<Result<Vec<f64>>>()?;
    threshold_from_statistics(&stats, target_pfa)
}

/// `n` windows of i.i.d. standard normal samples.
pub fn white_noise_windows(len: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| (0..len).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_sim::rectangle;
    use alloc::vec;

    fn rate(det: &Detector, windows: &[Vec<f64>], threshold: f64) -> f64 {
        let hits = windows
            .iter()
            .filter(|w| det.detect(w, threshold).unwrap().detected)
            .count();
        hits as f64 / windows.len() as f64
    }

    #[test]
    fn two_point_examples() {
        let d = two_point_detect(&[0.7; 30], 5, 1.0).unwrap();
        assert_eq!(d.statistic, 0.0);
        assert!(!d.detected);

        let mut step = vec![0.0; 30];
        step[17..].fill(1.0);
        let d = two_point_detect(&step, 5, 1e6).unwrap();
        assert!(d.statistic.is_infinite());
        assert!(d.detected);
        assert_eq!(d.position_index, Some(17));

        assert!(two_point_detect(&[0.0; 10], 5, 1.0).is_err());
    }

    #[test]
    fn two_point_beats_false_alarm_rate_on_steps() {
        let det = Detector::TwoPoint { fit_half_width: 5 };
        let calib = white_noise_windows(30, 2000, 1);
        let thr = calibrate_threshold(&det, calib.iter().map(|w| w.as_slice()), 0.1).unwrap();
        let flat = white_noise_windows(30, 200, 2);
        let steps: Vec<Vec<f64>> = white_noise_windows(30, 200, 3)
            .into_iter()
            .map(|mut w| {
                w[15..].iter_mut().for_each(|v| *v += 3.0);
                w
            })
            .collect();
        assert!(rate(&det, &steps, thr) > rate(&det, &flat, thr));
    }

    #[test]
    fn r1msde_examples() {
        let x: Vec<f64> = rectangle(100, 40, 6, 2.5).iter().map(|v| v + 7.0).collect();
        let d = r1msde_detect(&x, 6, 1e9).unwrap();
        assert!(d.statistic.is_infinite());
        assert_eq!(d.position_index, Some(40));

        let d = r1msde_detect(&[3.0; 20], 6, 0.0).unwrap();
        assert_eq!(d.statistic, 0.0);
        assert!(!d.detected);
        assert!(r1msde_detect(&[1.0; 4], 6, 0.0).is_err());
    }

    #[test]
    fn noiseless_rectangles_are_located_exactly() {
        for origin in [6, 20, 33] {
            let x = rectangle(50, origin, 6, 1.0);
            let (_, k) = Detector::R1msde { pulse_width_samples: 6 }.statistic(&x).unwrap();
            assert_eq!(k, origin);
            let (_, k) = Detector::TwoPoint { fit_half_width: 5 }.statistic(&x).unwrap();
            assert_eq!(k, origin);
        }
    }

    #[test]
    fn calibration_hits_target_on_held_out_noise() {
        for det in [
            Detector::R1msde { pulse_width_samples: 6 },
            Detector::TwoPoint { fit_half_width: 5 },
        ] {
            let calib = white_noise_windows(100, 2000, 11);
            let thr = calibrate_threshold(&det, calib.iter().map(|w| w.as_slice()), 0.1).unwrap();
            let held = white_noise_windows(100, 2000, 12);
            let pfa = rate(&det, &held, thr);
            assert!((pfa - 0.1).abs() <= 0.02, "{} {pfa}", det.name());
        }
    }

    #[test]
    fn threshold_examples() {
        let stats: Vec<f64> = (0..1000).map(|i| i as f64 - 499.5).collect();
        let t = threshold_from_statistics(&stats, 0.5).unwrap();
        assert!(t.abs() <= 1.0);
        let t1 = threshold_from_statistics(&stats, 0.1).unwrap();
        let t2 = threshold_from_statistics(&stats, 0.5).unwrap();
        assert!(t1 > t2);
        assert!(matches!(
            threshold_from_statistics(&[1.0; 2000], 0.1),
            Err(Error::CalibrationFailure(_))
        ));
        assert!(threshold_from_statistics(&stats, 0.01).is_err());
        assert!(threshold_from_statistics(&stats, 1.0).is_err());
    }

    #[test]
    fn r1msde_is_affine_invariant() {
        let x = &white_noise_windows(60, 1, 5)[0];
        let (s, k) = r1msde_statistic(x, 6).unwrap();
        let y: Vec<f64> = x.iter().map(|v| 3.7 * v - 12.0).collect();
        let (s2, k2) = r1msde_statistic(&y, 6).unwrap();
        assert_eq!(k, k2);
        assert!((s - s2).abs() <= 1e-10 * s.abs());
    }
}
