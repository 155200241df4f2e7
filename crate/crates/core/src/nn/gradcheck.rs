use alloc::vec::Vec;

use super::model::batch_gradient;
use super::params::ModelParams;
use crate::dataset::WindowSample;
use crate::error::Result;

/// Result of comparing the analytic gradient against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Index of the parameter with the largest relative error.
    pub worst_index: usize,
}

/// Central finite differences with step `eps` over every parameter. The
/// relative error of a component is `|g - fd| / max(|g|, |fd|, floor)`, the
/// floor keeping vanishing components from dominating.
pub fn finite_difference_check(
    params: &ModelParams,
    batch: &[&WindowSample],
    eps: f64,
    floor: f64,
) -> Result<GradientCheck> {
    let mut analytic = Vec::new();
    batch_gradient(params, batch, &mut analytic)?;
    let mut probe = params.clone();
    let mut scratch = Vec::new();
    let mut out = GradientCheck {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
    };
    for (k, &g) in analytic.iter().enumerate() {
        let orig = probe.values[k];
        probe.values[k] = orig + eps;
        let up = batch_gradient(&probe, batch, &mut scratch)?.total;
        probe.values[k] = orig - eps;
        let down = batch_gradient(&probe, batch, &mut scratch)?.total;
        probe.values[k] = orig;
        let fd = (up - down) / (2.0 * eps);
        let abs = (g - fd).abs();
        let rel = abs / g.abs().max(fd.abs()).max(floor);
        if rel > out.max_relative_error {
            out.max_relative_error = rel;
            out.worst_index = k;
        }
        out.max_abs_error = out.max_abs_error.max(abs);
    }
    Ok(out)
}
