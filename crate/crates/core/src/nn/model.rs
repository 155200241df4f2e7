use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::arch::{AuxInjection, Task};
use super::lstm::{step, LstmParams};
use super::params::{Layout, ModelParams};
use crate::dataset::{Targets, WindowSample};
use crate::error::{Error, Result};
use crate::math::{self, sigmoid, tanh};

/// Probability clamp used by the cross-entropy term.
pub const BCE_EPS: f64 = 1e-7;

/// Weights `(alpha, beta, delta)` of the detection, position and reflectance losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.5,
            beta: 0.3,
            delta: 0.2,
        }
    }
}

impl LossWeights {
    pub fn of(&self, task: Task) -> f64 {
        match task {
            Task::Detection => self.alpha,
            Task::Position => self.beta,
            Task::Reflectance => self.delta,
        }
    }
}

/// Outputs of the heads present in the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_event: Option<f64>,
    pub position: Option<f64>,
    pub reflectance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce: f64,
    pub position_mse: f64,
    pub reflectance_mse: f64,
    pub n: usize,
    pub n_positive: usize,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    steps: usize,
    n_c: usize,
    n_inp: usize,
    x: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    tanh_c: Vec<f64>,
    enc: Vec<f64>,
    aux: Vec<f64>,
    /// Per tower, per hidden layer activations.
    tower_act: Vec<Vec<Vec<f64>>>,
    /// Raw head outputs indexed by `Task::index`.
    raw: [f64; 3],
}

impl Forward {
    pub fn new(params: &ModelParams) -> Self {
        let arch = &params.arch;
        let layout = params.layout();
        Self::with_layout(params, &layout, arch.n_c)
    }

    fn with_layout(params: &ModelParams, layout: &Layout, n_c: usize) -> Self {
        let arch = &params.arch;
        Forward {
            steps: 0,
            n_c,
            n_inp: arch.n_inp(),
            x: Vec::new(),
            gates: Vec::new(),
            c: vec![0.0; n_c],
            h: vec![0.0; n_c],
            tanh_c: Vec::new(),
            enc: vec![0.0; arch.n_enc()],
            aux: vec![0.0; arch.n_aux],
            tower_act: layout
                .towers
                .iter()
                .map(|t| t.hidden.iter().map(|l| vec![0.0; l.n_out]).collect())
                .collect(),
            raw: [f64::NAN; 3],
        }
    }

    fn run(&mut self, params: &ModelParams, layout: &Layout, sample: &WindowSample) -> Result<()> {
        let arch = &params.arch;
        if sample.aux.len() != arch.n_aux {
            return Err(Error::invalid(format!(
                "model expects {} aux features ({}), window carries {}",
                arch.n_aux,
                params.feature_set,
                sample.aux.len()
            )));
        }
        if sample.features.is_empty() {
            return Err(Error::invalid("empty window"));
        }
        for (k, (&f, &raw)) in params.feature_set.features().iter().zip(&sample.aux).enumerate() {
            self.aux[k] = f.scale(raw);
        }

        let n_c = self.n_c;
        let n_inp = self.n_inp;
        let steps = sample.features.len();
        self.steps = steps;
        self.x.resize(steps * n_inp, 0.0);
        for (t, &v) in sample.features.iter().enumerate() {
            let row = &mut self.x[t * n_inp..(t + 1) * n_inp];
            row[0] = v;
            if arch.aux_injection == AuxInjection::Timestep {
                row[1..].copy_from_slice(&self.aux);
            }
        }
        self.gates.resize(steps * 4 * n_c, 0.0);
        self.c.resize((steps + 1) * n_c, 0.0);
        self.h.resize((steps + 1) * n_c, 0.0);
        self.tanh_c.resize(steps * n_c, 0.0);
        self.c[..n_c].fill(0.0);
        self.h[..n_c].fill(0.0);

        let v = &params.values;
        let lstm = LstmParams {
            u: &v[layout.u..layout.u + 4 * n_c * n_inp],
            w: &v[layout.w..layout.w + 4 * n_c * n_c],
            b: &v[layout.b..layout.b + 4 * n_c],
            n_c,
            n_inp,
        };
        for t in 0..steps {
            let (c_prev, c_next) = self.c[t * n_c..(t + 2) * n_c].split_at_mut(n_c);
            let (h_prev, h_next) = self.h[t * n_c..(t + 2) * n_c].split_at_mut(n_c);
            step(
                &lstm,
                &self.x[t * n_inp..(t + 1) * n_inp],
                h_prev,
                c_prev,
                &mut self.gates[t * 4 * n_c..(t + 1) * 4 * n_c],
                h_next,
                c_next,
                &mut self.tanh_c[t * n_c..(t + 1) * n_c],
            );
        }

        self.enc[..n_c].copy_from_slice(&self.h[steps * n_c..]);
        if arch.aux_injection == AuxInjection::Encoder {
            self.enc[n_c..].copy_from_slice(&self.aux);
        }

        self.raw = [f64::NAN; 3];
        for (ti, tower) in layout.towers.iter().enumerate() {
            let acts = &mut self.tower_act[ti];
            for (li, layer) in tower.hidden.iter().enumerate() {
                let (done, rest) = acts.split_at_mut(li);
                let input: &[f64] = if li == 0 { &self.enc } else { &done[li - 1] };
                let out = &mut rest[0];
                for r in 0..layer.n_out {
                    let row = &v[layer.w + r * layer.n_in..layer.w + (r + 1) * layer.n_in];
                    let z = v[layer.b + r] + math::dot(row, input);
                    out[r] = tanh(z);
                }
            }
            let last: &[f64] = acts.last().map(|a| a.as_slice()).unwrap_or(&self.enc);
            let head = &tower.head;
            let z = v[head.b] + math::dot(&v[head.w..head.w + head.n_in], last);
            self.raw[tower.task.index()] = z;
        }

        if self.raw.iter().zip(Task::ALL).any(|(r, t)| arch.has_task(t) && !r.is_finite()) {
            let block = params
                .non_finite_block(&params.values)
                .unwrap_or_else(|| String::from("activations"));
            return Err(Error::NumericOverflow { block });
        }
        Ok(())
    }

    pub fn prediction(&self) -> Prediction {
        let get = |t: Task| {
            let r = self.raw[t.index()];
            (!r.is_nan()).then_some(r)
        };
        Prediction {
            p_event: get(Task::Detection).map(sigmoid),
            position: get(Task::Position),
            reflectance: get(Task::Reflectance),
        }
    }

    /// Accumulates into `grad` the gradient of `sum_k d_raw[k] * raw_k`.
    fn backward(&self, params: &ModelParams, layout: &Layout, d_raw: [f64; 3], grad: &mut [f64]) {
        let v = &params.values;
        let n_c = self.n_c;
        let n_inp = self.n_inp;
        let mut d_enc = vec![0.0; self.enc.len()];

        for (ti, tower) in layout.towers.iter().enumerate() {
            let d = d_raw[tower.task.index()];
            if d == 0.0 {
                continue;
            }
            let acts = &self.tower_act[ti];
            let head = &tower.head;
            let last: &[f64] = acts.last().map(|a| a.as_slice()).unwrap_or(&self.enc);
            grad[head.b] += d;
            let mut d_act: Vec<f64> = Vec::with_capacity(head.n_in);
            for k in 0..head.n_in {
                grad[head.w + k] += d * last[k];
                d_act.push(d * v[head.w + k]);
            }
            for li in (0..tower.hidden.len()).rev() {
                let layer = &tower.hidden[li];
                let out = &acts[li];
                let input: &[f64] = if li == 0 { &self.enc } else { &acts[li - 1] };
                let mut d_in = vec![0.0; layer.n_in];
                for r in 0..layer.n_out {
                    let dz = d_act[r] * (1.0 - out[r] * out[r]);
                    if dz == 0.0 {
                        continue;
                    }
                    grad[layer.b + r] += dz;
                    let base = layer.w + r * layer.n_in;
                    for k in 0..layer.n_in {
                        grad[base + k] += dz * input[k];
                        d_in[k] += dz * v[base + k];
                    }
                }
                d_act = d_in;
            }
            for (a, b) in d_enc.iter_mut().zip(&d_act) {
                *a += b;
            }
        }

        // backpropagation through time
        let mut dh = d_enc[..n_c].to_vec();
        let mut dc = vec![0.0; n_c];
        let mut dz = vec![0.0; 4 * n_c];
        let mut dh_prev = vec![0.0; n_c];
        for t in (0..self.steps).rev() {
            let gates = &self.gates[t * 4 * n_c..(t + 1) * 4 * n_c];
            let c_prev = &self.c[t * n_c..(t + 1) * n_c];
            let h_prev = &self.h[t * n_c..(t + 1) * n_c];
            let tanh_c = &self.tanh_c[t * n_c..(t + 1) * n_c];
            for k in 0..n_c {
                let f = gates[k];
                let i = gates[n_c + k];
                let g = gates[2 * n_c + k];
                let o = gates[3 * n_c + k];
                let tc = tanh_c[k];
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                dz[k] = dck * c_prev[k] * f * (1.0 - f);
                dz[n_c + k] = dck * g * i * (1.0 - i);
                dz[2 * n_c + k] = dck * i * (1.0 - g * g);
                dz[3 * n_c + k] = dh[k] * tc * o * (1.0 - o);
                dc[k] = dck * f;
            }
            let x = &self.x[t * n_inp..(t + 1) * n_inp];
            dh_prev.fill(0.0);
            for r in 0..4 * n_c {
                let d = dz[r];
                grad[layout.b + r] += d;
                let ub = layout.u + r * n_inp;
                for k in 0..n_inp {
                    grad[ub + k] += d * x[k];
                }
                let wb = layout.w + r * n_c;
                math::axpy(d, h_prev, &mut grad[wb..wb + n_c]);
                math::axpy(d, &v[wb..wb + n_c], &mut dh_prev);
            }
            core::mem::swap(&mut dh, &mut dh_prev);
        }
    }
}

/// Model outputs for one window.
pub fn model_forward(window: &WindowSample, params: &ModelParams) -> Result<Prediction> {
    let layout = params.layout();
    let mut fwd = Forward::with_layout(params, &layout, params.arch.n_c);
    fwd.run(params, &layout, window)?;
    Ok(fwd.prediction())
}

/// Batch predictions sharing one activation buffer.
pub fn predict_all<'a, I>(params: &ModelParams, windows: I) -> Result<Vec<Prediction>>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let layout = params.layout();
    let mut fwd = Forward::with_layout(params, &layout, params.arch.n_c);
    windows
        .into_iter()
        .map(|w| {
            fwd.run(params, &layout, w)?;
            Ok(fwd.prediction())
        })
        .collect()
}

fn clamp_p(p: f64) -> (f64, bool) {
    if p < BCE_EPS {
        (BCE_EPS, true)
    } else if p > 1.0 - BCE_EPS {
        (1.0 - BCE_EPS, true)
    } else {
        (p, false)
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let (p, _) = clamp_p(p);
    -(y * math::ln(p) + (1.0 - y) * math::ln(1.0 - p))
}

/// `alpha * BCE + beta * MSE(position) + delta * MSE(reflectance)`; the
/// regression terms average over positive windows only and vanish when the
/// batch has none. Heads missing from `pred` contribute nothing.
pub fn multitask_loss(pred: &[Prediction], target: &[Targets], weights: LossWeights) -> Result<LossBreakdown> {
    if pred.len() != target.len() {
        return Err(Error::invalid("prediction and target counts differ"));
    }
    let mut out = LossBreakdown {
        n: pred.len(),
        ..Default::default()
    };
    if pred.is_empty() {
        return Ok(out);
    }
    let (mut bce_sum, mut pos_sum, mut refl_sum) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        if let Some(pe) = p.p_event {
            bce_sum += bce(pe, t.id_class as f64);
        }
        if t.is_positive() {
            out.n_positive += 1;
            if let (Some(y), Some(tp)) = (p.position, t.position_target) {
                pos_sum += (y - tp) * (y - tp);
            }
            if let (Some(y), Some(tr)) = (p.reflectance, t.reflectance_target) {
                refl_sum += (y - tr) * (y - tr);
            }
        }
    }
    out.bce = bce_sum / out.n as f64;
    if out.n_positive > 0 {
        out.position_mse = pos_sum / out.n_positive as f64;
        out.reflectance_mse = refl_sum / out.n_positive as f64;
    }
    out.total = weights.alpha * out.bce + weights.beta * out.position_mse + weights.delta * out.reflectance_mse;
    Ok(out)
}

/// Loss of the batch and its exact gradient, written into `grad` (resized
/// and zeroed here).
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[&WindowSample],
    grad: &mut Vec<f64>,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let layout = params.layout();
    grad.clear();
    grad.resize(params.values.len(), 0.0);
    let mut fwd = Forward::with_layout(params, &layout, params.arch.n_c);
    let w = params.loss_weights;
    let n = batch.len() as f64;
    let n_pos = batch.iter().filter(|s| s.is_positive()).count();
    let inv_pos = if n_pos > 0 { 1.0 / n_pos as f64 } else { 0.0 };

    let mut loss = LossBreakdown {
        n: batch.len(),
        n_positive: n_pos,
        ..Default::default()
    };
    for sample in batch {
        let t = sample
            .targets
            .as_ref()
            .ok_or_else(|| Error::invalid("training window without targets"))?;
        fwd.run(params, &layout, sample)?;
        let pred = fwd.prediction();
        let mut d_raw = [0.0; 3];
        if let Some(p) = pred.p_event {
            loss.bce += bce(p, t.id_class as f64) / n;
            let (_, clamped) = clamp_p(p);
            if !clamped {
                d_raw[Task::Detection.index()] = w.alpha * (p - t.id_class as f64) / n;
            }
        }
        if t.is_positive() {
            if let (Some(y), Some(tp)) = (pred.position, t.position_target) {
                loss.position_mse += (y - tp) * (y - tp) * inv_pos;
                d_raw[Task::Position.index()] = w.beta * 2.0 * (y - tp) * inv_pos;
            }
            if let (Some(y), Some(tr)) = (pred.reflectance, t.reflectance_target) {
                loss.reflectance_mse += (y - tr) * (y - tr) * inv_pos;
                d_raw[Task::Reflectance.index()] = w.delta * 2.0 * (y - tr) * inv_pos;
            }
        }
        fwd.backward(params, &layout, d_raw, grad);
    }
    if let Some(block) = params.non_finite_block(grad) {
        return Err(Error::NumericOverflow { block });
    }
    loss.total = w.alpha * loss.bce + w.beta * loss.position_mse + w.delta * loss.reflectance_mse;
    Ok(loss)
}
