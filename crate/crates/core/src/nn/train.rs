use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{batch_gradient, predict_all, LossBreakdown};
use super::optim::Adam;
use super::params::ModelParams;
use crate::dataset::{Corpus, Split, WindowSample};
use crate::error::{Error, Result};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Rescale the gradient when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 300,
            patience: 20,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be >= 1"));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid("clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Equals `train_loss` when the corpus has no validation split.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Loss over a set of labelled windows, evaluated in inference mode.
pub fn dataset_loss<'a, I>(params: &ModelParams, windows: I) -> Result<LossBreakdown>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let windows: Vec<&WindowSample> = windows.into_iter().collect();
    let preds = predict_all(params, windows.iter().copied())?;
    let mut targets = Vec::with_capacity(windows.len());
    for w in &windows {
        targets.push(
            w.targets
                .clone()
                .ok_or_else(|| Error::invalid("window without targets"))?,
        );
    }
    super::model::multitask_loss(&preds, &targets, params.loss_weights)
}

/// Mini-batch Adam on the corpus train split with early stopping on the
/// validation split. Deterministic for a fixed `cfg.seed`.
pub fn train_model(corpus: &Corpus, init: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_model_observed(corpus, init, cfg, |_| {})
}

/// [`train_model`] calling `observe` after every epoch.
pub fn train_model_observed<F>(
    corpus: &Corpus,
    init: ModelParams,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    if init.feature_set != corpus.feature_set {
        return Err(Error::invalid(alloc::format!(
            "model feature set `{}` differs from corpus feature set `{}`",
            init.feature_set,
            corpus.feature_set
        )));
    }
    let train: Vec<&WindowSample> = corpus.split(Split::Train).collect();
    let val: Vec<&WindowSample> = corpus.split(Split::Val).collect();
    if train.is_empty() {
        return Err(Error::invalid("corpus has no training windows"));
    }

    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut opt = Adam::new(params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = rng::seeded(rng::stream_seed(cfg.seed, 0x7EA1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = Vec::new();
    let mut batch: Vec<&WindowSample> = Vec::with_capacity(cfg.batch_size);
    let mut curve = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            let loss = batch_gradient(&params, &batch, &mut grad)?;
            train_sum += loss.total * chunk.len() as f64;
            if let Some(max) = cfg.clip_norm {
                let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
                if norm > max {
                    let s = max / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            opt.step(&mut params.values, &grad);
        }
        let train_loss = train_sum / train.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            dataset_loss(&params, val.iter().copied())?.total
        };
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::TrainingFailure { epoch });
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        observe(&rec);
        curve.push(rec);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best.values.copy_from_slice(&params.values);
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        curve,
        best_epoch,
        stopped_early,
    })
}
