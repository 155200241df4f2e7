//! Multi-task recurrent model written from scratch.
//!
//! One LSTM layer is shared by up to three task towers (event detection,
//! position regression, reflectance regression). Gradients come from
//! hand-written backpropagation through time; parameters live in one flat
//! buffer so the optimizer, the finite-difference check and serialization
//! all see the same layout.

mod arch;
mod count;
mod gradcheck;
mod lstm;
mod model;
mod optim;
mod params;
mod train;

pub use arch::{ArchSpec, AuxInjection, Task};
pub use count::{count_weights, lstm_weight_formula, task_weight_formula, WeightCount};
pub use gradcheck::{finite_difference_check, GradientCheck};
pub use lstm::{lstm_cell_forward, lstm_sequence_forward, CellState, LstmParams};
pub use model::{
    batch_gradient, model_forward, multitask_loss, predict_all, Forward, LossBreakdown, LossWeights, Prediction,
};
pub use optim::Adam;
pub use params::{Block, ModelParams};
pub use train::{dataset_loss, train_model, train_model_observed, EpochRecord, TrainConfig, TrainOutcome};
