use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::arch::{ArchSpec, Task};
use super::model::LossWeights;
use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// A named matrix (or vector, `cols == 1`) inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Fan-in / fan-out for Glorot initialization; `None` for biases.
    fans: Option<(usize, usize)>,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_bias(&self) -> bool {
        self.fans.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DenseLayout {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TowerLayout {
    pub task: Task,
    pub hidden: Vec<DenseLayout>,
    pub head: DenseLayout,
}

/// Offsets of every block for one architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub u: usize,
    pub w: usize,
    pub b: usize,
    pub towers: Vec<TowerLayout>,
    pub blocks: Vec<Block>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &ArchSpec) -> Self {
        let n_c = arch.n_c;
        let n_inp = arch.n_inp();
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize, fans: Option<(usize, usize)>| {
            let at = offset;
            blocks.push(Block {
                name,
                offset: at,
                rows,
                cols,
                fans,
            });
            offset += rows * cols;
            at
        };
        // gate blocks are stacked in the order f, i, g, o
        let u = push("lstm.U".into(), 4 * n_c, n_inp, Some((n_inp, n_c)));
        let w = push("lstm.W".into(), 4 * n_c, n_c, Some((n_c, n_c)));
        let b = push("lstm.b".into(), 4 * n_c, 1, None);
        let mut towers = Vec::new();
        for &task in &arch.tasks {
            let mut hidden = Vec::new();
            let mut n_in = arch.n_enc();
            for layer in 0..arch.tower_depth {
                let n_out = arch.tower_width;
                let name = task.name();
                let w = push(format!("tower.{name}.dense{layer}.W"), n_out, n_in, Some((n_in, n_out)));
                let b = push(format!("tower.{name}.dense{layer}.b"), n_out, 1, None);
                hidden.push(DenseLayout { w, b, n_in, n_out });
                n_in = n_out;
            }
            let hw = push(format!("tower.{}.head.W", task.name()), 1, n_in, Some((n_in, 1)));
            let hb = push(format!("tower.{}.head.b", task.name()), 1, 1, None);
            towers.push(TowerLayout {
                task,
                hidden,
                head: DenseLayout {
                    w: hw,
                    b: hb,
                    n_in,
                    n_out: 1,
                },
            });
        }
        Layout {
            u,
            w,
            b,
            towers,
            blocks,
            total: offset,
        }
    }
}

/// Every trainable value of the model plus what is needed to use it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ArchSpec,
    pub feature_set: FeatureSet,
    pub loss_weights: LossWeights,
    pub window_len: usize,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases and a forget-gate bias of one.
    pub fn init(
        arch: ArchSpec,
        feature_set: FeatureSet,
        loss_weights: LossWeights,
        window_len: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut p = Self::zeros(arch, feature_set, loss_weights, window_len)?;
        let mut rng = rng::seeded(rng::stream_seed(seed, 0x1417));
        let n_c = p.arch.n_c;
        let layout = p.layout();
        for block in &layout.blocks {
            if let Some((fan_in, fan_out)) = block.fans {
                let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
                for v in &mut p.values[block.range()] {
                    *v = rng.random_range(-limit..=limit);
                }
            }
        }
        for v in &mut p.values[layout.b..layout.b + n_c] {
            *v = 1.0;
        }
        Ok(p)
    }

    pub fn zeros(
        arch: ArchSpec,
        feature_set: FeatureSet,
        loss_weights: LossWeights,
        window_len: usize,
    ) -> Result<Self> {
        arch.validate()?;
        if arch.n_aux != feature_set.len() {
            return Err(Error::invalid(format!(
                "architecture expects {} aux features but the feature set `{feature_set}` has {}",
                arch.n_aux,
                feature_set.len()
            )));
        }
        let total = Layout::new(&arch).total;
        Ok(ModelParams {
            values: vec![0.0; total],
            arch,
            feature_set,
            loss_weights,
            window_len,
        })
    }

    /// Rebuilds a model from stored values, checking the length.
    pub fn from_values(
        arch: ArchSpec,
        feature_set: FeatureSet,
        loss_weights: LossWeights,
        window_len: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(arch, feature_set, loss_weights, window_len)?;
        if values.len() != p.values.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.layout().blocks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Name of the first block containing a non-finite value in `buf`.
    pub fn non_finite_block(&self, buf: &[f64]) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|b| buf[b.range()].iter().any(|v| !v.is_finite()))
            .map(|b| b.name)
    }
}
