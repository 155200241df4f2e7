use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// T1: is there a reflective event in the window.
    Detection,
    /// T2: event position inside the window.
    Position,
    /// T3: event reflectance.
    Reflectance,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Detection, Task::Position, Task::Reflectance];

    pub fn name(self) -> &'static str {
        match self {
            Task::Detection => "detection",
            Task::Position => "position",
            Task::Reflectance => "reflectance",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Where auxiliary setup features enter the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxInjection {
    /// Concatenated to the final hidden state before the towers.
    #[default]
    Encoder,
    /// Replicated as extra input channels at every timestep.
    Timestep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSpec {
    /// LSTM units.
    pub n_c: usize,
    /// Hidden units of each task tower layer.
    pub tower_width: usize,
    /// Hidden dense layers per tower.
    pub tower_depth: usize,
    pub n_aux: usize,
    pub aux_injection: AuxInjection,
    /// Active task heads, sorted.
    pub tasks: Vec<Task>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            n_c: 30,
            tower_width: 15,
            tower_depth: 1,
            n_aux: 0,
            aux_injection: AuxInjection::Encoder,
            tasks: Task::ALL.to_vec(),
        }
    }
}

impl ArchSpec {
    pub fn multitask(n_aux: usize) -> Self {
        ArchSpec {
            n_aux,
            ..Default::default()
        }
    }

    /// Same encoder and tower shape with a single head.
    pub fn single_task(task: Task, n_aux: usize) -> Self {
        ArchSpec {
            n_aux,
            tasks: alloc::vec![task],
            ..Default::default()
        }
    }

    /// Input width per timestep.
    pub fn n_inp(&self) -> usize {
        match self.aux_injection {
            AuxInjection::Encoder => 1,
            AuxInjection::Timestep => 1 + self.n_aux,
        }
    }

    /// Width of the vector fed to the towers.
    pub fn n_enc(&self) -> usize {
        match self.aux_injection {
            AuxInjection::Encoder => self.n_c + self.n_aux,
            AuxInjection::Timestep => self.n_c,
        }
    }

    pub fn has_task(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c < 1 || self.tower_width < 1 || self.tower_depth < 1 {
            return Err(Error::invalid("n_c, tower_width and tower_depth must be >= 1"));
        }
        if self.tasks.is_empty() {
            return Err(Error::invalid("at least one task head is required"));
        }
        let mut sorted = self.tasks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.tasks {
            return Err(Error::invalid(format!(
                "tasks must be sorted and unique, got {:?}",
                self.tasks
            )));
        }
        Ok(())
    }
}
