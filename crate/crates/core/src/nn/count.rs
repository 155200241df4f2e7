use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::arch::{ArchSpec, Task};
use super::params::Layout;

/// Weight counts from the closed-form complexity formulas next to the exact
/// number of parameters the implementation allocates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightCount {
    /// `4 n_c^2 + 4 n_inp n_c + n_c n_out + 3 n_c` with `n_out = n_c`.
    pub lstm_formula: usize,
    /// `j (n_out + n_task_out)` per task, `n_out` being the tower input width.
    pub task_formula: Vec<(Task, usize)>,
    pub total_formula: usize,
    pub lstm_enumerated: usize,
    pub task_enumerated: Vec<(Task, usize)>,
    pub total_enumerated: usize,
    /// Parameters counted by the implementation but not by the formulas:
    /// the fourth gate bias and every tower bias.
    pub extra_biases: usize,
    /// Counted by the formula but absent here: the `n_c x n_out` output
    /// projection (the final hidden state feeds the towers directly).
    pub missing_projection: usize,
}

/// Both weight accountings for `arch`. For single-layer towers
/// `total_enumerated == total_formula - missing_projection + extra_biases`.
pub fn count_weights(arch: &ArchSpec) -> WeightCount {
    let n_c = arch.n_c;
    let n_inp = arch.n_inp();
    let n_out = n_c;
    let j = arch.tower_width;
    let n_task_out = 1;
    let tower_in = arch.n_enc();

    let lstm_formula = lstm_weight_formula(n_c, n_inp, n_out);
    let task_formula: Vec<(Task, usize)> = arch
        .tasks
        .iter()
        .map(|&t| (t, task_weight_formula(j, tower_in, n_task_out)))
        .collect();
    let total_formula = lstm_formula + task_formula.iter().map(|(_, c)| c).sum::<usize>();

    let layout = Layout::new(arch);
    let lstm_enumerated = layout
        .blocks
        .iter()
        .filter(|b| b.name.starts_with("lstm."))
        .map(|b| b.len())
        .sum();
    let task_enumerated: Vec<(Task, usize)> = arch
        .tasks
        .iter()
        .map(|&t| {
            let prefix = alloc::format!("tower.{}.", t.name());
            let n = layout
                .blocks
                .iter()
                .filter(|b| b.name.starts_with(&prefix))
                .map(|b| b.len())
                .sum();
            (t, n)
        })
        .collect();
    let tower_biases: usize = layout
        .blocks
        .iter()
        .filter(|b| b.name.starts_with("tower.") && b.is_bias())
        .map(|b| b.len())
        .sum();

    WeightCount {
        lstm_formula,
        task_formula,
        total_formula,
        lstm_enumerated,
        total_enumerated: layout.total,
        task_enumerated,
        extra_biases: n_c + tower_biases,
        missing_projection: n_c * n_out,
    }
}

/// `4 n_c^2 + 4 n_inp n_c + n_c n_out + 3 n_c`.
pub fn lstm_weight_formula(n_c: usize, n_inp: usize, n_out: usize) -> usize {
    4 * n_c * n_c + 4 * n_inp * n_c + n_c * n_out + 3 * n_c
}

/// Task tower count `j (n_out + n_task_out)`.
pub fn task_weight_formula(j: usize, n_out: usize, n_task_out: usize) -> usize {
    j * (n_out + n_task_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        assert_eq!(lstm_weight_formula(30, 1, 30), 4710);
        assert_eq!(task_weight_formula(15, 30, 1), 465);
        assert_eq!(lstm_weight_formula(1, 1, 1), 12);
    }

    #[test]
    fn default_arch_counts() {
        let c = count_weights(&ArchSpec::default());
        assert_eq!(c.lstm_formula, 4710);
        assert!(c.task_formula.iter().all(|&(_, n)| n == 465));
        assert_eq!(c.total_formula, 4710 + 3 * 465);
        assert_eq!(c.lstm_enumerated, 4 * 900 + 4 * 30 + 4 * 30);
        assert_eq!(c.total_enumerated, c.total_formula - c.missing_projection + c.extra_biases);
    }
}
