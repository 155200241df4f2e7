use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, sigmoid, tanh};

/// Borrowed LSTM weights. Gate rows are stacked f, i, g, o; `u` is
/// `4 n_c x n_inp`, `w` is `4 n_c x n_c`, both row-major.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub u: &'a [f64],
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub n_c: usize,
    pub n_inp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmParams<'_> {
    fn check(&self) -> Result<()> {
        let g = 4 * self.n_c;
        if self.u.len() != g * self.n_inp || self.w.len() != g * self.n_c || self.b.len() != g {
            return Err(Error::invalid("LSTM weight shapes disagree with n_c / n_inp"));
        }
        Ok(())
    }
}

/// One step. `gates` receives the post-activation gate values (f, i, g, o)
/// and `tanh_c` the squashed new cell state.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn step(
    p: &LstmParams<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    h: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
) {
    let n_c = p.n_c;
    let n_inp = p.n_inp;
    for (r, gate) in gates.iter_mut().enumerate().take(4 * n_c) {
        let mut z = p.b[r];
        let urow = &p.u[r * n_inp..(r + 1) * n_inp];
        for k in 0..n_inp {
            z += urow[k] * x[k];
        }
        z += dot(&p.w[r * n_c..(r + 1) * n_c], h_prev);
        *gate = if r / n_c == 2 { tanh(z) } else { sigmoid(z) };
    }
    for k in 0..n_c {
        let f = gates[k];
        let i = gates[n_c + k];
        let g = gates[2 * n_c + k];
        let o = gates[3 * n_c + k];
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = tanh(c[k]);
        h[k] = o * tanh_c[k];
    }
}

/// `f = σ(U^f x + W^f h + b^f)`, likewise `i`, `o`; `g = tanh(...)`;
/// `c = f ⊙ c_prev + i ⊙ g`; `h = o ⊙ tanh(c)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmParams<'_>,
) -> Result<CellState> {
    params.check()?;
    if x.len() != params.n_inp || h_prev.len() != params.n_c || c_prev.len() != params.n_c {
        return Err(Error::invalid("cell input shapes disagree with the parameters"));
    }
    let mut gates = vec![0.0; 4 * params.n_c];
    let mut h = vec![0.0; params.n_c];
    let mut c = vec![0.0; params.n_c];
    let mut tc = vec![0.0; params.n_c];
    step(params, x, h_prev, c_prev, &mut gates, &mut h, &mut c, &mut tc);
    Ok(CellState { h, c })
}

/// Final hidden state after running `sequence` (row-major, `len x n_inp`)
/// from zero state.
pub fn lstm_sequence_forward(sequence: &[f64], params: &LstmParams<'_>) -> Result<Vec<f64>> {
    params.check()?;
    if sequence.is_empty() || !sequence.len().is_multiple_of(params.n_inp) {
        return Err(Error::invalid("sequence must be a non-empty multiple of n_inp"));
    }
    let n_c = params.n_c;
    let mut gates = vec![0.0; 4 * n_c];
    let mut state = CellState {
        h: vec![0.0; n_c],
        c: vec![0.0; n_c],
    };
    let mut next = state.clone();
    let mut tc = vec![0.0; n_c];
    for x in sequence.chunks(params.n_inp) {
        step(params, x, &state.h, &state.c, &mut gates, &mut next.h, &mut next.c, &mut tc);
        core::mem::swap(&mut state, &mut next);
    }
    Ok(state.h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_state() {
        let (u, w, b) = (vec![0.0; 8], vec![0.0; 16], vec![0.0; 8]);
        let p = LstmParams { u: &u, w: &w, b: &b, n_c: 2, n_inp: 1 };
        let s = lstm_cell_forward(&[3.0], &[0.0, 0.0], &[0.0, 0.0], &p).unwrap();
        assert_eq!(s.h, vec![0.0, 0.0]);
        assert_eq!(s.c, vec![0.0, 0.0]);
        let enc = lstm_sequence_forward(&[1.0, -2.0, 5.0], &p).unwrap();
        assert_eq!(enc, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_cell_hand_computation() {
        let (u, w, b) = (vec![1.0; 4], vec![1.0; 4], vec![0.0; 4]);
        let p = LstmParams { u: &u, w: &w, b: &b, n_c: 1, n_inp: 1 };
        let s = lstm_cell_forward(&[0.0], &[0.0], &[1.0], &p).unwrap();
        assert!((s.c[0] - 0.5).abs() < 1e-15);
        assert!((s.h[0] - 0.5 * libm::tanh(0.5)).abs() < 1e-15);
        assert!((s.h[0] - 0.2311).abs() < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (u, w, b) = (vec![0.0; 8], vec![0.0; 16], vec![0.0; 8]);
        let p = LstmParams { u: &u, w: &w, b: &b, n_c: 2, n_inp: 1 };
        assert!(lstm_cell_forward(&[1.0, 2.0], &[0.0; 2], &[0.0; 2], &p).is_err());
        assert!(lstm_sequence_forward(&[], &p).is_err());
        let bad = LstmParams { n_c: 3, ..p };
        assert!(lstm_cell_forward(&[1.0], &[0.0; 3], &[0.0; 3], &bad).is_err());
    }

    #[test]
    fn length_one_sequence_is_one_step() {
        let u: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.5).collect();
        let w: Vec<f64> = (0..36).map(|i| 0.03 * i as f64 - 0.4).collect();
        let b: Vec<f64> = (0..12).map(|i| 0.05 * i as f64).collect();
        let p = LstmParams { u: &u, w: &w, b: &b, n_c: 3, n_inp: 1 };
        let step = lstm_cell_forward(&[0.7], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(lstm_sequence_forward(&[0.7], &p).unwrap(), step.h);
    }
}
