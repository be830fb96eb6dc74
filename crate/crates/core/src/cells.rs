//! Deterministic LSTM and GRU forward passes.
//!
//! Gate pre-activations are `W [h_prev; x] + b` with `W` row-major of shape
//! `k x (k + l)`: the first `k` columns multiply the previous hidden state and
//! the remaining `l` columns the input. No noise is injected here.

use crate::error::{check_len, Result};
use crate::model::CellParams;

/// Recurrent state of one cell. `c` is empty for GRU cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl CellState {
    pub fn zeros_lstm(k: usize) -> Self {
        CellState {
            c: vec![0.0; k],
            h: vec![0.0; k],
        }
    }
}

/// Logistic sigmoid, evaluated so that `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `W[row] . [h; x] + b[row]` for a row-major gate matrix.
#[inline]
fn affine_row(weights: &[f64], bias: &[f64], row: usize, h: &[f64], x: &[f64]) -> f64 {
    let width = h.len() + x.len();
    let w = &weights[row * width..(row + 1) * width];
    let (wh, wx) = w.split_at(h.len());
    let acc = wh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
        + wx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    acc + bias[row]
}

fn check_shapes<P: CellParams>(params: &P, x: &[f64], h_prev: &[f64]) -> Result<()> {
    let spec = params.spec();
    check_len("cell input", spec.input, x.len())?;
    check_len("hidden state", spec.hidden, h_prev.len())
}

/// One LSTM step (forget gate, no peepholes). Writes `(c_t, h_t)` into `out`.
pub fn lstm_forward_into<P: CellParams>(
    params: &P,
    x: &[f64],
    c_prev: &[f64],
    h_prev: &[f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) -> Result<()> {
    check_shapes(params, x, h_prev)?;
    let k = params.spec().hidden;
    check_len("cell state", k, c_prev.len())?;
    check_len("cell state output", k, c_out.len())?;
    check_len("hidden state output", k, h_out.len())?;
    let (wf, wi, wc, wo) = (
        params.weights(0),
        params.weights(1),
        params.weights(2),
        params.weights(3),
    );
    let (bf, bi, bc, bo) = (
        params.bias(0),
        params.bias(1),
        params.bias(2),
        params.bias(3),
    );
    for r in 0..k {
        let f = sigmoid(affine_row(wf, bf, r, h_prev, x));
        let i = sigmoid(affine_row(wi, bi, r, h_prev, x));
        let block = affine_row(wc, bc, r, h_prev, x).tanh();
        let o = sigmoid(affine_row(wo, bo, r, h_prev, x));
        let c = f * c_prev[r] + i * block;
        c_out[r] = c;
        h_out[r] = o * c.tanh();
    }
    Ok(())
}

pub fn lstm_forward<P: CellParams>(params: &P, x: &[f64], state: &CellState) -> Result<CellState> {
    let k = params.spec().hidden;
    let mut next = CellState::zeros_lstm(k);
    lstm_forward_into(params, x, &state.c, &state.h, &mut next.c, &mut next.h)?;
    Ok(next)
}

/// One GRU step. The candidate sees the reset-gated state `[q * h_prev; x]`.
pub fn gru_forward_into<P: CellParams>(
    params: &P,
    x: &[f64],
    h_prev: &[f64],
    h_out: &mut [f64],
) -> Result<()> {
    check_shapes(params, x, h_prev)?;
    let k = params.spec().hidden;
    check_len("hidden state output", k, h_out.len())?;
    let (wz, wq, wh) = (params.weights(0), params.weights(1), params.weights(2));
    let (bz, bq, bh) = (params.bias(0), params.bias(1), params.bias(2));

    let mut update = vec![0.0; k];
    let mut gated = vec![0.0; k];
    for r in 0..k {
        update[r] = sigmoid(affine_row(wz, bz, r, h_prev, x));
        gated[r] = sigmoid(affine_row(wq, bq, r, h_prev, x)) * h_prev[r];
    }
    for r in 0..k {
        let candidate = affine_row(wh, bh, r, &gated, x).tanh();
        h_out[r] = (1.0 - update[r]) * h_prev[r] + update[r] * candidate;
    }
    Ok(())
}

pub fn gru_forward<P: CellParams>(params: &P, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let mut h = vec![0.0; params.spec().hidden];
    gru_forward_into(params, x, h_prev, &mut h)?;
    Ok(h)
}
