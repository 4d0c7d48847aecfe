//! Single-layer LSTM with a linear output projection, trained by exact
//! backpropagation-through-time and Adam.
//!
//! One step of the cell, with `σ` the logistic sigmoid and `⊙` the
//! element-wise product:
//!
//! ```text
//! f_t = σ(W_f x_t + U_f h_{t-1} + b_f)
//! i_t = σ(W_i x_t + U_i h_{t-1} + b_i)
//! c~_t = tanh(W_c x_t + U_c h_{t-1} + b_c)
//! c_t = i_t ⊙ c~_t + f_t ⊙ c_{t-1}
//! o_t = σ(W_o x_t + U_o h_{t-1} + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! y_t = W_y h_t + b_y
//! ```

mod adam;
mod bptt;
mod gradcheck;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bptt::{bptt, sequence_loss};
pub use gradcheck::{grad_check, DEFAULT_GRAD_CHECK_EPS};
pub use train::{train, train_with_eval, Sequence, TrainConfig, TrainLog, TrainLogEntry};

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util::{matrix_to_rows, rows_to_matrix};

/// All weights of the cell and output projection. Also reused as the
/// container for gradients and Adam moments, which share its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LstmParamsRepr", into = "LstmParamsRepr")]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_o: Array2<f64>,
    pub u_f: Array2<f64>,
    pub u_i: Array2<f64>,
    pub u_c: Array2<f64>,
    pub u_o: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
}

impl LstmParams {
    /// Scaled-uniform initialization: every weight matrix is i.i.d. uniform
    /// on `[-s, s]` with `s = 1/sqrt(fan_in)`; biases are zero except the
    /// forget bias, which starts at 1 so early training preserves memory.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::Invalid("lstm dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-s..s))
        };
        let (n, p_in, p_out) = (hidden_dim, input_dim, output_dim);
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            w_f: uniform(n, p_in, p_in),
            w_i: uniform(n, p_in, p_in),
            w_c: uniform(n, p_in, p_in),
            w_o: uniform(n, p_in, p_in),
            u_f: uniform(n, n, n),
            u_i: uniform(n, n, n),
            u_c: uniform(n, n, n),
            u_o: uniform(n, n, n),
            b_f: Array1::ones(n),
            b_i: Array1::zeros(n),
            b_c: Array1::zeros(n),
            b_o: Array1::zeros(n),
            w_y: uniform(p_out, n, n),
            b_y: Array1::zeros(p_out),
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let (n, p_in, p_out) = (hidden_dim, input_dim, output_dim);
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            w_f: Array2::zeros((n, p_in)),
            w_i: Array2::zeros((n, p_in)),
            w_c: Array2::zeros((n, p_in)),
            w_o: Array2::zeros((n, p_in)),
            u_f: Array2::zeros((n, n)),
            u_i: Array2::zeros((n, n)),
            u_c: Array2::zeros((n, n)),
            u_o: Array2::zeros((n, n)),
            b_f: Array1::zeros(n),
            b_i: Array1::zeros(n),
            b_c: Array1::zeros(n),
            b_o: Array1::zeros(n),
            w_y: Array2::zeros((p_out, n)),
            b_y: Array1::zeros(p_out),
        }
    }

    /// A zeroed gradient/moment container with this parameter set's shapes.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// The 14 tensors in a fixed traversal order, flattened row-major.
    pub(crate) fn tensors(&self) -> [&[f64]; 14] {
        [
            self.w_f.as_slice().expect("standard layout"),
            self.w_i.as_slice().expect("standard layout"),
            self.w_c.as_slice().expect("standard layout"),
            self.w_o.as_slice().expect("standard layout"),
            self.u_f.as_slice().expect("standard layout"),
            self.u_i.as_slice().expect("standard layout"),
            self.u_c.as_slice().expect("standard layout"),
            self.u_o.as_slice().expect("standard layout"),
            self.b_f.as_slice().expect("standard layout"),
            self.b_i.as_slice().expect("standard layout"),
            self.b_c.as_slice().expect("standard layout"),
            self.b_o.as_slice().expect("standard layout"),
            self.w_y.as_slice().expect("standard layout"),
            self.b_y.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        [
            self.w_f.as_slice_mut().expect("standard layout"),
            self.w_i.as_slice_mut().expect("standard layout"),
            self.w_c.as_slice_mut().expect("standard layout"),
            self.w_o.as_slice_mut().expect("standard layout"),
            self.u_f.as_slice_mut().expect("standard layout"),
            self.u_i.as_slice_mut().expect("standard layout"),
            self.u_c.as_slice_mut().expect("standard layout"),
            self.u_o.as_slice_mut().expect("standard layout"),
            self.b_f.as_slice_mut().expect("standard layout"),
            self.b_i.as_slice_mut().expect("standard layout"),
            self.b_c.as_slice_mut().expect("standard layout"),
            self.b_o.as_slice_mut().expect("standard layout"),
            self.w_y.as_slice_mut().expect("standard layout"),
            self.b_y.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Carried state: `h` is the gated read-out, `c` the additive cell memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: Array1::zeros(hidden_dim),
            c: Array1::zeros(hidden_dim),
        }
    }
}

/// Everything the backward pass needs from one forward step. `y` is filled
/// in by [`sequence_forward`]; [`cell_forward`] leaves it zeroed.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub f: Array1<f64>,
    pub i: Array1<f64>,
    pub c_tilde: Array1<f64>,
    pub c: Array1<f64>,
    pub o: Array1<f64>,
    pub h: Array1<f64>,
    pub y: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate(
    w: &Array2<f64>,
    u: &Array2<f64>,
    b: &Array1<f64>,
    x: &ArrayView1<f64>,
    h_prev: &Array1<f64>,
) -> Array1<f64> {
    let mut a = w.dot(x);
    a += &u.dot(h_prev);
    a += b;
    a
}

/// One step of the cell equations. Returns the new state and the cached
/// intermediates.
pub fn cell_forward(
    params: &LstmParams,
    x: ArrayView1<f64>,
    state_prev: &LstmState,
) -> Result<(LstmState, StepCache)> {
    if x.len() != params.input_dim {
        return Err(Error::Invalid(format!(
            "input has {} entries, expected {}",
            x.len(),
            params.input_dim
        )));
    }
    if state_prev.h.len() != params.hidden_dim || state_prev.c.len() != params.hidden_dim {
        return Err(Error::Invalid("state size does not match hidden_dim".into()));
    }
    let f = gate(&params.w_f, &params.u_f, &params.b_f, &x, &state_prev.h).mapv(sigmoid);
    let i = gate(&params.w_i, &params.u_i, &params.b_i, &x, &state_prev.h).mapv(sigmoid);
    let c_tilde = gate(&params.w_c, &params.u_c, &params.b_c, &x, &state_prev.h).mapv(f64::tanh);
    let c = &i * &c_tilde + &f * &state_prev.c;
    let o = gate(&params.w_o, &params.u_o, &params.b_o, &x, &state_prev.h).mapv(sigmoid);
    let h = &o * &c.mapv(f64::tanh);
    let state = LstmState { h: h.clone(), c: c.clone() };
    let cache = StepCache {
        x: x.to_owned(),
        h_prev: state_prev.h.clone(),
        c_prev: state_prev.c.clone(),
        f,
        i,
        c_tilde,
        c,
        o,
        h,
        y: Array1::zeros(params.output_dim),
    };
    Ok((state, cache))
}

/// Linear read-out `y = W_y h + b_y`.
pub fn project(params: &LstmParams, h: &Array1<f64>) -> Result<Array1<f64>> {
    if h.len() != params.hidden_dim {
        return Err(Error::Invalid(format!(
            "hidden vector has {} entries, expected {}",
            h.len(),
            params.hidden_dim
        )));
    }
    Ok(params.w_y.dot(h) + &params.b_y)
}

/// Run the cell over a whole input block from a zero initial state.
pub fn sequence_forward(
    params: &LstmParams,
    inputs: &Array2<f64>,
) -> Result<(Array2<f64>, Vec<StepCache>)> {
    let (outputs, caches, _) =
        sequence_forward_from(params, inputs, &LstmState::zeros(params.hidden_dim))?;
    Ok((outputs, caches))
}

/// Run the cell over an input block starting from `state0` (used by
/// truncated BPTT, where windows chain their states). The initial state is
/// treated as a constant by the backward pass.
pub fn sequence_forward_from(
    params: &LstmParams,
    inputs: &Array2<f64>,
    state0: &LstmState,
) -> Result<(Array2<f64>, Vec<StepCache>, LstmState)> {
    let t_len = inputs.nrows();
    if t_len == 0 {
        return Err(Error::Invalid("empty input sequence".into()));
    }
    let mut outputs = Array2::zeros((t_len, params.output_dim));
    let mut caches = Vec::with_capacity(t_len);
    let mut state = state0.clone();
    for (t, x) in inputs.rows().into_iter().enumerate() {
        let (next, mut cache) = cell_forward(params, x, &state)?;
        let y = project(params, &next.h)?;
        outputs.row_mut(t).assign(&y);
        cache.y = y;
        caches.push(cache);
        state = next;
    }
    Ok((outputs, caches, state))
}

/// JSON shape for [`LstmParams`]: one named row-major array per tensor.
#[derive(Serialize, Deserialize)]
struct LstmParamsRepr {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w_f: Vec<Vec<f64>>,
    w_i: Vec<Vec<f64>>,
    w_c: Vec<Vec<f64>>,
    w_o: Vec<Vec<f64>>,
    u_f: Vec<Vec<f64>>,
    u_i: Vec<Vec<f64>>,
    u_c: Vec<Vec<f64>>,
    u_o: Vec<Vec<f64>>,
    b_f: Vec<f64>,
    b_i: Vec<f64>,
    b_c: Vec<f64>,
    b_o: Vec<f64>,
    w_y: Vec<Vec<f64>>,
    b_y: Vec<f64>,
}

impl From<LstmParams> for LstmParamsRepr {
    fn from(p: LstmParams) -> Self {
        LstmParamsRepr {
            input_dim: p.input_dim,
            hidden_dim: p.hidden_dim,
            output_dim: p.output_dim,
            w_f: matrix_to_rows(&p.w_f),
            w_i: matrix_to_rows(&p.w_i),
            w_c: matrix_to_rows(&p.w_c),
            w_o: matrix_to_rows(&p.w_o),
            u_f: matrix_to_rows(&p.u_f),
            u_i: matrix_to_rows(&p.u_i),
            u_c: matrix_to_rows(&p.u_c),
            u_o: matrix_to_rows(&p.u_o),
            b_f: p.b_f.to_vec(),
            b_i: p.b_i.to_vec(),
            b_c: p.b_c.to_vec(),
            b_o: p.b_o.to_vec(),
            w_y: matrix_to_rows(&p.w_y),
            b_y: p.b_y.to_vec(),
        }
    }
}

impl TryFrom<LstmParamsRepr> for LstmParams {
    type Error = Error;

    fn try_from(r: LstmParamsRepr) -> Result<Self> {
        let (n, p_in, p_out) = (r.hidden_dim, r.input_dim, r.output_dim);
        let params = LstmParams {
            input_dim: p_in,
            hidden_dim: n,
            output_dim: p_out,
            w_f: rows_to_matrix(&r.w_f, n, p_in)?,
            w_i: rows_to_matrix(&r.w_i, n, p_in)?,
            w_c: rows_to_matrix(&r.w_c, n, p_in)?,
            w_o: rows_to_matrix(&r.w_o, n, p_in)?,
            u_f: rows_to_matrix(&r.u_f, n, n)?,
            u_i: rows_to_matrix(&r.u_i, n, n)?,
            u_c: rows_to_matrix(&r.u_c, n, n)?,
            u_o: rows_to_matrix(&r.u_o, n, n)?,
            b_f: Array1::from_vec(r.b_f),
            b_i: Array1::from_vec(r.b_i),
            b_c: Array1::from_vec(r.b_c),
            b_o: Array1::from_vec(r.b_o),
            w_y: rows_to_matrix(&r.w_y, p_out, n)?,
            b_y: Array1::from_vec(r.b_y),
        };
        if params.b_f.len() != n || params.b_i.len() != n || params.b_c.len() != n
            || params.b_o.len() != n || params.b_y.len() != p_out
        {
            return Err(Error::Invalid("bias length does not match dims".into()));
        }
        if params.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("lstm parameter".into()));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests;
