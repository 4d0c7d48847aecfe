//! Exact gradients through the unrolled recurrence.
//!
//! The loss is the mean over steps and output dimensions of the squared
//! error, plus `l2_recurrent` times the squared Frobenius norm of the four
//! recurrent matrices. Gradients are accumulated backward through time by
//! the chain rule on the cell equations; the initial state of the unrolled
//! window is treated as a constant.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{LstmParams, StepCache};

/// Accumulate `acc += u v'`.
fn add_outer(acc: &mut Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) {
    for (r, &uv) in u.iter().enumerate() {
        if uv == 0.0 {
            continue;
        }
        let mut row = acc.row_mut(r);
        for (c, &vv) in v.iter().enumerate() {
            row[c] += uv * vv;
        }
    }
}

/// Backpropagation-through-time over cached forward steps. Returns the
/// gradients (in parameter shape) and the loss value.
pub fn bptt(
    params: &LstmParams,
    caches: &[StepCache],
    targets: &Array2<f64>,
    l2_recurrent: f64,
) -> Result<(LstmParams, f64)> {
    let t_len = caches.len();
    if t_len == 0 {
        return Err(Error::Invalid("no cached steps".into()));
    }
    if targets.nrows() != t_len || targets.ncols() != params.output_dim {
        return Err(Error::Invalid(format!(
            "targets are {:?}, expected ({t_len}, {})",
            targets.dim(),
            params.output_dim
        )));
    }

    let norm = 1.0 / (t_len as f64 * params.output_dim as f64);
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let mut dh_next = Array1::<f64>::zeros(params.hidden_dim);
    let mut dc_next = Array1::<f64>::zeros(params.hidden_dim);

    for t in (0..t_len).rev() {
        let cache = &caches[t];
        let err = &cache.y - &targets.row(t);
        loss += err.iter().map(|e| e * e).sum::<f64>() * norm;

        // output projection
        let dy = err.mapv(|e| 2.0 * e * norm);
        add_outer(&mut grads.w_y, &dy, &cache.h);
        grads.b_y += &dy;

        let dh = params.w_y.t().dot(&dy) + &dh_next;
        let tanh_c = cache.c.mapv(f64::tanh);
        let d_o = &dh * &tanh_c;
        let dc = &dh * &cache.o * &tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;

        let df = &dc * &cache.c_prev;
        let di = &dc * &cache.c_tilde;
        let dg = &dc * &cache.i;
        dc_next = &dc * &cache.f;

        // gate pre-activations
        let da_f = &df * &cache.f * &cache.f.mapv(|v| 1.0 - v);
        let da_i = &di * &cache.i * &cache.i.mapv(|v| 1.0 - v);
        let da_c = &dg * &cache.c_tilde.mapv(|v| 1.0 - v * v);
        let da_o = &d_o * &cache.o * &cache.o.mapv(|v| 1.0 - v);

        add_outer(&mut grads.w_f, &da_f, &cache.x);
        add_outer(&mut grads.w_i, &da_i, &cache.x);
        add_outer(&mut grads.w_c, &da_c, &cache.x);
        add_outer(&mut grads.w_o, &da_o, &cache.x);
        add_outer(&mut grads.u_f, &da_f, &cache.h_prev);
        add_outer(&mut grads.u_i, &da_i, &cache.h_prev);
        add_outer(&mut grads.u_c, &da_c, &cache.h_prev);
        add_outer(&mut grads.u_o, &da_o, &cache.h_prev);
        grads.b_f += &da_f;
        grads.b_i += &da_i;
        grads.b_c += &da_c;
        grads.b_o += &da_o;

        dh_next = params.u_f.t().dot(&da_f)
            + params.u_i.t().dot(&da_i)
            + params.u_c.t().dot(&da_c)
            + params.u_o.t().dot(&da_o);
    }

    if l2_recurrent != 0.0 {
        for (g, u) in [
            (&mut grads.u_f, &params.u_f),
            (&mut grads.u_i, &params.u_i),
            (&mut grads.u_c, &params.u_c),
            (&mut grads.u_o, &params.u_o),
        ] {
            loss += l2_recurrent * u.iter().map(|v| v * v).sum::<f64>();
            g.scaled_add(2.0 * l2_recurrent, u);
        }
    }

    Ok((grads, loss))
}

/// Forward-only loss of a sequence from a zero initial state, with the same
/// normalization as [`bptt`].
pub fn sequence_loss(
    params: &LstmParams,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    l2_recurrent: f64,
) -> Result<f64> {
    let (outputs, _) = super::sequence_forward(params, inputs)?;
    if targets.dim() != outputs.dim() {
        return Err(Error::Invalid(format!(
            "targets are {:?}, expected {:?}",
            targets.dim(),
            outputs.dim()
        )));
    }
    let norm = 1.0 / (outputs.nrows() as f64 * outputs.ncols() as f64);
    let mut loss = outputs
        .iter()
        .zip(targets.iter())
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        * norm;
    if l2_recurrent != 0.0 {
        for u in [&params.u_f, &params.u_i, &params.u_c, &params.u_o] {
            loss += l2_recurrent * u.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(loss)
}
