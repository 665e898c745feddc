//! Stacked LSTM forward pass and backpropagation through time.
//!
//! Per step: `x → [mask] → LSTM₁ → [mask] → … → LSTM_L → ReLU → [mask] → head`.
//! Inputs and outputs are time-major: one `B × D` matrix per step.

use super::dropout::DropoutMasks;
use super::matrix::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc, Matrix};
use super::params::{LstmLayerParams, StackedLstmParams, Weights};
use crate::error::{Error, Result};

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Values one cell step saves for its backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    /// Cell input after dropout.
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    /// Activated gates, `B × 4H` in `[i, f, g, o]` blocks.
    pub gates: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
    pub h: Matrix,
}

/// One batched LSTM cell step.
pub fn cell_forward(
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    p: &LstmLayerParams,
) -> Result<CellCache> {
    let hidden = p.hidden();
    let batch = x.rows();
    if x.cols() != p.input_dim() {
        return Err(Error::shape(format!(
            "cell input has {} features, layer expects {}",
            x.cols(),
            p.input_dim()
        )));
    }
    if h_prev.shape() != (batch, hidden) || c_prev.shape() != (batch, hidden) {
        return Err(Error::shape(format!(
            "cell state must be {batch}x{hidden}, got h {:?} c {:?}",
            h_prev.shape(),
            c_prev.shape()
        )));
    }

    let mut gates = Matrix::zeros(batch, 4 * hidden);
    matmul_nt_acc(x, &p.w_ih, &mut gates);
    matmul_nt_acc(h_prev, &p.w_hh, &mut gates);
    gates.add_row_vector(&p.b_ih);
    gates.add_row_vector(&p.b_hh);

    let mut c = Matrix::zeros(batch, hidden);
    let mut tanh_c = Matrix::zeros(batch, hidden);
    let mut h = Matrix::zeros(batch, hidden);
    for b in 0..batch {
        let g_row = gates.row_mut(b);
        let (ifg, o) = g_row.split_at_mut(3 * hidden);
        let (i, fg) = ifg.split_at_mut(hidden);
        let (f, g) = fg.split_at_mut(hidden);
        let cp = c_prev.row(b);
        let c_row = c.row_mut(b);
        for k in 0..hidden {
            i[k] = logistic(i[k]);
            f[k] = logistic(f[k]);
            g[k] = g[k].tanh();
            o[k] = logistic(o[k]);
            c_row[k] = f[k] * cp[k] + i[k] * g[k];
        }
        let tc_row = tanh_c.row_mut(b);
        for k in 0..hidden {
            tc_row[k] = c_row[k].tanh();
        }
        let h_row = h.row_mut(b);
        for k in 0..hidden {
            h_row[k] = o[k] * tc_row[k];
        }
    }

    Ok(CellCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gates,
        c,
        tanh_c,
        h,
    })
}

/// Single-sequence cell step: returns `(h′, c′, cache)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    p: &LstmLayerParams,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hidden = p.hidden();
    if h.len() != hidden || c.len() != hidden {
        return Err(Error::shape(format!(
            "state vectors must have length {hidden}, got h {} c {}",
            h.len(),
            c.len()
        )));
    }
    let x = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let h = Matrix::from_vec(1, hidden, h.to_vec())?;
    let c = Matrix::from_vec(1, hidden, c.to_vec())?;
    let cache = cell_forward(&x, &h, &c, p)?;
    if !cache.h.is_finite() || !cache.c.is_finite() {
        return Err(Error::NonFinite("LSTM cell state".into()));
    }
    Ok((cache.h.row(0).to_vec(), cache.c.row(0).to_vec(), cache))
}

#[derive(Debug, Clone)]
pub struct StepCache {
    pub layers: Vec<CellCache>,
    /// `ReLU(h_L)` before the head mask.
    pub relu: Matrix,
    /// Head input after the head mask.
    pub head_in: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub masks: Option<DropoutMasks>,
}

fn check_inputs(inputs: &[Matrix], params: &StackedLstmParams) -> Result<usize> {
    let cfg = &params.config;
    let batch = inputs.first().map_or(0, Matrix::rows);
    for (t, x) in inputs.iter().enumerate() {
        if x.shape() != (batch, cfg.input_dim) {
            return Err(Error::shape(format!(
                "step {t}: input is {:?}, expected ({batch}, {})",
                x.shape(),
                cfg.input_dim
            )));
        }
    }
    Ok(batch)
}

fn check_masks(masks: &DropoutMasks, params: &StackedLstmParams, batch: usize) -> Result<()> {
    let cfg = &params.config;
    if masks.layer_inputs.len() != cfg.num_layers {
        return Err(Error::shape(format!(
            "masks cover {} layers, network has {}",
            masks.layer_inputs.len(),
            cfg.num_layers
        )));
    }
    for (l, m) in masks.layer_inputs.iter().enumerate() {
        if let Some(m) = m {
            if m.shape() != (batch, cfg.layer_input_dim(l)) {
                return Err(Error::shape(format!(
                    "layer {l} input mask is {:?}, expected ({batch}, {})",
                    m.shape(),
                    cfg.layer_input_dim(l)
                )));
            }
        }
    }
    if let Some(m) = &masks.head {
        if m.shape() != (batch, cfg.hidden) {
            return Err(Error::shape(format!(
                "head mask is {:?}, expected ({batch}, {})",
                m.shape(),
                cfg.hidden
            )));
        }
    }
    Ok(())
}

fn run(
    inputs: &[Matrix],
    params: &StackedLstmParams,
    masks: Option<&DropoutMasks>,
    keep_cache: bool,
) -> Result<(Vec<Matrix>, Vec<StepCache>)> {
    let batch = check_inputs(inputs, params)?;
    if let Some(m) = masks {
        check_masks(m, params, batch)?;
    }
    let cfg = &params.config;
    let w = &params.weights;
    let mut h: Vec<Matrix> = (0..cfg.num_layers)
        .map(|_| Matrix::zeros(batch, cfg.hidden))
        .collect();
    let mut c = h.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(if keep_cache { inputs.len() } else { 0 });

    for (t, x) in inputs.iter().enumerate() {
        let mut layer_caches = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let mut layer_in = if l == 0 { x.clone() } else { h[l - 1].clone() };
            if let Some(m) = masks.and_then(|m| m.layer_inputs[l].as_ref()) {
                layer_in.hadamard_assign(m);
            }
            let cache = cell_forward(&layer_in, &h[l], &c[l], &w.layers[l])?;
            if !cache.h.is_finite() || !cache.c.is_finite() {
                return Err(Error::NonFinite(format!("step {t}, layer {l}")));
            }
            h[l] = cache.h.clone();
            c[l] = cache.c.clone();
            layer_caches.push(cache);
        }

        let top = &h[cfg.num_layers - 1];
        let mut relu = top.clone();
        relu.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        let mut head_in = relu.clone();
        if let Some(m) = masks.and_then(|m| m.head.as_ref()) {
            head_in.hadamard_assign(m);
        }
        let mut y = Matrix::zeros(batch, cfg.output_dim);
        matmul_nt_acc(&head_in, &w.head_w, &mut y);
        y.add_row_vector(&w.head_b);
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("step {t}, head")));
        }
        outputs.push(y);
        if keep_cache {
            steps.push(StepCache {
                layers: layer_caches,
                relu,
                head_in,
            });
        }
    }
    Ok((outputs, steps))
}

/// Forward pass over time-major inputs, keeping everything backward needs.
pub fn forward(
    inputs: &[Matrix],
    params: &StackedLstmParams,
    masks: Option<&DropoutMasks>,
) -> Result<(Vec<Matrix>, ForwardCache)> {
    let (outputs, steps) = run(inputs, params, masks, true)?;
    Ok((
        outputs,
        ForwardCache {
            steps,
            masks: masks.cloned(),
        },
    ))
}

/// Forward pass without a cache, for inference.
pub fn predict(
    inputs: &[Matrix],
    params: &StackedLstmParams,
    masks: Option<&DropoutMasks>,
) -> Result<Vec<Matrix>> {
    run(inputs, params, masks, false).map(|(o, _)| o)
}

/// Exact gradients of a loss with respect to every parameter, given
/// `∂loss/∂prediction` at every step.
pub fn backward(
    cache: &ForwardCache,
    d_predictions: &[Matrix],
    params: &StackedLstmParams,
) -> Result<Weights> {
    let cfg = &params.config;
    let w = &params.weights;
    if d_predictions.len() != cache.steps.len() {
        return Err(Error::shape(format!(
            "{} gradient steps for a {}-step forward",
            d_predictions.len(),
            cache.steps.len()
        )));
    }
    let batch = cache.steps.first().map_or(0, |s| s.relu.rows());
    for (t, d) in d_predictions.iter().enumerate() {
        if d.shape() != (batch, cfg.output_dim) {
            return Err(Error::shape(format!(
                "step {t}: prediction gradient is {:?}, expected ({batch}, {})",
                d.shape(),
                cfg.output_dim
            )));
        }
    }

    let hidden = cfg.hidden;
    let mut grads = Weights::zeros(cfg);
    let mut dh_next: Vec<Matrix> = (0..cfg.num_layers)
        .map(|_| Matrix::zeros(batch, hidden))
        .collect();
    let mut dc_next = dh_next.clone();
    let masks = cache.masks.as_ref();

    for t in (0..cache.steps.len()).rev() {
        let step = &cache.steps[t];
        let dy = &d_predictions[t];

        matmul_tn_acc(dy, &step.head_in, &mut grads.head_w);
        dy.sum_rows_into(&mut grads.head_b);

        // Gradient flowing into the top hidden state from the head.
        let mut dh_above = Matrix::zeros(batch, hidden);
        matmul_nn_acc(dy, &w.head_w, &mut dh_above);
        if let Some(m) = masks.and_then(|m| m.head.as_ref()) {
            dh_above.hadamard_assign(m);
        }
        for (d, r) in dh_above
            .as_mut_slice()
            .iter_mut()
            .zip(step.relu.as_slice())
        {
            if *r <= 0.0 {
                *d = 0.0;
            }
        }

        for l in (0..cfg.num_layers).rev() {
            let cc = &step.layers[l];
            let layer = &w.layers[l];
            let gl = &mut grads.layers[l];

            let mut da = Matrix::zeros(batch, 4 * hidden);
            let mut dc_prev = Matrix::zeros(batch, hidden);
            for b in 0..batch {
                let gates = cc.gates.row(b);
                let (i, rest) = gates.split_at(hidden);
                let (f, rest) = rest.split_at(hidden);
                let (g, o) = rest.split_at(hidden);
                let tc = cc.tanh_c.row(b);
                let cp = cc.c_prev.row(b);
                let dh_a = dh_above.row(b);
                let dh_n = dh_next[l].row(b);
                let dc_n = dc_next[l].row(b);
                let da_row = da.row_mut(b);
                let dcp_row = dc_prev.row_mut(b);
                for k in 0..hidden {
                    let dh = dh_a[k] + dh_n[k];
                    let d_o = dh * tc[k];
                    let dc = dh * o[k] * (1.0 - tc[k] * tc[k]) + dc_n[k];
                    let d_i = dc * g[k];
                    let d_g = dc * i[k];
                    let d_f = dc * cp[k];
                    dcp_row[k] = dc * f[k];
                    da_row[k] = d_i * i[k] * (1.0 - i[k]);
                    da_row[hidden + k] = d_f * f[k] * (1.0 - f[k]);
                    da_row[2 * hidden + k] = d_g * (1.0 - g[k] * g[k]);
                    da_row[3 * hidden + k] = d_o * o[k] * (1.0 - o[k]);
                }
            }

            matmul_tn_acc(&da, &cc.x, &mut gl.w_ih);
            matmul_tn_acc(&da, &cc.h_prev, &mut gl.w_hh);
            da.sum_rows_into(&mut gl.b_ih);
            da.sum_rows_into(&mut gl.b_hh);

            let mut dh_prev = Matrix::zeros(batch, hidden);
            matmul_nn_acc(&da, &layer.w_hh, &mut dh_prev);
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;

            if l > 0 {
                let mut dx = Matrix::zeros(batch, cc.x.cols());
                matmul_nn_acc(&da, &layer.w_ih, &mut dx);
                if let Some(m) = masks.and_then(|m| m.layer_inputs[l].as_ref()) {
                    dx.hadamard_assign(m);
                }
                dh_above = dx;
            }
        }
    }
    Ok(grads)
}
