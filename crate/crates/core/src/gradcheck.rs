//! Central-difference check of the analytic BPTT gradients.
//!
//! The numerical side only calls the forward pass and the loss, so it is
//! independent of `backward`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::net::{
    backward, forward, init_params, predict, sample_dropout_masks, Matrix, NetConfig,
    StackedLstmParams,
};
use crate::preprocess::{Batch, SequencePair};
use crate::seed::derive_seed;
use crate::training::mse_loss;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub steps: usize,
    pub batch: usize,
    pub dropout_rate: f64,
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error. Central differences in f64
    /// disagree with exact gradients by ~1e-11 in absolute terms, so entries
    /// much smaller than this are compared in absolute units instead.
    pub floor: f64,
    /// Scale one analytic gradient tensor by 1.1 (negative control).
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input_dim: 5,
            hidden: 8,
            layers: 2,
            steps: 4,
            batch: 2,
            dropout_rate: 0.2,
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_tensor: String,
    /// Largest relative error per tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, floor)`, defined as 0 when all three are 0.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn random_batch(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<Batch> {
    // The last sequence is one step shorter so padding is exercised.
    let pairs: Vec<SequencePair> = (0..cfg.batch)
        .map(|b| {
            let len = if b + 1 == cfg.batch && cfg.steps > 1 {
                cfg.steps - 1
            } else {
                cfg.steps
            };
            let mut draw = |n: usize| -> Result<Matrix> {
                let data = (0..n * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Matrix::from_vec(n, cfg.input_dim, data)
            };
            Ok(SequencePair {
                event_id: b.to_string(),
                input: draw(len)?,
                target: draw(len)?,
            })
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&SequencePair> = pairs.iter().collect();
    Batch::from_pairs(&refs)
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let net = NetConfig::new(cfg.input_dim, cfg.hidden, cfg.layers, cfg.dropout_rate);
    let mut params = init_params(net, derive_seed(cfg.seed, &[0]))?;
    // Larger-than-default weights so the gates leave their linear regime.
    for (_, t) in params.weights.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= 2.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let batch = random_batch(cfg, &mut rng)?;
    let masks = if cfg.dropout_rate > 0.0 {
        Some(sample_dropout_masks(&params.config, cfg.batch, derive_seed(cfg.seed, &[2]))?)
    } else {
        None
    };

    let (pred, cache) = forward(&batch.inputs, &params, masks.as_ref())?;
    let loss = mse_loss(&pred, &batch.targets, &batch.mask)?;
    let mut analytic = backward(&cache, &loss.d_pred, &params)?;
    if cfg.corrupt {
        if let Some((_, t)) = analytic.tensors_mut().into_iter().nth(1) {
            t.iter_mut().for_each(|x| *x *= 1.1);
        }
    }

    let loss_at = |p: &StackedLstmParams| -> Result<f64> {
        let pred = predict(&batch.inputs, p, masks.as_ref())?;
        Ok(mse_loss(&pred, &batch.targets, &batch.mask)?.value)
    };

    let analytic_tensors: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();
    let mut per_tensor = Vec::with_capacity(analytic_tensors.len());
    let mut checked = 0;
    let mut max_abs_error = 0.0f64;
    for (ti, (name, grads)) in analytic_tensors.iter().enumerate() {
        let mut worst = 0.0f64;
        for (k, &a) in grads.iter().enumerate() {
            let original = params.weights.tensors()[ti].1[k];
            set_param(&mut params, ti, k, original + cfg.eps);
            let plus = loss_at(&params)?;
            set_param(&mut params, ti, k, original - cfg.eps);
            let minus = loss_at(&params)?;
            set_param(&mut params, ti, k, original);
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            worst = worst.max(relative_error(a, numeric, cfg.floor));
            max_abs_error = max_abs_error.max((a - numeric).abs());
            checked += 1;
        }
        per_tensor.push((name.clone(), worst));
    }
    let (worst_tensor, max_rel_error) = per_tensor
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, (n, e)| if e > acc.1 { (n, e) } else { acc });
    Ok(GradcheckReport {
        passed: max_rel_error < cfg.tolerance,
        max_rel_error,
        max_abs_error,
        worst_tensor,
        per_tensor,
        checked,
    })
}

fn set_param(params: &mut StackedLstmParams, tensor: usize, index: usize, value: f64) {
    params.weights.tensors_mut()[tensor].1[index] = value;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5, 0.0), 0.5);
        assert_eq!(relative_error(-2.0, 2.0, 1e-6), 2.0);
        assert_eq!(relative_error(1e-9, 0.0, 1e-6), 1e-3);
    }
}
