//! Per-sequence Bernoulli dropout masks.
//!
//! A mask row is drawn once per sequence and reused at every time step.
//! Kept units are scaled by `1/(1-p)` so each mask has unit expectation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::params::NetConfig;
use crate::error::{Error, Result};

/// Generator for row `index` of a mask batch keyed by `seed`.
///
/// Each index gets its own ChaCha stream, so a row is a function of
/// `(seed, index)` alone and does not shift when the batch grows.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// One `B × D_l` mask per layer input, `None` where the site is disabled.
    pub layer_inputs: Vec<Option<Matrix>>,
    /// `B × H` mask on the post-ReLU head input.
    pub head: Option<Matrix>,
}

impl DropoutMasks {
    pub fn batch_size(&self) -> Option<usize> {
        self.layer_inputs
            .iter()
            .flatten()
            .chain(self.head.iter())
            .map(Matrix::rows)
            .next()
    }

    /// All-ones masks on every enabled site.
    pub fn ones(config: &NetConfig, batch: usize) -> Self {
        let layer_inputs = (0..config.num_layers)
            .map(|l| {
                config
                    .layer_input_dropped(l)
                    .then(|| Matrix::filled(batch, config.layer_input_dim(l), 1.0))
            })
            .collect();
        let head = config
            .sites
            .head
            .then(|| Matrix::filled(batch, config.hidden, 1.0));
        Self { layer_inputs, head }
    }

    /// Draws row `b` from `rngs[b]`, advancing each generator.
    ///
    /// Within a row the draw order is layer inputs bottom-up, then the head.
    pub fn sample_rows(config: &NetConfig, rngs: &mut [ChaCha8Rng]) -> Result<Self> {
        let rate = config.dropout_rate;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        let mut masks = Self::ones(config, rngs.len());
        if rate == 0.0 {
            return Ok(masks);
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        for (b, rng) in rngs.iter_mut().enumerate() {
            let sites = masks
                .layer_inputs
                .iter_mut()
                .flatten()
                .chain(masks.head.iter_mut());
            for m in sites {
                for x in m.row_mut(b) {
                    *x = if rng.gen::<f64>() < keep { scale } else { 0.0 };
                }
            }
        }
        Ok(masks)
    }
}

/// Masks for a batch of `batch` sequences; row `b` comes from
/// [`sample_rng`]`(seed, b)`.
pub fn sample_dropout_masks(config: &NetConfig, batch: usize, seed: u64) -> Result<DropoutMasks> {
    let mut rngs: Vec<_> = (0..batch as u64).map(|b| sample_rng(seed, b)).collect();
    DropoutMasks::sample_rows(config, &mut rngs)
}
