//! Masked MSE, Adam and the training loop.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{DatasetSplit, Event, FeatureSchema};
use crate::error::{Error, Result};
use crate::net::{
    backward, forward, init_params, predict, sample_dropout_masks, DropoutMasks, DropoutSites,
    Matrix, NetConfig, StackedLstmParams, Weights, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
    DEFAULT_LAYERS,
};
use crate::preprocess::{build_training_pair, fit_normalizer, make_batches, Batch, NormStats, SequencePair};
use crate::seed::derive_seed;

#[derive(Debug, Clone)]
pub struct MseLoss {
    /// Mean over valid cells.
    pub value: f64,
    /// `2(pred − target)/N_valid` on valid cells, zero on padding.
    pub d_pred: Vec<Matrix>,
    pub sum_sq: f64,
    pub cells: usize,
}

/// Mean squared error over the cells of mask-true steps, all features.
pub fn mse_loss(pred: &[Matrix], target: &[Matrix], mask: &[Vec<bool>]) -> Result<MseLoss> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} prediction steps vs {} target steps",
            pred.len(),
            target.len()
        )));
    }
    let batch = mask.len();
    for (t, (p, y)) in pred.iter().zip(target).enumerate() {
        if p.shape() != y.shape() || p.rows() != batch {
            return Err(Error::shape(format!(
                "step {t}: prediction {:?}, target {:?}, mask rows {batch}",
                p.shape(),
                y.shape()
            )));
        }
    }
    if let Some(m) = mask.iter().find(|m| m.len() != pred.len()) {
        return Err(Error::shape(format!(
            "mask row has {} steps, batch has {}",
            m.len(),
            pred.len()
        )));
    }
    let width = pred.first().map_or(0, Matrix::cols);
    let valid_steps: usize = mask.iter().map(|m| m.iter().filter(|&&v| v).count()).sum();
    let cells = valid_steps * width;
    if cells == 0 {
        return Err(Error::invalid("loss over zero valid cells"));
    }
    let scale = 2.0 / cells as f64;
    let mut sum_sq = 0.0;
    let mut d_pred = Vec::with_capacity(pred.len());
    for (t, (p, y)) in pred.iter().zip(target).enumerate() {
        let mut d = Matrix::zeros(p.rows(), p.cols());
        for (b, row_mask) in mask.iter().enumerate() {
            if !row_mask[t] {
                continue;
            }
            let dr = d.row_mut(b);
            for ((g, &pv), &yv) in dr.iter_mut().zip(p.row(b)).zip(y.row(b)) {
                let diff = pv - yv;
                sum_sq += diff * diff;
                *g = scale * diff;
            }
        }
        d_pred.push(d);
    }
    Ok(MseLoss {
        value: sum_sq / cells as f64,
        d_pred,
        sum_sq,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &Weights, config: AdamConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(params: &mut Weights, grads: &Weights, state: &mut AdamState) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    for (name, g) in grads.tensors() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - beta1.powf(t);
    let c2 = 1.0 - beta2.powf(t);

    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(ms)
        .zip(vs)
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut Weights, max_norm: f64) -> f64 {
    let norm = grads.sum_of_squares().sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout_rate: f64,
    pub sites: DropoutSites,
    pub hidden: usize,
    pub layers: usize,
    pub adam: AdamConfig,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Call the observer every this many epochs (it is always called after
    /// the final epoch).
    pub checkpoint_every: Option<usize>,
    /// Record the loss on the split's test events after every epoch.
    pub track_heldout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            seed: 0,
            dropout_rate: DEFAULT_DROPOUT,
            sites: DropoutSites::default(),
            hidden: DEFAULT_HIDDEN,
            layers: DEFAULT_LAYERS,
            adam: AdamConfig::default(),
            clip_norm: None,
            checkpoint_every: None,
            track_heldout: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid("clip threshold must be positive"));
            }
        }
        Ok(())
    }

    pub fn net_config(&self, width: usize) -> NetConfig {
        NetConfig {
            sites: self.sites,
            ..NetConfig::new(width, self.hidden, self.layers, self.dropout_rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub heldout_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("epoch,loss,heldout_loss,seconds\n");
        for e in &self.epochs {
            let held = e.heldout_loss.map_or(String::new(), |h| h.to_string());
            let _ = writeln!(s, "{},{},{},{:.3}", e.epoch, e.loss, held, e.seconds);
        }
        s
    }
}

/// Normalizes events and turns them into shifted pairs.
pub fn training_pairs(events: &[Event], stats: &NormStats) -> Result<Vec<SequencePair>> {
    events
        .iter()
        .map(|e| build_training_pair(&stats.transform_event(e)))
        .collect()
}

/// Forward, masked MSE, backward, optional clipping and one Adam update on
/// `batch`. Returns the loss before the update.
pub fn train_step(
    params: &mut StackedLstmParams,
    state: &mut AdamState,
    batch: &Batch,
    masks: Option<&DropoutMasks>,
    clip_norm: Option<f64>,
) -> Result<MseLoss> {
    let (pred, cache) = forward(&batch.inputs, params, masks)?;
    let loss = mse_loss(&pred, &batch.targets, &batch.mask)?;
    let mut grads = backward(&cache, &loss.d_pred, params)?;
    if let Some(c) = clip_norm {
        clip_grad_norm(&mut grads, c);
    }
    adam_step(&mut params.weights, &grads, state)?;
    Ok(loss)
}

/// Mean squared error over all valid cells of `pairs`, no dropout.
pub fn dataset_loss(params: &StackedLstmParams, pairs: &[SequencePair]) -> Result<f64> {
    let mut sum_sq = 0.0;
    let mut cells = 0;
    for chunk in pairs.chunks(128) {
        let refs: Vec<_> = chunk.iter().collect();
        let batch = Batch::from_pairs(&refs)?;
        let pred = predict(&batch.inputs, params, None)?;
        let l = mse_loss(&pred, &batch.targets, &batch.mask)?;
        sum_sq += l.sum_sq;
        cells += l.cells;
    }
    if cells == 0 {
        return Err(Error::invalid("loss over zero valid cells"));
    }
    Ok(sum_sq / cells as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: StackedLstmParams,
    pub stats: NormStats,
    pub history: TrainHistory,
}

/// Progress handed to the observer at checkpoint epochs.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub params: &'a StackedLstmParams,
    pub stats: &'a NormStats,
    pub history: &'a TrainHistory,
    pub is_final: bool,
}

pub fn fit(split: &DatasetSplit, schema: &FeatureSchema, config: &TrainConfig) -> Result<TrainOutcome> {
    fit_with_observer(split, schema, config, |_| Ok(()))
}

/// Trains on `split.train`: the normalizer is fitted on the training events,
/// each epoch reshuffles with a seed derived from `(seed, epoch)` and each
/// batch draws fresh dropout masks.
pub fn fit_with_observer<F>(
    split: &DatasetSplit,
    schema: &FeatureSchema,
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochSnapshot<'_>) -> Result<()>,
{
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let stats = fit_normalizer(&split.train, schema)?;
    let pairs = training_pairs(&split.train, &stats)?;
    let heldout = if config.track_heldout && !split.test.is_empty() {
        Some(training_pairs(&split.test, &stats)?)
    } else {
        None
    };

    let net = config.net_config(schema.width());
    let mut params = init_params(net, config.seed)?;
    let mut adam = AdamState::new(&params.weights, config.adam);
    let mut history = TrainHistory::default();
    let mut last_good = params.clone();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let batches = make_batches(&pairs, config.batch_size, derive_seed(config.seed, &[1, epoch as u64]))?;
        let mut sum_sq = 0.0;
        let mut cells = 0usize;
        let mut diverged = false;
        for (j, batch) in batches.iter().enumerate() {
            let masks = if params.config.dropout_rate > 0.0 {
                let seed = derive_seed(config.seed, &[2, epoch as u64, j as u64]);
                Some(sample_dropout_masks(&params.config, batch.batch_size(), seed)?)
            } else {
                None
            };
            match train_step(&mut params, &mut adam, batch, masks.as_ref(), config.clip_norm) {
                Ok(loss) => {
                    sum_sq += loss.sum_sq;
                    cells += loss.cells;
                }
                Err(Error::NonFinite(msg)) => {
                    log::error!("epoch {epoch}, batch {j}: {msg}");
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let loss = if diverged { f64::NAN } else { sum_sq / cells as f64 };
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss,
                last_good: Box::new(last_good),
            });
        }
        let heldout_loss = heldout
            .as_ref()
            .map(|p| dataset_loss(&params, p))
            .transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            loss,
            heldout_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: loss {loss:.6}");
        last_good.clone_from(&params);

        let is_final = epoch == config.epochs;
        let due = config.checkpoint_every.is_some_and(|k| k > 0 && epoch % k == 0);
        if due || is_final {
            observer(&EpochSnapshot {
                epoch,
                params: &params,
                stats: &stats,
                history: &history,
                is_final,
            })?;
        }
    }
    Ok(TrainOutcome {
        params,
        stats,
        history,
    })
}
