//! Standardization, one-step-shifted training pairs and padded mini-batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{CdmRecord, Event, FeatureSchema};
use crate::error::{Error, Result};
use crate::net::Matrix;

/// Per-feature mean and standard deviation fitted on training CDMs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `true` where the feature is standardized; other features pass through.
    pub applied: Vec<bool>,
}

impl NormStats {
    /// Mean 0, std 1 on every feature.
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
            applied: vec![true; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.width());
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if self.applied[i] {
                    (x - self.mean[i]) / self.std[i]
                } else {
                    x
                }
            })
            .collect()
    }

    pub fn inverse_transform(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.width());
        values
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                if self.applied[i] {
                    z * self.std[i] + self.mean[i]
                } else {
                    z
                }
            })
            .collect()
    }

    /// Copy of `event` with every CDM standardized.
    pub fn transform_event(&self, event: &Event) -> Event {
        Event {
            event_id: event.event_id.clone(),
            cdms: event
                .cdms
                .iter()
                .map(|c| self.transform_record(c))
                .collect(),
        }
    }

    fn transform_record(&self, c: &CdmRecord) -> CdmRecord {
        let values = self.transform(&c.values);
        // time_to_tca keeps the physical value; only `values` is rescaled.
        CdmRecord {
            event_id: c.event_id.clone(),
            values,
            time_to_tca: c.time_to_tca,
        }
    }
}

/// Fits population (divisor N) statistics over every CDM of `train_events`.
///
/// A feature with zero variance gets `std = 1` and a warning.
pub fn fit_normalizer(train_events: &[Event], schema: &FeatureSchema) -> Result<NormStats> {
    let width = schema.width();
    let rows: Vec<&[f64]> = train_events
        .iter()
        .flat_map(|e| e.cdms.iter().map(|c| c.values.as_slice()))
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit a normalizer on zero CDMs"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::Schema(format!(
            "CDM has {} values, schema width is {width}",
            r.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; width];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for r in &rows {
        for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let names: Vec<&str> = schema.names().collect();
    let std = var
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let s = (v / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                log::warn!("feature {} has zero variance; using std = 1", names[i]);
                1.0
            }
        })
        .collect();
    Ok(NormStats {
        mean,
        std,
        applied: schema.continuous_mask(),
    })
}

/// Input CDMs `1..T-1` and target CDMs `2..T` of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub event_id: String,
    pub input: Matrix,
    pub target: Matrix,
}

impl SequencePair {
    pub fn len(&self) -> usize {
        self.input.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.input.rows() == 0
    }
}

pub fn build_training_pair(event: &Event) -> Result<SequencePair> {
    let t = event.len();
    if t < 2 {
        return Err(Error::invalid(format!(
            "event {} has {t} CDMs; at least 2 are needed for a training pair",
            event.event_id
        )));
    }
    let rows: Vec<Vec<f64>> = event.cdms.iter().map(|c| c.values.clone()).collect();
    Ok(SequencePair {
        event_id: event.event_id.clone(),
        input: Matrix::from_rows(&rows[..t - 1])?,
        target: Matrix::from_rows(&rows[1..])?,
    })
}

/// Right-padded, time-major mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `T_max` matrices of shape `B × W`; padded cells are zero.
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Matrix>,
    /// `mask[b][t]` is `t < lengths[b]`.
    pub mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    pub event_ids: Vec<String>,
}

impl Batch {
    pub fn from_pairs(pairs: &[&SequencePair]) -> Result<Self> {
        let width = pairs.first().map_or(0, |p| p.input.cols());
        if let Some(p) = pairs
            .iter()
            .find(|p| p.input.cols() != width || p.target.cols() != width)
        {
            return Err(Error::shape(format!(
                "pair {} has width {} but the batch width is {width}",
                p.event_id,
                p.input.cols()
            )));
        }
        let lengths: Vec<usize> = pairs.iter().map(|p| p.len()).collect();
        let t_max = lengths.iter().copied().max().unwrap_or(0);
        let b = pairs.len();
        let mut inputs = vec![Matrix::zeros(b, width); t_max];
        let mut targets = vec![Matrix::zeros(b, width); t_max];
        for (bi, p) in pairs.iter().enumerate() {
            for t in 0..p.len() {
                inputs[t].row_mut(bi).copy_from_slice(p.input.row(t));
                targets[t].row_mut(bi).copy_from_slice(p.target.row(t));
            }
        }
        let mask = lengths
            .iter()
            .map(|&len| (0..t_max).map(|t| t < len).collect())
            .collect();
        Ok(Self {
            inputs,
            targets,
            mask,
            lengths,
            event_ids: pairs.iter().map(|p| p.event_id.clone()).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn valid_steps(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Shuffles `pairs` with `shuffle_seed` and cuts them into batches of
/// `batch_size` (the last may be smaller).
pub fn make_batches(
    pairs: &[SequencePair],
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&SequencePair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&refs)
        })
        .collect()
}
