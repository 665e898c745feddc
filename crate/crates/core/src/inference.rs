//! Monte Carlo dropout prediction of the next CDM and autoregressive
//! rollout to TCA.
//!
//! Sample `i` always draws its masks from [`sample_rng`]`(seed, i)`, so a
//! sample never changes when `n_samples` grows, and the first rollout step
//! reproduces [`predict_next`] exactly.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::data::{CdmRecord, FeatureSchema};
use crate::error::{Error, Result};
use crate::net::{predict, sample_rng, DropoutMasks, Matrix, StackedLstmParams};
use crate::preprocess::NormStats;

pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];
pub const DEFAULT_MAX_STEPS: usize = 30;

/// Everything needed to run a trained network on physical-unit CDMs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub schema: FeatureSchema,
    pub stats: NormStats,
    pub params: StackedLstmParams,
}

impl Model {
    pub fn new(schema: FeatureSchema, stats: NormStats, params: StackedLstmParams) -> Result<Self> {
        let w = schema.width();
        if stats.width() != w || params.config.input_dim != w || params.config.output_dim != w {
            return Err(Error::Schema(format!(
                "schema width {w}, stats width {}, network {}→{}",
                stats.width(),
                params.config.input_dim,
                params.config.output_dim
            )));
        }
        Ok(Self {
            schema,
            stats,
            params,
        })
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    fn normalize_prefix(&self, prefix: &[CdmRecord]) -> Result<Vec<Vec<f64>>> {
        if prefix.is_empty() {
            return Err(Error::invalid("prefix must contain at least one CDM"));
        }
        prefix
            .iter()
            .map(|c| {
                if c.values.len() != self.width() {
                    Err(Error::Schema(format!(
                        "CDM has {} values, model width is {}",
                        c.values.len(),
                        self.width()
                    )))
                } else {
                    Ok(self.stats.transform(&c.values))
                }
            })
            .collect()
    }

    /// Physical time to TCA of a normalized CDM.
    fn physical_time(&self, normalized: &[f64]) -> f64 {
        let i = self.schema.time_index();
        if self.stats.applied[i] {
            normalized[i] * self.stats.std[i] + self.stats.mean[i]
        } else {
            normalized[i]
        }
    }

    /// Runs `B` equal-length normalized sequences and returns the last
    /// output row of each, drawing one mask row per generator.
    fn last_outputs(&self, seqs: &[&[Vec<f64>]], rngs: &mut [ChaCha8Rng]) -> Result<Matrix> {
        let b = seqs.len();
        let len = seqs.first().map_or(0, |s| s.len());
        let w = self.width();
        let mut inputs = vec![Matrix::zeros(b, w); len];
        for (bi, seq) in seqs.iter().enumerate() {
            debug_assert_eq!(seq.len(), len);
            for (t, row) in seq.iter().enumerate() {
                inputs[t].row_mut(bi).copy_from_slice(row);
            }
        }
        let masks = if self.params.config.dropout_rate > 0.0 {
            Some(DropoutMasks::sample_rows(&self.params.config, rngs)?)
        } else {
            None
        };
        let mut out = predict(&inputs, &self.params, masks.as_ref())?;
        Ok(out.pop().unwrap_or_else(|| Matrix::zeros(b, w)))
    }
}

/// `n` Monte Carlo samples of a predicted CDM with per-feature summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    /// `n × W`, normalized space.
    pub samples: Matrix,
    pub mean: Vec<f64>,
    /// Population standard deviation across samples.
    pub std: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// One row per level, normalized space.
    pub quantiles: Vec<Vec<f64>>,
    pub physical_mean: Vec<f64>,
    pub physical_std: Vec<f64>,
    pub physical_quantiles: Vec<Vec<f64>>,
}

/// Column means of a `samples × width` matrix, shifted by the first row so
/// that identical rows give that row back exactly.
pub fn sample_mean(samples: &Matrix) -> Vec<f64> {
    let (n, w) = samples.shape();
    if n == 0 {
        return vec![0.0; w];
    }
    let first = samples.row(0);
    let mut mean = vec![0.0; w];
    for i in 1..n {
        for ((m, x), f) in mean.iter_mut().zip(samples.row(i)).zip(first) {
            *m += x - f;
        }
    }
    for (m, f) in mean.iter_mut().zip(first) {
        *m = f + *m / n as f64;
    }
    mean
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

impl PredictionDistribution {
    pub fn from_samples(samples: Matrix, stats: &NormStats, levels: &[f64]) -> Result<Self> {
        let (n, w) = samples.shape();
        if n == 0 {
            return Err(Error::invalid("a distribution needs at least one sample"));
        }
        if w != stats.width() {
            return Err(Error::shape(format!(
                "samples have width {w}, stats width {}",
                stats.width()
            )));
        }
        if let Some(q) = levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
        }
        let mean = sample_mean(&samples);
        let mut std = vec![0.0; w];
        for i in 0..n {
            for ((s, x), m) in std.iter_mut().zip(samples.row(i)).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());

        let mut quantiles = vec![vec![0.0; w]; levels.len()];
        let mut column = vec![0.0; n];
        for j in 0..w {
            for (i, c) in column.iter_mut().enumerate() {
                *c = samples.get(i, j);
            }
            column.sort_by(f64::total_cmp);
            for (row, &q) in quantiles.iter_mut().zip(levels) {
                row[j] = quantile_sorted(&column, q);
            }
        }

        let physical_mean = stats.inverse_transform(&mean);
        let physical_std = std
            .iter()
            .enumerate()
            .map(|(j, s)| if stats.applied[j] { s * stats.std[j] } else { *s })
            .collect();
        let physical_quantiles = quantiles.iter().map(|q| stats.inverse_transform(q)).collect();
        Ok(Self {
            samples,
            mean,
            std,
            quantile_levels: levels.to_vec(),
            quantiles,
            physical_mean,
            physical_std,
            physical_quantiles,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.rows()
    }
}

/// Samples the next CDM given an observed prefix.
pub fn predict_next(
    model: &Model,
    prefix: &[CdmRecord],
    n_samples: usize,
    seed: u64,
) -> Result<PredictionDistribution> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let rows = model.normalize_prefix(prefix)?;
    let seqs: Vec<&[Vec<f64>]> = vec![rows.as_slice(); n_samples];
    let mut rngs: Vec<_> = (0..n_samples as u64).map(|i| sample_rng(seed, i)).collect();
    let samples = model.last_outputs(&seqs, &mut rngs)?;
    PredictionDistribution::from_samples(samples, &model.stats, &DEFAULT_QUANTILES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TcaReached,
    MaxSteps,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::TcaReached => "tca_reached",
            Termination::MaxSteps => "max_steps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tca_reached" => Ok(Termination::TcaReached),
            "max_steps" => Ok(Termination::MaxSteps),
            other => Err(Error::Format(format!("unknown termination {other:?}"))),
        }
    }
}

/// One sampled continuation of the event.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Generated CDMs, normalized space.
    pub cdms: Vec<Vec<f64>>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    /// 1-based index of the generated CDM.
    pub step: usize,
    /// Trajectories that produced a CDM at this step.
    pub n_alive: usize,
    pub distribution: PredictionDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Observed CDMs, normalized space.
    pub prefix: Vec<Vec<f64>>,
    pub trajectories: Vec<Trajectory>,
    pub steps: Vec<RolloutStep>,
}

impl RolloutResult {
    /// `TcaReached` only if every trajectory reached TCA.
    pub fn termination(&self) -> Termination {
        if self
            .trajectories
            .iter()
            .all(|t| t.termination == Termination::TcaReached)
        {
            Termination::TcaReached
        } else {
            Termination::MaxSteps
        }
    }
}

/// Rebuilds the per-step cross-trajectory statistics: step `k` uses every
/// trajectory with at least `k` generated CDMs.
pub fn step_distributions(
    trajectories: &[Trajectory],
    stats: &NormStats,
    levels: &[f64],
) -> Result<Vec<RolloutStep>> {
    let longest = trajectories.iter().map(|t| t.cdms.len()).max().unwrap_or(0);
    let width = stats.width();
    (1..=longest)
        .map(|k| {
            let rows: Vec<Vec<f64>> = trajectories
                .iter()
                .filter(|t| t.cdms.len() >= k)
                .map(|t| t.cdms[k - 1].clone())
                .collect();
            let n_alive = rows.len();
            let samples = if rows.is_empty() {
                Matrix::zeros(0, width)
            } else {
                Matrix::from_rows(&rows)?
            };
            Ok(RolloutStep {
                step: k,
                n_alive,
                distribution: PredictionDistribution::from_samples(samples, stats, levels)?,
            })
        })
        .collect()
}

/// Extends the prefix independently for each of `n_samples` trajectories,
/// drawing fresh masks for every generated CDM, until the generated time to
/// TCA is `≤ 0` or `max_steps` CDMs have been generated.
pub fn rollout(
    model: &Model,
    prefix: &[CdmRecord],
    n_samples: usize,
    max_steps: usize,
    seed: u64,
) -> Result<RolloutResult> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let prefix_rows = model.normalize_prefix(prefix)?;
    let last = prefix_rows.last().expect("prefix is non-empty");
    let already_there = model.physical_time(last) <= 0.0;

    let mut seqs: Vec<Vec<Vec<f64>>> = vec![prefix_rows.clone(); n_samples];
    let mut rngs: Vec<ChaCha8Rng> = (0..n_samples as u64).map(|i| sample_rng(seed, i)).collect();
    let mut done: Vec<Option<Termination>> = vec![None; n_samples];
    if already_there {
        done.iter_mut().for_each(|d| *d = Some(Termination::TcaReached));
    }

    for _ in 0..max_steps {
        let alive: Vec<usize> = (0..n_samples).filter(|&i| done[i].is_none()).collect();
        if alive.is_empty() {
            break;
        }
        let views: Vec<&[Vec<f64>]> = alive.iter().map(|&i| seqs[i].as_slice()).collect();
        let mut alive_rngs: Vec<ChaCha8Rng> = alive.iter().map(|&i| rngs[i].clone()).collect();
        let next = model.last_outputs(&views, &mut alive_rngs)?;
        for (k, &i) in alive.iter().enumerate() {
            rngs[i] = alive_rngs[k].clone();
            let row = next.row(k).to_vec();
            if model.physical_time(&row) <= 0.0 {
                done[i] = Some(Termination::TcaReached);
            }
            seqs[i].push(row);
        }
    }

    let n_prefix = prefix_rows.len();
    let trajectories: Vec<Trajectory> = seqs
        .into_iter()
        .zip(done)
        .map(|(seq, d)| Trajectory {
            cdms: seq[n_prefix..].to_vec(),
            termination: d.unwrap_or(Termination::MaxSteps),
        })
        .collect();
    let steps = step_distributions(&trajectories, &model.stats, &DEFAULT_QUANTILES)?;
    Ok(RolloutResult {
        prefix: prefix_rows,
        trajectories,
        steps,
    })
}

/// Physical-unit summary of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
    pub quantiles: Vec<f64>,
}

pub fn summarize(dist: &PredictionDistribution, schema: &FeatureSchema) -> Vec<SummaryRow> {
    schema
        .names()
        .enumerate()
        .map(|(j, name)| SummaryRow {
            feature: name.to_string(),
            mean: dist.physical_mean[j],
            std: dist.physical_std[j],
            quantiles: dist.physical_quantiles.iter().map(|q| q[j]).collect(),
        })
        .collect()
}

/// Column label for a quantile level, e.g. `0.05 → p05`.
pub fn quantile_label(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("p{:02}", pct.round() as i64)
    } else {
        format!("p{pct}")
    }
}

pub fn summary_table(rows: &[SummaryRow], levels: &[f64]) -> String {
    let mut s = String::from("feature,mean,std");
    for &q in levels {
        let _ = write!(s, ",{}", quantile_label(q));
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{}", r.feature, r.mean, r.std);
        for q in &r.quantiles {
            let _ = write!(s, ",{q}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, NetConfig};

    fn schema() -> FeatureSchema {
        FeatureSchema::continuous(&["time_to_tca", "x", "y"], "time_to_tca").unwrap()
    }

    fn model(dropout: f64, seed: u64) -> Model {
        let params = init_params(NetConfig::new(3, 6, 2, dropout), seed).unwrap();
        Model::new(schema(), NormStats::identity(3), params).unwrap()
    }

    fn cdm(values: [f64; 3]) -> CdmRecord {
        CdmRecord::new("e", values.to_vec(), &schema()).unwrap()
    }

    #[test]
    fn no_dropout_gives_identical_samples() {
        let m = model(0.0, 1);
        let d = predict_next(&m, &[cdm([3.0, 0.1, -0.2])], 5, 7).unwrap();
        for i in 1..5 {
            assert_eq!(d.samples.row(i), d.samples.row(0));
        }
        assert!(d.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn dropout_gives_spread() {
        let m = model(0.2, 1);
        let d = predict_next(&m, &[cdm([3.0, 0.1, -0.2]), cdm([2.0, 0.3, 0.4])], 50, 7).unwrap();
        assert!(d.std.iter().any(|&s| s > 0.0));
    }

    #[test]
    fn samples_do_not_depend_on_n() {
        let m = model(0.2, 2);
        let prefix = [cdm([3.0, 0.1, -0.2])];
        let small = predict_next(&m, &prefix, 3, 11).unwrap();
        let large = predict_next(&m, &prefix, 8, 11).unwrap();
        for i in 0..3 {
            assert_eq!(small.samples.row(i), large.samples.row(i));
        }
        assert_eq!(small, predict_next(&m, &prefix, 3, 11).unwrap());
    }

    #[test]
    fn empty_prefix_and_zero_samples_rejected() {
        let m = model(0.2, 2);
        assert!(predict_next(&m, &[], 3, 0).is_err());
        assert!(predict_next(&m, &[cdm([1.0, 0.0, 0.0])], 0, 0).is_err());
        let bad = CdmRecord {
            event_id: "e".into(),
            values: vec![1.0, 2.0],
            time_to_tca: 1.0,
        };
        assert!(predict_next(&m, &[bad], 1, 0).is_err());
    }

    #[test]
    fn single_sample_quantiles_collapse() {
        let s = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let d = PredictionDistribution::from_samples(s, &NormStats::identity(3), &DEFAULT_QUANTILES).unwrap();
        for row in summarize(&d, &schema()) {
            assert!(row.quantiles.iter().all(|&q| q == row.mean));
        }
    }

    #[test]
    fn symmetric_pair_has_zero_mean() {
        let s = Matrix::from_rows(&[vec![-1.5, 2.0, 0.0], vec![1.5, -2.0, 0.0]]).unwrap();
        let d = PredictionDistribution::from_samples(s, &NormStats::identity(3), &DEFAULT_QUANTILES).unwrap();
        assert_eq!(d.mean, vec![0.0, 0.0, 0.0]);
        assert_eq!(d.std, vec![1.5, 2.0, 0.0]);
    }

    #[test]
    fn physical_summary_uses_stats() {
        let stats = NormStats {
            mean: vec![10.0, 0.0, 0.0],
            std: vec![2.0, 1.0, 1.0],
            applied: vec![true, true, false],
        };
        let s = Matrix::from_rows(&[vec![1.0, 0.0, 5.0], vec![3.0, 0.0, 7.0]]).unwrap();
        let d = PredictionDistribution::from_samples(s, &stats, &[0.5]).unwrap();
        assert_eq!(d.physical_mean, vec![14.0, 0.0, 6.0]);
        assert_eq!(d.physical_std, vec![2.0, 0.0, 1.0]);
        assert_eq!(d.physical_quantiles[0], vec![14.0, 0.0, 6.0]);
    }

    #[test]
    fn rollout_stops_immediately_at_tca() {
        let m = model(0.2, 3);
        let r = rollout(&m, &[cdm([0.0, 1.0, 1.0])], 4, 10, 0).unwrap();
        assert!(r.trajectories.iter().all(|t| t.cdms.is_empty()));
        assert_eq!(r.termination(), Termination::TcaReached);
        assert!(r.steps.is_empty());
    }

    #[test]
    fn rollout_respects_max_steps() {
        let mut m = model(0.2, 3);
        // Force the predicted time to TCA far positive.
        m.params.weights.head_b[0] = 100.0;
        let r = rollout(&m, &[cdm([5.0, 1.0, 1.0])], 3, 1, 0).unwrap();
        assert!(r.trajectories.iter().all(|t| t.cdms.len() == 1));
        assert_eq!(r.termination(), Termination::MaxSteps);
        let r = rollout(&m, &[cdm([5.0, 1.0, 1.0])], 3, 7, 0).unwrap();
        assert_eq!(r.steps.len(), 7);
        assert!(r.steps.iter().all(|s| s.n_alive == 3));
    }

    #[test]
    fn first_rollout_step_matches_predict_next() {
        let mut m = model(0.2, 4);
        m.params.weights.head_b[0] = 100.0;
        let prefix = [cdm([3.0, 0.1, 0.2]), cdm([2.5, 0.0, 0.1])];
        let r = rollout(&m, &prefix, 6, 3, 21).unwrap();
        let p = predict_next(&m, &prefix, 6, 21).unwrap();
        assert_eq!(r.steps[0].distribution, p);
    }

    #[test]
    fn quantile_labels() {
        assert_eq!(quantile_label(0.05), "p05");
        assert_eq!(quantile_label(0.5), "p50");
        assert_eq!(quantile_label(0.95), "p95");
    }
}
