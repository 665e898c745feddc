//! Persistence baseline, Monte Carlo model scoring and comparison tables.
//!
//! All errors are measured in normalized feature space.

use std::fmt::Write as _;

use crate::data::{Event, FeatureSchema};
use crate::error::{Error, Result};
use crate::inference::{sample_mean, Model};
use crate::net::{predict, sample_rng, DropoutMasks, Matrix};
use crate::preprocess::NormStats;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub mse: f64,
    pub per_feature_mse: Vec<f64>,
    /// Monte Carlo samples per prediction; 0 for the baseline.
    pub n_samples: usize,
    pub events: usize,
    /// Number of scored next-CDM predictions, `Σ(T_i − 1)`.
    pub predictions: usize,
    /// `predictions × width`.
    pub cells: usize,
    /// Persistence MSE on the same cells.
    pub baseline_mse: Option<f64>,
}

impl EvalReport {
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "label = {}", self.label);
        let _ = writeln!(s, "mse = {}", self.mse);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "events = {}", self.events);
        let _ = writeln!(s, "predictions = {}", self.predictions);
        let _ = writeln!(s, "cells = {}", self.cells);
        if let Some(b) = self.baseline_mse {
            let _ = writeln!(s, "baseline_mse = {b}");
        }
        s
    }

    pub fn per_feature_table(&self, schema: &FeatureSchema) -> String {
        let mut s = String::from("feature,mse\n");
        for (name, mse) in schema.names().zip(&self.per_feature_mse) {
            let _ = writeln!(s, "{name},{mse}");
        }
        s
    }
}

/// Accumulates squared errors per feature in a fixed order.
struct ErrorSum {
    per_feature: Vec<f64>,
    predictions: usize,
    events: usize,
}

impl ErrorSum {
    fn new(width: usize) -> Self {
        Self {
            per_feature: vec![0.0; width],
            predictions: 0,
            events: 0,
        }
    }

    fn add(&mut self, predicted: &[f64], actual: &[f64]) {
        for ((s, p), a) in self.per_feature.iter_mut().zip(predicted).zip(actual) {
            let d = p - a;
            *s += d * d;
        }
        self.predictions += 1;
    }

    fn report(self, label: &str, n_samples: usize) -> Result<EvalReport> {
        let width = self.per_feature.len();
        if self.predictions == 0 {
            return Err(Error::invalid("no consecutive CDM pairs to evaluate"));
        }
        let n = self.predictions as f64;
        let per_feature_mse: Vec<f64> = self.per_feature.iter().map(|s| s / n).collect();
        let total: f64 = self.per_feature.iter().sum();
        Ok(EvalReport {
            label: label.to_string(),
            mse: total / (n * width as f64),
            per_feature_mse,
            n_samples,
            events: self.events,
            predictions: self.predictions,
            cells: self.predictions * width,
            baseline_mse: None,
        })
    }
}

fn check_events(events: &[Event]) -> Result<()> {
    if let Some(e) = events.iter().find(|e| e.len() < 2) {
        return Err(Error::invalid(format!(
            "event {} has {} CDMs; evaluation needs at least 2",
            e.event_id,
            e.len()
        )));
    }
    Ok(())
}

/// Predicts each CDM to equal the previous one.
pub fn persistence_baseline(events: &[Event], stats: &NormStats) -> Result<EvalReport> {
    check_events(events)?;
    let mut acc = ErrorSum::new(stats.width());
    for e in events {
        let rows: Vec<Vec<f64>> = e.cdms.iter().map(|c| stats.transform(&c.values)).collect();
        for pair in rows.windows(2) {
            acc.add(&pair[0], &pair[1]);
        }
        acc.events += 1;
    }
    acc.report("persistence", 0)
}

/// Scores an arbitrary next-CDM predictor. For each event `predictor`
/// receives the event index and the normalized CDMs and must return one
/// prediction for every CDM after the first (`T − 1` rows, row `t` predicting
/// CDM `t + 1` from CDMs `0..=t`).
pub fn evaluate_with<F>(
    events: &[Event],
    stats: &NormStats,
    label: &str,
    n_samples: usize,
    mut predictor: F,
) -> Result<EvalReport>
where
    F: FnMut(usize, &[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
{
    check_events(events)?;
    let mut acc = ErrorSum::new(stats.width());
    for (ei, e) in events.iter().enumerate() {
        let rows: Vec<Vec<f64>> = e.cdms.iter().map(|c| stats.transform(&c.values)).collect();
        let preds = predictor(ei, &rows)?;
        if preds.len() != rows.len() - 1 {
            return Err(Error::shape(format!(
                "predictor returned {} rows for an event of {} CDMs",
                preds.len(),
                rows.len()
            )));
        }
        for (p, actual) in preds.iter().zip(&rows[1..]) {
            if p.len() != stats.width() {
                return Err(Error::shape(format!(
                    "prediction has {} values, expected {}",
                    p.len(),
                    stats.width()
                )));
            }
            acc.add(p, actual);
        }
        acc.events += 1;
    }
    let mut report = acc.report(label, n_samples)?;
    report.baseline_mse = Some(persistence_baseline(events, stats)?.mse);
    Ok(report)
}

/// Mean-of-samples predictions for every prefix of a normalized event.
///
/// Event `event_index` uses seed `derive_seed(seed, [event_index])`; sample `i`
/// draws its masks from `sample_rng(event_seed, i)`. Because masks are fixed
/// per sequence and the network is causal, one forward pass over the whole
/// event yields, at step `t`, exactly what `predict_next` would return for the
/// prefix `0..=t` with the same event seed.
pub fn mc_mean_predictions(
    model: &Model,
    rows: &[Vec<f64>],
    n_samples: usize,
    event_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let w = model.width();
    let steps = rows.len().saturating_sub(1);
    let mut inputs = vec![Matrix::zeros(n_samples, w); steps];
    for (t, row) in rows[..steps].iter().enumerate() {
        for b in 0..n_samples {
            inputs[t].row_mut(b).copy_from_slice(row);
        }
    }
    let masks = if model.params.config.dropout_rate > 0.0 {
        let mut rngs: Vec<_> = (0..n_samples as u64).map(|i| sample_rng(event_seed, i)).collect();
        Some(DropoutMasks::sample_rows(&model.params.config, &mut rngs)?)
    } else {
        None
    };
    let out = predict(&inputs, &model.params, masks.as_ref())?;
    Ok(out
        .iter()
        .map(sample_mean)
        .collect())
}

pub fn event_seed(seed: u64, event_index: usize) -> u64 {
    derive_seed(seed, &[event_index as u64])
}

/// Scores the mean of `n_samples` Monte Carlo predictions against every
/// next CDM of `events`.
pub fn evaluate_model(model: &Model, events: &[Event], n_samples: usize, seed: u64) -> Result<EvalReport> {
    let label = format!("model (n={n_samples})");
    evaluate_with(events, &model.stats, &label, n_samples, |ei, rows| {
        mc_mean_predictions(model, rows, n_samples, event_seed(seed, ei))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub mse: f64,
    /// `(baseline − mse) / baseline`, when a baseline is known.
    pub improvement: Option<f64>,
}

/// Rows sorted by MSE ascending; ties keep input order.
pub fn compare(reports: &[EvalReport]) -> Result<Vec<ComparisonRow>> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let baseline = reports
        .iter()
        .find(|r| r.n_samples == 0)
        .map(|r| r.mse)
        .or_else(|| reports.iter().find_map(|r| r.baseline_mse));
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let base = r.baseline_mse.or(baseline);
            ComparisonRow {
                label: r.label.clone(),
                mse: r.mse,
                improvement: base.filter(|b| *b > 0.0).map(|b| (b - r.mse) / b),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    Ok(rows)
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("label,mse,improvement_pct\n");
    for r in rows {
        let imp = r
            .improvement
            .map_or(String::new(), |i| format!("{:.1}", 100.0 * i));
        let _ = writeln!(s, "{},{},{}", r.label, r.mse, imp);
    }
    s
}
