//! Monte Carlo prediction, rollouts and evaluation.

use cdm_lstm::data::CdmRecord;
use cdm_lstm::evaluation::{evaluate_model, event_seed, persistence_baseline};
use cdm_lstm::inference::{quantile_sorted, Termination};
use cdm_lstm::net::{init_params, sample_dropout_masks, NetConfig};
use cdm_lstm::preprocess::fit_normalizer;
use cdm_lstm::synthetic::{countdown_corpus, kinematic_corpus, KinematicConfig};
use cdm_lstm::{predict_next, rollout, Dataset, Model};
use proptest::prelude::*;

fn model_for(data: &Dataset, hidden: usize, dropout: f64, seed: u64) -> Model {
    let stats = fit_normalizer(&data.events, &data.schema).unwrap();
    let params = init_params(NetConfig::new(data.schema.width(), hidden, 2, dropout), seed).unwrap();
    Model::new(data.schema.clone(), stats, params).unwrap()
}

fn small_corpus() -> Dataset {
    kinematic_corpus(
        &KinematicConfig {
            events: 8,
            pairs: 2,
            ..Default::default()
        },
        3,
    )
    .unwrap()
}

#[test]
fn dropout_off_gives_identical_samples() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.0, 1);
    let d = predict_next(&model, &data.events[0].cdms[..3], 20, 5).unwrap();
    for i in 1..20 {
        assert_eq!(d.samples.row(i), d.samples.row(0));
    }
    assert!(d.std.iter().all(|&s| s == 0.0));
    assert!(d.physical_std.iter().all(|&s| s == 0.0));
    for q in &d.quantiles {
        assert_eq!(q, &d.mean);
    }
}

#[test]
fn dropout_on_gives_spread() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.2, 1);
    let d = predict_next(&model, &data.events[0].cdms[..3], 20, 5).unwrap();
    assert!(d.std.iter().any(|&s| s > 0.0));
}

#[test]
fn keep_rate_is_one_minus_p() {
    let cfg = NetConfig::new(10, 10, 1, 0.2);
    let masks = sample_dropout_masks(&cfg, 5_000, 123).unwrap();
    let input = masks.layer_inputs[0].as_ref().unwrap();
    let head = masks.head.as_ref().unwrap();
    let cells: Vec<f64> = input.as_slice().iter().chain(head.as_slice()).copied().collect();
    assert_eq!(cells.len(), 100_000);
    let kept = cells.iter().filter(|&&v| v != 0.0).count() as f64 / cells.len() as f64;
    assert!((kept - 0.8).abs() < 0.01, "keep rate {kept}");
    assert!(cells.iter().all(|&v| v == 0.0 || v == 1.25));
}

#[test]
fn samples_depend_only_on_seed_and_index() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.2, 2);
    let prefix = &data.events[1].cdms[..2];
    let a = predict_next(&model, prefix, 4, 9).unwrap();
    let b = predict_next(&model, prefix, 11, 9).unwrap();
    for i in 0..4 {
        assert_eq!(a.samples.row(i), b.samples.row(i));
    }
    assert_eq!(a, predict_next(&model, prefix, 4, 9).unwrap());
    assert_ne!(a.samples, predict_next(&model, prefix, 4, 10).unwrap().samples);
}

fn sorted_quantile_oracle(values: &[f64], q: f64) -> f64 {
    // Hyndman & Fan type 7: h = (n-1)q, interpolate between floor and ceil.
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

proptest! {
    #[test]
    fn quantiles_match_sort_oracle(values in prop::collection::vec(-100.0f64..100.0, 1..60), q in 0.0f64..=1.0) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let got = quantile_sorted(&sorted, q);
        let want = sorted_quantile_oracle(&values, q);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", got, want);
        prop_assert!(got >= sorted[0] && got <= sorted[sorted.len() - 1]);
    }
}

#[test]
fn quantile_examples() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile_sorted(&v, 0.0), 1.0);
    assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    assert!((quantile_sorted(&v, 0.05) - 1.15).abs() < 1e-12);
    assert_eq!(quantile_sorted(&[7.0], 0.95), 7.0);
}

#[test]
fn distribution_statistics_match_direct_computation() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.3, 4);
    let d = predict_next(&model, &data.events[2].cdms[..4], 37, 1).unwrap();
    for j in 0..model.width() {
        let col: Vec<f64> = (0..37).map(|i| d.samples.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / 37.0;
        let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 37.0).sqrt();
        assert!((d.mean[j] - mean).abs() < 1e-12);
        assert!((d.std[j] - std).abs() < 1e-12);
        for (qi, &q) in d.quantile_levels.iter().enumerate() {
            assert!((d.quantiles[qi][j] - sorted_quantile_oracle(&col, q)).abs() < 1e-12);
        }
        let physical = model.stats.inverse_transform(&d.mean);
        assert!((d.physical_mean[j] - physical[j]).abs() < 1e-9 * (1.0 + physical[j].abs()));
    }
}

#[test]
fn first_rollout_step_is_predict_next() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.2, 5);
    let prefix = &data.events[0].cdms[..2];
    let r = rollout(&model, prefix, 6, 4, 21).unwrap();
    let p = predict_next(&model, prefix, 6, 21).unwrap();
    for (i, t) in r.trajectories.iter().enumerate() {
        assert_eq!(t.cdms[0].as_slice(), p.samples.row(i));
    }
}

#[test]
fn rollout_respects_max_steps_and_tca() {
    let data = countdown_corpus(20, 1).unwrap();
    let model = model_for(&data, 6, 0.2, 6);
    for max_steps in [0, 1, 5, 12] {
        let r = rollout(&model, &data.events[0].cdms[..1], 7, max_steps, 2).unwrap();
        for t in &r.trajectories {
            assert!(t.cdms.len() <= max_steps);
            let time = |row: &Vec<f64>| model.stats.inverse_transform(row)[0];
            match t.termination {
                Termination::TcaReached => {
                    assert!(time(t.cdms.last().unwrap()) <= 0.0);
                    assert!(t.cdms[..t.cdms.len() - 1].iter().all(|r| time(r) > 0.0));
                }
                Termination::MaxSteps => {
                    assert_eq!(t.cdms.len(), max_steps);
                    assert!(t.cdms.iter().all(|r| time(r) > 0.0));
                }
            }
        }
        for s in &r.steps {
            let alive = r.trajectories.iter().filter(|t| t.cdms.len() >= s.step).count();
            assert_eq!(s.n_alive, alive);
        }
    }
}

#[test]
fn rollout_from_tca_generates_nothing() {
    let data = countdown_corpus(3, 1).unwrap();
    let model = model_for(&data, 4, 0.2, 1);
    let last = data.events[0].cdms.iter().find(|c| c.time_to_tca == 0.0).unwrap().clone();
    let r = rollout(&model, &[last], 5, 10, 0).unwrap();
    assert!(r.trajectories.iter().all(|t| t.cdms.is_empty()));
    assert_eq!(r.termination(), Termination::TcaReached);
    assert!(r.steps.is_empty());
}

#[test]
fn evaluation_equals_predict_next_on_every_prefix() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.2, 7);
    let events = &data.events[..4];
    let n = 5;
    let report = evaluate_model(&model, events, n, 33).unwrap();

    let width = model.width();
    let mut sq = vec![0.0; width];
    let mut count = 0usize;
    for (ei, e) in events.iter().enumerate() {
        for t in 1..e.len() {
            let d = predict_next(&model, &e.cdms[..t], n, event_seed(33, ei)).unwrap();
            let target = model.stats.transform(&e.cdms[t].values);
            for j in 0..width {
                sq[j] += (d.mean[j] - target[j]).powi(2);
            }
            count += 1;
        }
    }
    assert_eq!(report.predictions, count);
    for (got, s) in report.per_feature_mse.iter().zip(&sq) {
        assert!((got - s / count as f64).abs() < 1e-12);
    }
    let mse = sq.iter().sum::<f64>() / (count * width) as f64;
    assert!((report.mse - mse).abs() < 1e-12);
}

#[test]
fn persistence_baseline_by_hand() {
    let data = small_corpus();
    let stats = fit_normalizer(&data.events, &data.schema).unwrap();
    let report = persistence_baseline(&data.events, &stats).unwrap();
    let (mut sum, mut cells) = (0.0, 0usize);
    for e in &data.events {
        for w in e.cdms.windows(2) {
            let a = stats.transform(&w[0].values);
            let b = stats.transform(&w[1].values);
            sum += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            cells += a.len();
        }
    }
    assert!((report.mse - sum / cells as f64).abs() < 1e-12);
    assert_eq!(report.cells, cells);
}

#[test]
fn sample_mean_beats_single_sample_on_average() {
    let data = small_corpus();
    // Large head weights so the dropout variance is not negligible next to
    // the (untrained) bias.
    let mut model = model_for(&data, 16, 0.2, 8);
    model.params.weights.head_w.as_mut_slice().iter_mut().for_each(|w| *w *= 8.0);
    let (mut one, mut fifty) = (0.0, 0.0);
    for seed in 0..20 {
        one += evaluate_model(&model, &data.events, 1, seed).unwrap().mse;
        fifty += evaluate_model(&model, &data.events, 50, seed).unwrap().mse;
    }
    assert!(fifty < one, "n=50 {fifty} vs n=1 {one}");
}

#[test]
fn evaluation_is_deterministic() {
    let data = small_corpus();
    let model = model_for(&data, 8, 0.2, 9);
    let a = evaluate_model(&model, &data.events, 3, 4).unwrap();
    let b = evaluate_model(&model, &data.events, 3, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn prefix_width_is_checked() {
    let data = small_corpus();
    let model = model_for(&data, 4, 0.2, 1);
    let bad = CdmRecord {
        event_id: "x".into(),
        values: vec![1.0, 2.0],
        time_to_tca: 1.0,
    };
    assert!(predict_next(&model, &[bad], 2, 0).is_err());
    assert!(predict_next(&model, &[], 2, 0).is_err());
    assert!(predict_next(&model, &data.events[0].cdms[..1], 0, 0).is_err());
}
