//! Learn a countdown to TCA, then roll sampled futures forward from a single
//! observed CDM until each reaches TCA.
//!
//! `cargo run --release --example rollout_to_tca`

use cdm_lstm::data::split_train_test;
use cdm_lstm::inference::{quantile_label, summarize, DEFAULT_QUANTILES};
use cdm_lstm::synthetic::countdown_corpus;
use cdm_lstm::{fit, rollout, Model, TrainConfig};

fn main() -> cdm_lstm::Result<()> {
    let data = countdown_corpus(200, 11)?;
    let split = split_train_test(data.events, 0.15, 11)?;
    let mut config = TrainConfig {
        epochs: 200,
        batch_size: 16,
        hidden: 64,
        seed: 11,
        ..Default::default()
    };
    config.adam.lr = 3e-3;
    let outcome = fit(&split, &data.schema, &config)?;
    let model = Model::new(data.schema.clone(), outcome.stats, outcome.params)?;

    // An event whose first CDM sits 5 days before TCA.
    let event = split
        .test
        .iter()
        .chain(&split.train)
        .find(|e| e.cdms[0].time_to_tca == 5.0)
        .expect("corpus has an event starting at 5");
    let result = rollout(&model, &event.cdms[..1], 50, 30, 3)?;

    let mut lengths: Vec<usize> = result.trajectories.iter().map(|t| t.cdms.len()).collect();
    lengths.sort_unstable();
    println!("termination: {}", result.termination().as_str());
    println!("steps to TCA over 50 samples: min {} median {} max {}", lengths[0], lengths[25], lengths[49]);

    let labels: Vec<String> = DEFAULT_QUANTILES.iter().map(|&q| quantile_label(q)).collect();
    println!("step,n_alive,time_to_tca mean,{}", labels.join(","));
    for step in &result.steps {
        let row = &summarize(&step.distribution, &model.schema)[0];
        let qs: Vec<String> = row.quantiles.iter().map(|q| format!("{q:.3}")).collect();
        println!("{},{},{:.3},{}", step.step, step.n_alive, row.mean, qs.join(","));
    }
    Ok(())
}
