//! Next-CDM prediction with Monte Carlo dropout.
//!
//! `cargo run --release --example mc_dropout_predict`

use cdm_lstm::data::split_train_test;
use cdm_lstm::inference::{summarize, summary_table};
use cdm_lstm::synthetic::{kinematic_corpus, KinematicConfig};
use cdm_lstm::{fit, predict_next, Model, TrainConfig};

fn main() -> cdm_lstm::Result<()> {
    let data = kinematic_corpus(&KinematicConfig::default(), 7)?;
    let split = split_train_test(data.events, 0.15, 7)?;
    let mut config = TrainConfig {
        epochs: 40,
        batch_size: 16,
        hidden: 32,
        ..Default::default()
    };
    config.adam.lr = 3e-3;
    let out = fit(&split, &data.schema, &config)?;
    let model = Model::new(data.schema.clone(), out.stats, out.params)?;

    let event = &split.test[0];
    let prefix = &event.cdms[..event.len() - 1];
    let dist = predict_next(&model, prefix, 50, 0)?;
    println!("event {}: {} observed CDMs, 50 samples", event.event_id, prefix.len());
    print!("{}", summary_table(&summarize(&dist, &model.schema), &dist.quantile_levels));

    let actual = &event.cdms[event.len() - 1].values;
    println!("actual next CDM: {actual:.3?}");

    // With dropout off every sample is the same network.
    let mut det = model.clone();
    det.params = det.params.with_dropout_rate(0.0)?;
    let flat = predict_next(&det, prefix, 50, 0)?;
    println!("dropout off: max std {}", flat.std.iter().fold(0.0f64, |a, &b| a.max(b)));
    Ok(())
}
