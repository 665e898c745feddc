//! Score a trained model against the persistence baseline at n = 1 and
//! n = 50 Monte Carlo samples.
//!
//! `cargo run --release --example evaluate_baseline`

use cdm_lstm::data::split_train_test;
use cdm_lstm::evaluation::{compare, comparison_table, evaluate_model, persistence_baseline};
use cdm_lstm::synthetic::{kinematic_corpus, KinematicConfig};
use cdm_lstm::{fit, Model, TrainConfig};

fn main() -> cdm_lstm::Result<()> {
    let data = kinematic_corpus(&KinematicConfig::default(), 7)?;
    let split = split_train_test(data.events, 0.15, 7)?;
    let mut config = TrainConfig {
        epochs: 60,
        batch_size: 16,
        hidden: 32,
        seed: 7,
        ..Default::default()
    };
    config.adam.lr = 3e-3;
    let out = fit(&split, &data.schema, &config)?;
    let model = Model::new(data.schema.clone(), out.stats, out.params)?;

    let reports = vec![
        persistence_baseline(&split.test, &model.stats)?,
        evaluate_model(&model, &split.test, 1, 0)?,
        evaluate_model(&model, &split.test, 50, 0)?,
    ];
    print!("{}", comparison_table(&compare(&reports)?));
    println!();
    print!("{}", reports[2].per_feature_table(&model.schema));
    Ok(())
}
