//! Train on a synthetic corpus with linear-plus-noise dynamics and compare
//! against the persistence baseline.
//!
//! `cargo run --release --example train_synthetic -- [epochs] [hidden] [lr]`

use std::time::Instant;

use cdm_lstm::data::split_train_test;
use cdm_lstm::evaluation::{compare, comparison_table, evaluate_model, persistence_baseline};
use cdm_lstm::synthetic::{kinematic_corpus, KinematicConfig};
use cdm_lstm::{fit, Model, TrainConfig};

fn main() -> cdm_lstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let hidden = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(3e-3);

    let data = kinematic_corpus(&KinematicConfig::default(), 7)?;
    let split = split_train_test(data.events, 0.15, 7)?;
    println!("{} train / {} test events", split.train.len(), split.test.len());

    let mut config = TrainConfig {
        epochs,
        batch_size: 16,
        seed: 7,
        hidden,
        ..Default::default()
    };
    config.adam.lr = lr;
    let start = Instant::now();
    let outcome = fit(&split, &data.schema, &config)?;
    let losses = outcome.history.losses();
    println!(
        "trained {epochs} epochs in {:.1}s: loss {:.4} -> {:.4}",
        start.elapsed().as_secs_f64(),
        losses[0],
        losses[losses.len() - 1]
    );

    let model = Model::new(data.schema.clone(), outcome.stats, outcome.params)?;
    let baseline = persistence_baseline(&split.test, &model.stats)?;
    let one = evaluate_model(&model, &split.test, 1, 0)?;
    let fifty = evaluate_model(&model, &split.test, 50, 0)?;
    print!("{}", comparison_table(&compare(&[baseline, one, fifty])?));
    Ok(())
}
