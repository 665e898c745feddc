//! Fit the normalizer on training events and build padded mini-batches.
//!
//! `cargo run --example normalize_and_batch`

use cdm_lstm::data::{load_kelvins, split_train_test};
use cdm_lstm::preprocess::{fit_normalizer, make_batches};
use cdm_lstm::synthetic::kelvins_like_csv;
use cdm_lstm::training::training_pairs;
use cdm_lstm::FeatureSchema;

fn main() -> cdm_lstm::Result<()> {
    let schema = FeatureSchema::kelvins();
    let csv = kelvins_like_csv(200, 3);
    let (data, _) = load_kelvins(csv.text.as_bytes(), &schema, false, 2)?;
    let split = split_train_test(data.events, 0.15, 0)?;
    println!("{} train / {} test events", split.train.len(), split.test.len());

    // Statistics come from the training events only.
    let stats = fit_normalizer(&split.train, &schema)?;
    for name in ["time_to_tca", "miss_distance", "t_sigma_r"] {
        let j = schema.index_of(name).expect("Kelvins feature");
        println!("{name:>14}: mean {:>9.4}  std {:>8.4}", stats.mean[j], stats.std[j]);
    }

    let pairs = training_pairs(&split.train, &stats)?;
    let batches = make_batches(&pairs, 32, 1)?;
    for (i, b) in batches.iter().take(3).enumerate() {
        println!(
            "batch {i}: {} sequences, padded to {} steps, {} valid steps",
            b.batch_size(),
            b.max_len(),
            b.valid_steps()
        );
    }

    let row = &split.test[0].cdms[0].values;
    let back = stats.inverse_transform(&stats.transform(row));
    let err = row.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip max abs error: {err:.2e}");
    Ok(())
}
