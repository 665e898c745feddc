//! Save a model, load it back and check that inference is unchanged.
//!
//! `cargo run --example checkpoint_roundtrip`

use cdm_lstm::checkpoint::Checkpoint;
use cdm_lstm::net::{init_params, NetConfig};
use cdm_lstm::preprocess::fit_normalizer;
use cdm_lstm::synthetic::{kinematic_corpus, KinematicConfig};
use cdm_lstm::{predict_next, Model};

fn main() -> cdm_lstm::Result<()> {
    let data = kinematic_corpus(&KinematicConfig { events: 20, ..Default::default() }, 1)?;
    let stats = fit_normalizer(&data.events, &data.schema)?;
    let params = init_params(NetConfig::new(data.schema.width(), 32, 2, 0.2), 5)?;
    let model = Model::new(data.schema.clone(), stats, params)?;

    let ck = Checkpoint {
        model: model.clone(),
        seed: 5,
        epoch: 0,
        split_seed: 0,
        test_fraction: 0.15,
    };
    let dir = std::env::temp_dir().join("cdm-lstm-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    ck.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!(
        "{} bytes, {} parameters stored as f32",
        std::fs::metadata(&path)?.len(),
        loaded.model.params.param_count()
    );

    let prefix = &data.events[0].cdms[..2];
    let original = predict_next(&model, prefix, 20, 1)?;
    let rounded = Model {
        params: model.params.round_to_f32(),
        ..model.clone()
    };
    let expected = predict_next(&rounded, prefix, 20, 1)?;
    let got = predict_next(&loaded.model, prefix, 20, 1)?;
    println!("identical to the f32-rounded model: {}", got == expected);
    let drift = original
        .mean
        .iter()
        .zip(&got.mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max change from f64 weights: {drift:.2e}");
    Ok(())
}
