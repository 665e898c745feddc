//! Write a rollout file and turn it into per-feature band tables, as the
//! `rollout` and `export-plot` commands do.
//!
//! `cargo run --example export_plot -- [out_dir]`

use std::path::PathBuf;

use cdm_lstm::cli::RolloutFile;
use cdm_lstm::net::{init_params, NetConfig};
use cdm_lstm::preprocess::fit_normalizer;
use cdm_lstm::synthetic::countdown_corpus;
use cdm_lstm::{rollout, Model};

fn main() -> cdm_lstm::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cdm-lstm-bands"));
    let data = countdown_corpus(30, 2)?;
    let stats = fit_normalizer(&data.events, &data.schema)?;
    let params = init_params(NetConfig::new(data.schema.width(), 16, 2, 0.2), 3)?;
    let model = Model::new(data.schema.clone(), stats, params)?;

    let result = rollout(&model, &data.events[0].cdms[..2], 20, 6, 0)?;
    let file = RolloutFile::new(&model.schema, &model.stats, &result, 6, 0);
    std::fs::create_dir_all(&out)?;
    file.save(&out.join("rollout.txt"))?;

    let reread = RolloutFile::load(&out.join("rollout.txt"))?;
    assert_eq!(reread, file);
    for (feature, table) in reread.band_tables()? {
        let path = out.join(format!("{feature}.csv"));
        std::fs::write(&path, &table)?;
        println!("{} ({} steps)", path.display(), table.lines().count() - 1);
    }
    Ok(())
}
