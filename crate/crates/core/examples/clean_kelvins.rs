//! Clean a Kelvins-format CSV and report what each stage removed.
//!
//! `cargo run --example clean_kelvins -- [train_data.csv] [out.cdmdata]`
//!
//! Without a path, a synthetic CSV with known defects is generated and the
//! counts are checked against the generator's own tally.

use std::path::Path;

use cdm_lstm::data::load_kelvins;
use cdm_lstm::synthetic::kelvins_like_csv;
use cdm_lstm::FeatureSchema;

fn main() -> cdm_lstm::Result<()> {
    let schema = FeatureSchema::kelvins();
    let args: Vec<String> = std::env::args().skip(1).collect();

    let (dataset, report, expected) = match args.first() {
        Some(path) => {
            let file = std::io::BufReader::new(std::fs::File::open(path)?);
            let (d, r) = load_kelvins(file, &schema, false, 2)?;
            (d, r, None)
        }
        None => {
            let csv = kelvins_like_csv(300, 1);
            let (d, r) = load_kelvins(csv.text.as_bytes(), &schema, false, 2)?;
            (d, r, Some(csv))
        }
    };

    let c = &report.clean;
    println!("rows read            {:>8}", c.records_in);
    println!("dropped (missing)    {:>8}", c.dropped_missing);
    println!("dropped (sigma)      {:>8}", c.dropped_sigma);
    println!("CDMs kept            {:>8}", c.kept);
    println!("events               {:>8}", report.events);
    println!("events with >= 2     {:>8}  ({} CDMs)", report.events_kept, report.cdms_kept);

    if let Some(csv) = expected {
        assert_eq!(c.records_in, csv.rows);
        assert_eq!(c.dropped_missing, csv.dropped_missing);
        assert_eq!(c.dropped_sigma, csv.dropped_sigma);
        assert_eq!(report.events_kept, csv.kept_events);
        assert_eq!(report.cdms_kept, csv.kept_cdms);
        println!("counts match the generator");
    }
    if let Some(out) = args.get(1) {
        dataset.save(Path::new(out))?;
        println!("wrote {out}");
    }
    Ok(())
}
