//! CDM ingestion: Kelvins CSV parsing, cleaning, event grouping, splits and
//! the cleaned-dataset file.

mod dataset;
mod events;
mod kelvins;
mod schema;

use std::io::Read;

pub use dataset::{Dataset, DATASET_MAGIC, DATASET_VERSION};
pub(crate) use dataset::{read_string, read_u32, read_u64};
pub use events::{filter_min_length, group_events, split_train_test, test_count, DatasetSplit, Event};
pub use kelvins::{
    clean, clean_with_report, parse_kelvins_csv, Cell, CdmRecord, CleanReport, ParseOptions,
    ParsedCsv, RawRecord, RowIssue,
};
pub use schema::{
    Feature, FeatureKind, FeatureSchema, KELVINS_DROPPED, KELVINS_SIGMA_LIMITS, KELVINS_WIDTH,
};

use crate::error::Result;

/// Counts from each stage of [`load_kelvins`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub skipped_rows: Vec<RowIssue>,
    pub clean: CleanReport,
    pub events: usize,
    pub events_kept: usize,
    pub cdms_kept: usize,
}

/// Parse, clean, group and length-filter a Kelvins CSV.
pub fn load_kelvins<R: Read>(
    source: R,
    schema: &FeatureSchema,
    skip_bad_rows: bool,
    min_len: usize,
) -> Result<(Dataset, PipelineReport)> {
    let opts = ParseOptions {
        id_column: schema.event_id_column().to_string(),
        skip_bad_rows,
    };
    let parsed = parse_kelvins_csv(source, &opts)?;
    let (records, clean) = clean_with_report(&parsed.records, schema)?;
    drop(parsed.records);
    let events = group_events(records);
    let n_events = events.len();
    let events = filter_min_length(events, min_len)?;
    let report = PipelineReport {
        skipped_rows: parsed.skipped,
        clean,
        events: n_events,
        events_kept: events.len(),
        cdms_kept: events.iter().map(Event::len).sum(),
    };
    Ok((
        Dataset {
            schema: schema.clone(),
            events,
        },
        report,
    ))
}
