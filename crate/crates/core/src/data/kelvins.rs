//! Kelvins-format CSV ingestion and cleaning.

use std::io::Read;
use std::sync::Arc;

use super::schema::FeatureSchema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Missing,
    /// Non-numeric text, kept verbatim.
    Token(String),
}

impl Cell {
    pub fn parse(text: &str) -> Self {
        let t = text.trim();
        if t.is_empty() || t == "NaN" || t == "nan" {
            return Cell::Missing;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Number(v),
            Ok(_) => Cell::Missing,
            Err(_) => Cell::Token(t.to_string()),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }
}

/// One source row with every column retained.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub event_id: String,
    /// 1-based line in the source file.
    pub line: u64,
    header: Arc<[String]>,
    cells: Vec<Cell>,
}

impl RawRecord {
    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn get(&self, column: &str) -> Option<&Cell> {
        self.header
            .iter()
            .position(|h| h == column)
            .map(|i| &self.cells[i])
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub id_column: String,
    /// Skip rows with the wrong column count instead of failing.
    pub skip_bad_rows: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            id_column: "event_id".into(),
            skip_bad_rows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParsedCsv {
    pub header: Arc<[String]>,
    pub records: Vec<RawRecord>,
    pub skipped: Vec<RowIssue>,
}

pub fn parse_kelvins_csv<R: Read>(source: R, options: &ParseOptions) -> Result<ParsedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut rows = reader.records();

    let header: Arc<[String]> = match rows.next() {
        Some(h) => h?.iter().map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Format("missing header row".into())),
    };
    if header.iter().all(String::is_empty) {
        return Err(Error::Format("missing header row".into()));
    }
    let id_idx = header
        .iter()
        .position(|h| *h == options.id_column)
        .ok_or_else(|| {
            Error::Format(format!("header has no {:?} column", options.id_column))
        })?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            let message = format!("expected {} columns, found {}", header.len(), row.len());
            if options.skip_bad_rows {
                skipped.push(RowIssue { line, message });
                continue;
            }
            return Err(Error::Row { line, message });
        }
        let cells: Vec<Cell> = row.iter().map(Cell::parse).collect();
        records.push(RawRecord {
            event_id: row[id_idx].trim().to_string(),
            line,
            header: Arc::clone(&header),
            cells,
        });
    }
    Ok(ParsedCsv {
        header,
        records,
        skipped,
    })
}

/// One cleaned CDM projected onto schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct CdmRecord {
    pub event_id: String,
    pub values: Vec<f64>,
    pub time_to_tca: f64,
}

impl CdmRecord {
    pub fn new(event_id: impl Into<String>, values: Vec<f64>, schema: &FeatureSchema) -> Result<Self> {
        if values.len() != schema.width() {
            return Err(Error::Schema(format!(
                "record has {} values, schema width is {}",
                values.len(),
                schema.width()
            )));
        }
        let time_to_tca = values[schema.time_index()];
        Ok(Self {
            event_id: event_id.into(),
            values,
            time_to_tca,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub records_in: usize,
    pub dropped_missing: usize,
    pub dropped_sigma: usize,
    pub kept: usize,
}

struct ColumnMap {
    features: Vec<usize>,
    sigmas: Vec<(usize, f64)>,
}

fn resolve(header: &[String], schema: &FeatureSchema) -> Result<ColumnMap> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let features = schema
        .names()
        .map(|n| {
            find(n).ok_or_else(|| Error::Schema(format!("feature {n:?} is absent from the source columns")))
        })
        .collect::<Result<_>>()?;
    let sigmas = schema
        .sigma_limits()
        .iter()
        .map(|(n, limit)| {
            find(n)
                .map(|i| (i, *limit))
                .ok_or_else(|| Error::Schema(format!("sigma column {n:?} is absent from the source columns")))
        })
        .collect::<Result<_>>()?;
    Ok(ColumnMap { features, sigmas })
}

pub fn clean(records: &[RawRecord], schema: &FeatureSchema) -> Result<Vec<CdmRecord>> {
    clean_with_report(records, schema).map(|(r, _)| r)
}

/// Drops records with a missing schema feature, then records with any sigma
/// column strictly above its limit, and projects survivors onto the schema.
///
/// Non-numeric text in a schema feature counts as missing.
pub fn clean_with_report(
    records: &[RawRecord],
    schema: &FeatureSchema,
) -> Result<(Vec<CdmRecord>, CleanReport)> {
    let mut report = CleanReport {
        records_in: records.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(records.len());
    let mut cached: Option<(Arc<[String]>, ColumnMap)> = None;
    let time_idx = schema.time_index();

    for rec in records {
        let fresh = !matches!(&cached, Some((h, _)) if Arc::ptr_eq(h, &rec.header));
        if fresh {
            cached = Some((Arc::clone(&rec.header), resolve(&rec.header, schema)?));
        }
        let map = &cached.as_ref().expect("column map resolved").1;

        let values: Option<Vec<f64>> = map
            .features
            .iter()
            .map(|&i| rec.cells[i].as_number())
            .collect();
        let Some(values) = values else {
            report.dropped_missing += 1;
            continue;
        };
        let over_limit = map
            .sigmas
            .iter()
            .any(|&(i, limit)| rec.cells[i].as_number().is_some_and(|v| v > limit));
        if over_limit {
            report.dropped_sigma += 1;
            continue;
        }
        out.push(CdmRecord {
            event_id: rec.event_id.clone(),
            time_to_tca: values[time_idx],
            values,
        });
    }
    report.kept = out.len();
    Ok((out, report))
}
