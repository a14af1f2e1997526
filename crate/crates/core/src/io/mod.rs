//! CSV schemas, configuration and report envelopes.
//!
//! Every input table has a fixed header. Parsing reports the offending line
//! and column, and every emitted table parses back to identical records.

mod config;

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ConfigError, CounterfactualSettings, EstimateSettings, GroupElasticity, InputPaths, InstrumentConfig, PipelineConfig,
    PolicySettings, TightnessSettings, ZoneSettings,
};

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{table}: expected header [{expected}], found [{found}]")]
    Header { table: &'static str, expected: String, found: String },
    #[error("{table}: line {line}, column `{column}`: {message}")]
    Field { table: &'static str, line: u64, column: String, message: String },
    #[error("{table}: line {line}: {message}")]
    Row { table: &'static str, line: u64, message: String },
    #[error("{table}: {source}")]
    Csv {
        table: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A table with an exact header and per-row value checks.
pub trait CsvSchema: Serialize + DeserializeOwned {
    const TABLE: &'static str;
    const HEADERS: &'static [&'static str];

    /// Returns the offending column and a message.
    fn check(&self) -> Result<(), (&'static str, String)> {
        Ok(())
    }
}

fn finite_nonneg(column: &'static str, v: f64) -> Result<(), (&'static str, String)> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err((column, format!("must be a finite non-negative number, got {v}")))
    }
}

fn occupation_code(column: &'static str, code: &str) -> Result<(), (&'static str, String)> {
    if code.len() == 5 && code.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err((column, format!("occupation must be a 5-digit code, got `{code}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: u64,
    pub year: i32,
    pub occupation: String,
    pub region: u64,
    pub employment: f64,
    pub wage_daily: f64,
}

impl CsvSchema for FirmRecord {
    const TABLE: &'static str = "firm_panel.csv";
    const HEADERS: &'static [&'static str] = &["firm_id", "year", "occupation", "region", "employment", "wage_daily"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        occupation_code("occupation", &self.occupation)?;
        finite_nonneg("employment", self.employment)?;
        if !(self.wage_daily.is_finite() && self.wage_daily > 0.0) {
            return Err(("wage_daily", format!("must be positive, got {}", self.wage_daily)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub occupation: String,
    pub region: u64,
    pub year: i32,
    pub registered_vacancies: f64,
    pub job_seekers: f64,
}

impl CsvSchema for MarketRecord {
    const TABLE: &'static str = "markets.csv";
    const HEADERS: &'static [&'static str] = &["occupation", "region", "year", "registered_vacancies", "job_seekers"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        occupation_code("occupation", &self.occupation)?;
        finite_nonneg("registered_vacancies", self.registered_vacancies)?;
        finite_nonneg("job_seekers", self.job_seekers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationShareRecord {
    pub year: i32,
    /// `helper`, `professional` or `specialist_expert`.
    pub level: String,
    pub share: f64,
}

impl CsvSchema for NotificationShareRecord {
    const TABLE: &'static str = "notification_shares.csv";
    const HEADERS: &'static [&'static str] = &["year", "level", "share"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        if !(self.share > 0.0 && self.share <= 1.0) {
            return Err(("share", format!("must lie in (0, 1], got {}", self.share)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from_occupation: String,
    pub to_occupation: String,
    pub probability: f64,
}

impl CsvSchema for TransitionRecord {
    const TABLE: &'static str = "transitions.csv";
    const HEADERS: &'static [&'static str] = &["from_occupation", "to_occupation", "probability"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        occupation_code("from_occupation", &self.from_occupation)?;
        occupation_code("to_occupation", &self.to_occupation)?;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(("probability", format!("must lie in [0, 1], got {}", self.probability)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEmploymentRecord {
    pub occupation: String,
    pub employment: f64,
}

impl CsvSchema for OccupationEmploymentRecord {
    const TABLE: &'static str = "occupation_employment.csv";
    const HEADERS: &'static [&'static str] = &["occupation", "employment"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        occupation_code("occupation", &self.occupation)?;
        finite_nonneg("employment", self.employment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutingRecord {
    pub from_region: u64,
    pub to_region: u64,
    pub workers: f64,
}

impl CsvSchema for CommutingRecord {
    const TABLE: &'static str = "commuting.csv";
    const HEADERS: &'static [&'static str] = &["from_region", "to_region", "workers"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        finite_nonneg("workers", self.workers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaborForceRecord {
    pub region: u64,
    pub labor_force: f64,
}

impl CsvSchema for LaborForceRecord {
    const TABLE: &'static str = "labor_force.csv";
    const HEADERS: &'static [&'static str] = &["region", "labor_force"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        if !(self.labor_force.is_finite() && self.labor_force > 0.0) {
            return Err(("labor_force", format!("must be positive, got {}", self.labor_force)));
        }
        Ok(())
    }
}

/// Undirected adjacency between two regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyRecord {
    pub region_a: u64,
    pub region_b: u64,
}

impl CsvSchema for AdjacencyRecord {
    const TABLE: &'static str = "adjacency.csv";
    const HEADERS: &'static [&'static str] = &["region_a", "region_b"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneAssignmentRecord {
    pub region: u64,
    pub zone: u64,
}

impl CsvSchema for ZoneAssignmentRecord {
    const TABLE: &'static str = "zones.csv";
    const HEADERS: &'static [&'static str] = &["region", "zone"];
}

/// Market cell after notification and flow adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedMarketRecord {
    pub occupation: String,
    pub region: u64,
    pub year: i32,
    pub registered_vacancies: f64,
    pub share_used: f64,
    pub total_vacancies: f64,
    pub job_seekers: f64,
    pub adjusted_vacancies: f64,
    pub adjusted_job_seekers: f64,
    /// Empty when there are no job seekers.
    pub tightness: Option<f64>,
}

impl CsvSchema for AdjustedMarketRecord {
    const TABLE: &'static str = "market_tightness.csv";
    const HEADERS: &'static [&'static str] = &[
        "occupation",
        "region",
        "year",
        "registered_vacancies",
        "share_used",
        "total_vacancies",
        "job_seekers",
        "adjusted_vacancies",
        "adjusted_job_seekers",
        "tightness",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmTightnessRecord {
    pub firm_id: u64,
    pub year: i32,
    pub region: u64,
    pub employment: f64,
    pub wage: f64,
    pub tightness: Option<f64>,
    /// Employment share on occupations without a defined market ratio.
    pub dropped_share: f64,
}

impl CsvSchema for FirmTightnessRecord {
    const TABLE: &'static str = "firm_tightness.csv";
    const HEADERS: &'static [&'static str] =
        &["firm_id", "year", "region", "employment", "wage", "tightness", "dropped_share"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentRecord {
    pub firm_id: u64,
    pub year: i32,
    pub base_year: i32,
    pub z_w: Option<f64>,
    pub z_v: Option<f64>,
    pub z_u: Option<f64>,
}

impl CsvSchema for InstrumentRecord {
    const TABLE: &'static str = "instruments.csv";
    const HEADERS: &'static [&'static str] = &["firm_id", "year", "base_year", "z_w", "z_v", "z_u"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub year: i32,
    pub group: String,
    pub employment: f64,
    pub tightness: f64,
}

impl CsvSchema for SeriesRecord {
    const TABLE: &'static str = "series.csv";
    const HEADERS: &'static [&'static str] = &["year", "group", "employment", "tightness"];
    fn check(&self) -> Result<(), (&'static str, String)> {
        finite_nonneg("employment", self.employment)?;
        if !(self.tightness.is_finite() && self.tightness > 0.0) {
            return Err(("tightness", format!("must be positive, got {}", self.tightness)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub year: i32,
    pub factual: f64,
    pub counterfactual: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl CsvSchema for CounterfactualRecord {
    const TABLE: &'static str = "counterfactual.csv";
    const HEADERS: &'static [&'static str] = &["year", "factual", "counterfactual", "ci_lower", "ci_upper"];
}

/// Reads a table, checking the header exactly and every row's values.
pub fn read_csv<T: CsvSchema, R: Read>(reader: R) -> Result<Vec<T>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|source| IoError::Csv { table: T::TABLE, source })?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != T::HEADERS {
        return Err(IoError::Header {
            table: T::TABLE,
            expected: T::HEADERS.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| csv_error::<T>(e, &headers))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record.deserialize(Some(&headers)).map_err(|e| csv_error::<T>(e, &headers))?;
        if let Err((column, message)) = row.check() {
            return Err(IoError::Field { table: T::TABLE, line, column: column.to_string(), message });
        }
        out.push(row);
    }
    Ok(out)
}

fn csv_error<T: CsvSchema>(e: csv::Error, headers: &csv::StringRecord) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err
                .field()
                .and_then(|f| headers.get(f as usize))
                .unwrap_or("?")
                .to_string();
            IoError::Field { table: T::TABLE, line, column, message: err.kind().to_string() }
        }
        csv::ErrorKind::UnequalLengths { len, expected_len, .. } => IoError::Row {
            table: T::TABLE,
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        _ => IoError::Csv { table: T::TABLE, source: e },
    }
}

pub fn parse_csv<T: CsvSchema>(text: &str) -> Result<Vec<T>, IoError> {
    read_csv(text.as_bytes())
}

pub fn write_csv<T: CsvSchema, W: Write>(writer: W, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(T::HEADERS).map_err(|source| IoError::Csv { table: T::TABLE, source })?;
    for row in rows {
        w.serialize(row).map_err(|source| IoError::Csv { table: T::TABLE, source })?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<T: CsvSchema>(rows: &[T]) -> Result<String, IoError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// JSON envelope carried by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub body: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(kind: &str, body: T) -> Self {
        Self { schema_version: SCHEMA_VERSION, kind: kind.to_string(), body }
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
