//! Station soil readings: the daily record type and its CSV form.
//!
//! The CSV layout is fixed: a header `date,soil_temperature,soil_moisture,target`
//! followed by one row per calendar day, ISO-8601 dates and `.` decimals.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const STATION_HEADER: [&str; 4] = ["date", "soil_temperature", "soil_moisture", "target"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Pounds per acre.
    Yield,
    /// US dollars.
    Price,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Yield => f.write_str("yield"),
            TargetKind::Price => f.write_str("price"),
        }
    }
}

impl FromStr for TargetKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yield" => Ok(TargetKind::Yield),
            "price" => Ok(TargetKind::Price),
            other => Err(DataError::InvalidParameter(format!("unknown target kind `{other}`"))),
        }
    }
}

/// One calendar day of station soil readings plus the forecast target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// Degrees Celsius.
    pub soil_temperature: f64,
    /// Volumetric fraction.
    pub soil_moisture: f64,
    pub target: f64,
    pub target_kind: TargetKind,
}

impl DailyRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.soil_temperature.is_finite() {
            return Err("soil_temperature is not finite".into());
        }
        if !(self.soil_moisture.is_finite() && self.soil_moisture >= 0.0) {
            return Err(format!("soil_moisture must be >= 0, got {}", self.soil_moisture));
        }
        if !(self.target.is_finite() && self.target >= 0.0) {
            return Err(format!("target must be >= 0, got {}", self.target));
        }
        Ok(())
    }
}

/// Reads a station CSV, returning records sorted by date.
///
/// Fails on a missing file, a wrong header, an unparsable or invalid row
/// (reporting its line number) and on repeated dates.
pub fn load_station_csv(path: &Path, target_kind: TargetKind) -> Result<Vec<DailyRecord>> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);

    let malformed = |line: u64, message: String| DataError::MalformedRow { path: path.to_path_buf(), line, message };

    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != STATION_HEADER {
        return Err(malformed(1, format!("expected header `{}`", STATION_HEADER.join(","))));
    }

    let mut by_date: BTreeMap<NaiveDate, DailyRecord> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("bad date `{}`: {e}", &row[0])))?;
        let number = |idx: usize| -> Result<f64> {
            row[idx]
                .parse::<f64>()
                .map_err(|e| malformed(line, format!("bad {} `{}`: {e}", STATION_HEADER[idx], &row[idx])))
        };
        let record = DailyRecord {
            date,
            soil_temperature: number(1)?,
            soil_moisture: number(2)?,
            target: number(3)?,
            target_kind,
        };
        record.validate().map_err(|m| malformed(line, m))?;
        if by_date.insert(date, record).is_some() {
            return Err(DataError::DuplicateDate(date));
        }
    }
    Ok(by_date.into_values().collect())
}

pub fn write_station_csv(path: &Path, records: &[DailyRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    writer.write_record(STATION_HEADER).map_err(|e| csv_io(path, e))?;
    for r in records {
        writer
            .write_record([
                r.date.format("%Y-%m-%d").to_string(),
                r.soil_temperature.to_string(),
                r.soil_moisture.to_string(),
                r.target.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| DataError::io(path, e))
}

pub(crate) fn csv_io(path: &Path, err: csv::Error) -> DataError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => DataError::io(path, e),
        other => DataError::InvalidParameter(format!("{}: {other:?}", path.display())),
    }
}

/// Splits date-sorted records into maximal runs of consecutive days.
pub fn contiguous_blocks(records: &[DailyRecord]) -> Vec<&[DailyRecord]> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..records.len() {
        if records[i].date.signed_duration_since(records[i - 1].date).num_days() != 1 {
            blocks.push(&records[start..i]);
            start = i;
        }
    }
    if !records.is_empty() {
        blocks.push(&records[start..]);
    }
    blocks
}
