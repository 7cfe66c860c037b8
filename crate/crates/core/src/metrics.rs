//! Forecast series, unweighted voting ensembles and error metrics.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::station::csv_io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub dates: Vec<NaiveDate>,
    pub predicted: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

impl ForecastSeries {
    pub fn new(dates: Vec<NaiveDate>, predicted: Vec<f64>, truth: Option<Vec<f64>>) -> Result<Self> {
        if predicted.len() != dates.len() || truth.as_ref().is_some_and(|t| t.len() != dates.len()) {
            return Err(DataError::ShapeMismatch("forecast dates, predictions and truth differ in length".into()));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DataError::InvalidParameter("forecast dates must be strictly increasing".into()));
        }
        Ok(Self { dates, predicted, truth })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    fn pairs(&self) -> Result<impl Iterator<Item = (f64, f64)> + '_> {
        let truth = self.truth.as_ref().ok_or(DataError::MissingTruth)?;
        if truth.is_empty() {
            return Err(DataError::Empty("forecast"));
        }
        Ok(self.predicted.iter().copied().zip(truth.iter().copied()))
    }

    /// Keeps only the given dates, which must all be present.
    pub fn restrict_to(&self, dates: &[NaiveDate]) -> Result<ForecastSeries> {
        let mut idx = Vec::with_capacity(dates.len());
        for d in dates {
            idx.push(self.dates.binary_search(d).map_err(|_| DataError::DateAxisMismatch)?);
        }
        ForecastSeries::new(
            dates.to_vec(),
            idx.iter().map(|&i| self.predicted[i]).collect(),
            self.truth.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
        )
    }
}

/// Dates present in every series, ascending.
pub fn common_dates(series: &[&ForecastSeries]) -> Vec<NaiveDate> {
    let Some((first, rest)) = series.split_first() else { return Vec::new() };
    first.dates.iter().filter(|d| rest.iter().all(|s| s.dates.binary_search(d).is_ok())).copied().collect()
}

/// Per-date arithmetic mean of member predictions; truth from the first member.
pub fn average_ensemble(members: &[ForecastSeries]) -> Result<ForecastSeries> {
    let first = members.first().ok_or(DataError::Empty("ensemble members"))?;
    if members.iter().any(|m| m.dates != first.dates) {
        return Err(DataError::DateAxisMismatch);
    }
    let n = members.len() as f64;
    let predicted = (0..first.len()).map(|i| members.iter().map(|m| m.predicted[i]).sum::<f64>() / n).collect();
    Ok(ForecastSeries { dates: first.dates.clone(), predicted, truth: first.truth.clone() })
}

pub fn mae(f: &ForecastSeries) -> Result<f64> {
    let n = f.len() as f64;
    Ok(f.pairs()?.map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

pub fn rmse(f: &ForecastSeries) -> Result<f64> {
    let n = f.len() as f64;
    Ok((f.pairs()?.map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt())
}

/// `1 − SSE/SST` with SST about the truth mean.
pub fn r2(f: &ForecastSeries) -> Result<f64> {
    let truth = f.truth.as_ref().ok_or(DataError::MissingTruth)?;
    if truth.len() < 2 {
        return Err(DataError::InvalidParameter("R² needs at least two points".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(DataError::DegenerateTarget);
    }
    let sse: f64 = f.pairs()?.map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Aggregated measure `(RMSE + MAE) / 2 × (1 − R²)`; lower is better.
///
/// A negative R² pushes the score above the mean of the two errors.
pub fn agm(mae: f64, rmse: f64, r2: f64) -> f64 {
    (rmse + mae) / 2.0 * (1.0 - r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub agm: f64,
}

impl MetricsReport {
    pub fn from_forecast(model: impl Into<String>, f: &ForecastSeries) -> Result<Self> {
        let (mae, rmse, r2) = (mae(f)?, rmse(f)?, r2(f)?);
        Ok(Self { model: model.into(), mae, rmse, r2, agm: agm(mae, rmse, r2) })
    }

    pub const CSV_HEADER: [&'static str; 5] = ["model", "mae", "rmse", "r2", "agm"];

    pub fn csv_row(&self) -> [String; 5] {
        [self.model.clone(), self.mae.to_string(), self.rmse.to_string(), self.r2.to_string(), self.agm.to_string()]
    }
}

pub fn write_metrics_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(MetricsReport::CSV_HEADER).map_err(|e| csv_io(path, e))?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_io(path, e))).collect()
}

pub const FORECAST_HEADER: [&str; 3] = ["date", "predicted", "truth"];

pub fn write_forecast_csv(path: &Path, f: &ForecastSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(FORECAST_HEADER).map_err(|e| csv_io(path, e))?;
    for i in 0..f.len() {
        let truth = f.truth.as_ref().map(|t| t[i].to_string()).unwrap_or_default();
        w.write_record([f.dates[i].to_string(), f.predicted[i].to_string(), truth]).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_forecast_csv(path: &Path) -> Result<ForecastSeries> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let (mut dates, mut predicted, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    let mut has_truth = true;
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_io(path, e))?;
        let bad = |m: String| DataError::MalformedRow { path: path.to_path_buf(), line: i as u64 + 2, message: m };
        dates.push(NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?);
        predicted.push(row[1].parse::<f64>().map_err(|e| bad(e.to_string()))?);
        match row.get(2).filter(|s| !s.is_empty()) {
            Some(t) => truth.push(t.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            None => has_truth = false,
        }
    }
    ForecastSeries::new(dates, predicted, has_truth.then_some(truth))
}
