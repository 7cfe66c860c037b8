//! Lagged feature windows and chronological splitting.

use chrono::NaiveDate;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::station::{contiguous_blocks, DailyRecord};

pub const DEFAULT_LAG_DAYS: usize = 140;
pub const DEFAULT_HORIZON_DAYS: usize = 35;
pub const DEFAULT_N_PARAMS: usize = 2;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LagConfig {
    pub lag_days: usize,
    pub horizon_days: usize,
    /// 1 = soil temperature only, 2 = temperature then moisture.
    pub n_params: usize,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self { lag_days: DEFAULT_LAG_DAYS, horizon_days: DEFAULT_HORIZON_DAYS, n_params: DEFAULT_N_PARAMS }
    }
}

impl LagConfig {
    pub fn width(&self) -> usize {
        self.n_params * self.lag_days
    }

    /// Shortest series that yields one sample.
    pub fn min_len(&self) -> usize {
        self.lag_days + self.horizon_days
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag_days == 0 || self.horizon_days == 0 {
            return Err(DataError::InvalidParameter("lag_days and horizon_days must be >= 1".into()));
        }
        if !(1..=2).contains(&self.n_params) {
            return Err(DataError::InvalidParameter(format!("n_params must be 1 or 2, got {}", self.n_params)));
        }
        Ok(())
    }
}

/// Samples × features matrix with one forecast-target date per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub sample_dates: Vec<NaiveDate>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, sample_dates: Vec<NaiveDate>, feature_names: Vec<String>) -> Result<Self> {
        if values.nrows() != sample_dates.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} rows but {} dates",
                values.nrows(),
                sample_dates.len()
            )));
        }
        if values.ncols() != feature_names.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} columns but {} names",
                values.ncols(),
                feature_names.len()
            )));
        }
        Ok(Self { values, sample_dates, feature_names })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.slice(s![range.clone(), ..]).to_owned(),
            sample_dates: self.sample_dates[range].to_vec(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(ndarray::Axis(0), rows),
            sample_dates: rows.iter().map(|&r| self.sample_dates[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Enumerates lag windows over parallel parameter series.
///
/// Sample `s` ends its window at index `t = s + lag - 1` and targets index
/// `t + horizon`; its row is parameter 0's window (oldest first), then
/// parameter 1's window, and so on.
pub fn lag_windows(params: &[&[f64]], target: &[f64], lag: usize, horizon: usize) -> (Array2<f64>, Vec<f64>) {
    let len = target.len();
    let n = (len + 1).saturating_sub(lag + horizon);
    let mut x = Array2::zeros((n, params.len() * lag));
    let mut y = Vec::with_capacity(n);
    for s in 0..n {
        let mut row = x.row_mut(s);
        for (p, series) in params.iter().enumerate() {
            for j in 0..lag {
                row[p * lag + j] = series[s + j];
            }
        }
        y.push(target[s + lag - 1 + horizon]);
    }
    (x, y)
}

fn feature_names(cfg: &LagConfig) -> Vec<String> {
    let prefixes = ["soil_temperature", "soil_moisture"];
    prefixes[..cfg.n_params]
        .iter()
        .flat_map(|p| (0..cfg.lag_days).rev().map(move |back| format!("{p}_t-{back}")))
        .collect()
}

/// Builds the lag matrix of a single gap-free daily series.
pub fn build_lag_matrix(records: &[DailyRecord], cfg: &LagConfig) -> Result<(FeatureMatrix, Vec<f64>)> {
    cfg.validate()?;
    for pair in records.windows(2) {
        if pair[1].date.signed_duration_since(pair[0].date).num_days() != 1 {
            return Err(DataError::DateGap { before: pair[0].date, after: pair[1].date });
        }
    }
    if records.len() < cfg.min_len() {
        return Err(DataError::SeriesTooShort { len: records.len(), needed: cfg.min_len() });
    }
    let temp: Vec<f64> = records.iter().map(|r| r.soil_temperature).collect();
    let moist: Vec<f64> = records.iter().map(|r| r.soil_moisture).collect();
    let target: Vec<f64> = records.iter().map(|r| r.target).collect();
    let params: Vec<&[f64]> = [temp.as_slice(), moist.as_slice()][..cfg.n_params].to_vec();
    let (x, y) = lag_windows(&params, &target, cfg.lag_days, cfg.horizon_days);
    let offset = cfg.lag_days - 1 + cfg.horizon_days;
    let dates = (0..y.len()).map(|s| records[s + offset].date).collect();
    let fm = FeatureMatrix::new(x, dates, feature_names(cfg))?;
    Ok((fm, y))
}

/// Lags every contiguous block independently and stacks the results.
///
/// Blocks shorter than `lag + horizon` contribute nothing; it is an error only
/// when no block is long enough.
pub fn build_lag_matrix_blocks(records: &[DailyRecord], cfg: &LagConfig) -> Result<(FeatureMatrix, Vec<f64>)> {
    cfg.validate()?;
    let mut rows: Vec<Array2<f64>> = Vec::new();
    let mut dates = Vec::new();
    let mut y = Vec::new();
    for block in contiguous_blocks(records) {
        if block.len() < cfg.min_len() {
            log::debug!("skipping {}-day block starting {}", block.len(), block[0].date);
            continue;
        }
        let (fm, ty) = build_lag_matrix(block, cfg)?;
        rows.push(fm.values);
        dates.extend(fm.sample_dates);
        y.extend(ty);
    }
    if rows.is_empty() {
        let longest = contiguous_blocks(records).iter().map(|b| b.len()).max().unwrap_or(0);
        return Err(DataError::SeriesTooShort { len: longest, needed: cfg.min_len() });
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let values = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
    Ok((FeatureMatrix::new(values, dates, feature_names(cfg))?, y))
}

pub type Split = (FeatureMatrix, Vec<f64>);

/// First `floor(train_fraction · N)` rows train, the rest test. No shuffling.
pub fn chronological_split(x: &FeatureMatrix, y: &[f64], train_fraction: f64) -> Result<(Split, Split)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidParameter(format!("train_fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = x.n_samples();
    if y.len() != n {
        return Err(DataError::ShapeMismatch(format!("{n} rows but {} targets", y.len())));
    }
    let n_train = split_point(n, train_fraction);
    if n_train == 0 || n_train == n {
        return Err(DataError::Empty("one side of the train/test split"));
    }
    Ok((
        (x.slice_rows(0..n_train), y[..n_train].to_vec()),
        (x.slice_rows(n_train..n), y[n_train..].to_vec()),
    ))
}

pub fn split_point(n: usize, train_fraction: f64) -> usize {
    (train_fraction * n as f64).floor() as usize
}
