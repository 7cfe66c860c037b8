//! Preprocessed artifacts on disk and the model tensors assembled from them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{s, Array2, Array3};
use strawcast_core::histogram::{build_cube, flatten_cube, DailyHistograms};
use strawcast_core::Band;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const SPLIT_FILE: &str = "split.csv";
pub const STATION_FILE: &str = "station_features.csv";
pub const HISTOGRAM_FILE: &str = "histograms.csv";
pub const HISTOGRAM_CONFIG_FILE: &str = "histogram_config.json";
pub const TRANSFORM_FILE: &str = "station_transform.json";
pub const IMPORTANCE_FILE: &str = "importance.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Test,
}

impl Part {
    fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Test => "test",
        }
    }
}

/// Sample target dates common to both branches, in order, with the split.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit {
    pub dates: Vec<NaiveDate>,
    pub targets: Vec<f64>,
    /// The first `n_train` samples train; the rest test.
    pub n_train: usize,
}

impl SampleSplit {
    pub fn part(&self, part: Part) -> (&[NaiveDate], &[f64]) {
        match part {
            Part::Train => (&self.dates[..self.n_train], &self.targets[..self.n_train]),
            Part::Test => (&self.dates[self.n_train..], &self.targets[self.n_train..]),
        }
    }
}

/// Station features after scaling, PCA and output scaling; one row per lag sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StationFeatures {
    pub dates: Vec<NaiveDate>,
    pub targets: Vec<f64>,
    pub values: Array2<f64>,
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub(crate) fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingUpstream { path: path.to_path_buf(), producer })
    }
}

fn parse_date(path: &Path, line: usize, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| CliError::Data(format!("{}:{line}: bad date `{s}`: {e}", path.display())))
}

fn parse_num(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|e| CliError::Data(format!("{}:{line}: bad number `{s}`: {e}", path.display())))
}

pub fn write_split(path: &Path, split: &SampleSplit) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["date", "split", "target"]).map_err(|e| csv_err(path, e))?;
    for (i, (d, t)) in split.dates.iter().zip(&split.targets).enumerate() {
        let part = if i < split.n_train { Part::Train } else { Part::Test };
        w.write_record([d.to_string(), part.as_str().to_string(), t.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_split(path: &Path) -> Result<SampleSplit> {
    require(path, "preprocess")?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let (mut dates, mut targets, mut n_train) = (Vec::new(), Vec::new(), 0);
    let mut seen_test = false;
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        dates.push(parse_date(path, line, &row[0])?);
        match &row[1] {
            "train" if !seen_test => n_train += 1,
            "test" => seen_test = true,
            other => return Err(CliError::Data(format!("{}:{line}: unexpected split `{other}`", path.display()))),
        }
        targets.push(parse_num(path, line, &row[2])?);
    }
    Ok(SampleSplit { dates, targets, n_train })
}

pub fn write_station_features(path: &Path, f: &StationFeatures) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["date".to_string(), "target".to_string()];
    header.extend((0..f.values.ncols()).map(|j| format!("pc{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in f.values.rows().into_iter().enumerate() {
        let mut rec = vec![f.dates[i].to_string(), f.targets[i].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_station_features(path: &Path) -> Result<StationFeatures> {
    require(path, "preprocess")?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(2);
    let (mut dates, mut targets, mut flat) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        dates.push(parse_date(path, i + 2, &row[0])?);
        targets.push(parse_num(path, i + 2, &row[1])?);
        for v in row.iter().skip(2) {
            flat.push(parse_num(path, i + 2, v)?);
        }
    }
    let values = Array2::from_shape_vec((dates.len(), width), flat)
        .map_err(|e| CliError::Data(format!("{}: ragged rows: {e}", path.display())))?;
    Ok(StationFeatures { dates, targets, values })
}

pub fn write_histograms(path: &Path, hist: &DailyHistograms) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["date".to_string()];
    for band in Band::ALL {
        header.extend((0..hist.n_bins).map(|k| format!("{band}_b{k}")));
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for day in hist.complete_days() {
        let mut rec = vec![day.to_string()];
        for band in Band::ALL {
            rec.extend(hist.bands[&band][&day].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_histograms(path: &Path) -> Result<DailyHistograms> {
    require(path, "preprocess")?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(1);
    let n_bins = width / Band::ALL.len();
    if n_bins == 0 || width % Band::ALL.len() != 0 {
        return Err(CliError::Data(format!("{}: {width} histogram columns", path.display())));
    }
    let mut hist = DailyHistograms::new(n_bins);
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let date = parse_date(path, i + 2, &row[0])?;
        let values: Vec<f64> = row.iter().skip(1).map(|v| parse_num(path, i + 2, v)).collect::<Result<_>>()?;
        for band in Band::ALL {
            let k = band.index() * n_bins;
            hist.insert(band, date, values[k..k + n_bins].to_vec());
        }
    }
    Ok(hist)
}

/// Everything `preprocess` leaves behind that training and forecasting read.
pub struct Prepared {
    pub split: SampleSplit,
    pub station: StationFeatures,
    pub histograms: DailyHistograms,
    row_of: BTreeMap<NaiveDate, usize>,
}

impl Prepared {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let dir = cfg.features_dir();
        let split = read_split(&dir.join(SPLIT_FILE))?;
        let station = read_station_features(&dir.join(STATION_FILE))?;
        let histograms = read_histograms(&dir.join(HISTOGRAM_FILE))?;
        let row_of = station.dates.iter().enumerate().map(|(i, &d)| (d, i)).collect();
        Ok(Self { split, station, histograms, row_of })
    }

    /// `(samples, station_window, pca width)`: the window of feature rows ending at each date.
    pub fn station_tensor(&self, dates: &[NaiveDate], window: usize) -> Result<Array3<f64>> {
        let width = self.station.values.ncols();
        let mut x = Array3::zeros((dates.len(), window, width));
        for (b, d) in dates.iter().enumerate() {
            let end = *self
                .row_of
                .get(d)
                .ok_or_else(|| CliError::Data(format!("no station features for {d}; rerun `strawcast preprocess`")))?;
            if end + 1 < window {
                return Err(CliError::Data(format!("{d} lacks {window} rows of station history")));
            }
            x.slice_mut(s![b, .., ..]).assign(&self.station.values.slice(s![end + 1 - window..=end, ..]));
        }
        Ok(x)
    }

    /// `(samples, window, bands·bins)`: flattened cubes ending `horizon` days before each date.
    pub fn satellite_tensor(&self, dates: &[NaiveDate], window: usize, horizon: usize) -> Result<Array3<f64>> {
        let width = self.histograms.n_bins * Band::ALL.len();
        let mut x = Array3::zeros((dates.len(), window, width));
        for (b, &d) in dates.iter().enumerate() {
            let cube = build_cube(&self.histograms, d - chrono::Days::new(horizon as u64), window)?;
            x.slice_mut(s![b, .., ..]).assign(&flatten_cube(&cube));
        }
        Ok(x)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}
