//! One function per subcommand. Each reads its inputs from the paths in the
//! config and writes its outputs under the output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use strawcast_core::histogram::{derive_bin_edges, DailyHistograms};
use strawcast_core::importance::{rank_feature_importance, LinearRegressor};
use strawcast_core::lag::{build_lag_matrix_blocks, split_point};
use strawcast_core::metrics::{
    average_ensemble, read_forecast_csv, write_forecast_csv, write_metrics_csv, ForecastSeries, MetricsReport,
};
use strawcast_core::pca::{fit_pca, pca_transform};
use strawcast_core::raster::{apply_mask, fill_moisture_gaps, read_mask, read_raster_dir, write_mask, write_raster};
use strawcast_core::scaler::{apply_scaler, fit_scaler};
use strawcast_core::station::{load_station_csv, write_station_csv};
use strawcast_core::synth::{gen_raster_series, gen_station_data};
use strawcast_core::{Band, RasterImage};
use strawcast_nn::store::WeightStore;
use strawcast_nn::{build_model, load_model, predict, save_weights, train, ModelKind, ModelSpec};

use crate::config::PipelineConfig;
use crate::dataset::{self, ensure_dir, io_err, require, Part, Prepared, SampleSplit, StationFeatures};
use crate::error::{CliError, Result};
use crate::plot;

pub const STATION_ENS: &str = "station_ens";
pub const SIM_ENS: &str = "sim_ens";
pub const FINAL_ENS: &str = "final_ens";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Serialize)]
pub struct SynthSummary {
    pub station_csv: PathBuf,
    pub raster_dir: PathBuf,
    pub days: usize,
    pub temperature_images: usize,
    pub moisture_images: usize,
    pub noise_std: f64,
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthSummary> {
    let mut synth = cfg.synth_config();
    synth.target_kind = cfg.target_kind;
    if let Some(snr) = cfg.synth_snr {
        synth = synth.with_snr(snr)?;
    }
    let records = gen_station_data(&synth)?;
    let rasters = gen_raster_series(&synth, &records)?;

    let station_csv = cfg.station_csv();
    if let Some(dir) = station_csv.parent() {
        ensure_dir(dir)?;
    }
    write_station_csv(&station_csv, &records)?;
    let raster_dir = cfg.raster_dir();
    if raster_dir.exists() {
        // stale images from an earlier, longer run would otherwise be picked up
        fs::remove_dir_all(&raster_dir).map_err(|e| io_err(&raster_dir, e))?;
    }
    ensure_dir(&raster_dir)?;
    for img in rasters.temperature.iter().chain(&rasters.moisture) {
        write_raster(&raster_dir.join(format!("{}_{}.json", img.band, img.date)), img)?;
    }
    let mask_path = cfg.mask_path();
    if let Some(dir) = mask_path.parent() {
        ensure_dir(dir)?;
    }
    write_mask(&mask_path, &rasters.mask)?;
    if let Some(dir) = station_csv.parent() {
        write_json(&dir.join("synth_config.json"), &synth)?;
    }
    log::info!("synth: {} days, {} rasters", records.len(), rasters.temperature.len() + rasters.moisture.len());
    Ok(SynthSummary {
        station_csv,
        raster_dir,
        days: records.len(),
        temperature_images: rasters.temperature.len(),
        moisture_images: rasters.moisture.len(),
        noise_std: synth.noise_std,
    })
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Serialize)]
pub struct PreprocessSummary {
    pub lag_samples: usize,
    pub aligned_samples: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub first_test_date: NaiveDate,
    pub pca_components: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub top_features: Vec<(String, f64)>,
}

/// Lag rows whose trailing `window` rows are consecutive days.
fn station_ready(dates: &[NaiveDate], window: usize) -> BTreeSet<NaiveDate> {
    let mut ready = BTreeSet::new();
    let mut run = 0;
    for (i, &d) in dates.iter().enumerate() {
        run = if i > 0 && dates[i - 1].succ_opt() == Some(d) { run + 1 } else { 1 };
        if run >= window {
            ready.insert(d);
        }
    }
    ready
}

/// Target dates whose `window` feature days, ending `horizon` days earlier, all have both bands.
fn satellite_ready(days: &BTreeSet<NaiveDate>, window: usize, horizon: usize) -> BTreeSet<NaiveDate> {
    let mut ready = BTreeSet::new();
    let mut run = 0;
    let mut prev: Option<NaiveDate> = None;
    for &d in days {
        run = if prev.and_then(|p| p.succ_opt()) == Some(d) { run + 1 } else { 1 };
        prev = Some(d);
        if run >= window {
            ready.insert(d + chrono::Days::new(horizon as u64));
        }
    }
    ready
}

pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary> {
    let station_csv = cfg.station_csv();
    require(&station_csv, "synth")?;
    let records = load_station_csv(&station_csv, cfg.target_kind)?;
    let (lag_x, lag_y) = build_lag_matrix_blocks(&records, &cfg.lag)?;

    let raster_dir = cfg.raster_dir();
    require(&raster_dir, "synth")?;
    let mask_path = cfg.mask_path();
    require(&mask_path, "synth")?;
    let mask = read_mask(&mask_path)?;
    let mut temperature = Vec::new();
    let mut moisture = Vec::new();
    for img in read_raster_dir(&raster_dir)? {
        let masked = apply_mask(&img, &mask)?;
        match img.band {
            Band::SurfaceTemperature => temperature.push(masked),
            Band::Moisture => moisture.push(masked),
        }
    }
    let moisture = fill_moisture_gaps(&moisture)?;
    let temp_days: BTreeSet<NaiveDate> = temperature.iter().map(|i| i.date).collect();
    let both_days: BTreeSet<NaiveDate> = moisture.iter().map(|i| i.date).filter(|d| temp_days.contains(d)).collect();

    let horizon = cfg.lag.horizon_days;
    let station_ok = station_ready(&lag_x.sample_dates, cfg.station_window);
    let sat_ok = satellite_ready(&both_days, cfg.histogram.window, horizon);
    let aligned: Vec<usize> =
        (0..lag_x.n_samples()).filter(|&i| station_ok.contains(&lag_x.sample_dates[i]) && sat_ok.contains(&lag_x.sample_dates[i])).collect();
    let n = aligned.len();
    let n_train = split_point(n, cfg.train_fraction);
    if n_train == 0 || n_train == n {
        return Err(CliError::Data(format!(
            "only {n} sample dates are usable by both branches; the train/test split would leave one side empty"
        )));
    }
    let split = SampleSplit {
        dates: aligned.iter().map(|&i| lag_x.sample_dates[i]).collect(),
        targets: aligned.iter().map(|&i| lag_y[i]).collect(),
        n_train,
    };
    let last_train = split.dates[n_train - 1];

    // Transforms see only rows whose target date falls in the training period.
    let fit_rows: Vec<usize> = (0..lag_x.n_samples()).filter(|&i| lag_x.sample_dates[i] <= last_train).collect();
    let fit_y: Vec<f64> = fit_rows.iter().map(|&i| lag_y[i]).collect();
    let train_raw = lag_x.select_rows(&fit_rows);
    let scaler = fit_scaler(&train_raw)?;
    let train_scaled = apply_scaler(&scaler, &train_raw)?;
    let pca = fit_pca(&train_scaled, cfg.pca_components)?;
    let train_pcs = pca_transform(&pca, &train_scaled)?;
    let post = fit_scaler(&train_pcs)?;
    let all = apply_scaler(&post, &pca_transform(&pca, &apply_scaler(&scaler, &lag_x)?)?)?;
    if !all.is_finite() {
        return Err(CliError::Numeric("station features contain non-finite values".into()));
    }

    let regressor = LinearRegressor::fit(&train_scaled.values, &fit_y)?;
    let ranking = rank_feature_importance(&train_scaled, &fit_y, &regressor, cfg.importance_trials, cfg.seed)?;

    let cutoff = last_train - chrono::Days::new(horizon as u64);
    let fit_images: Vec<RasterImage> =
        temperature.iter().chain(&moisture).filter(|img| img.date <= cutoff).cloned().collect();
    let hcfg = derive_bin_edges(&fit_images, cfg.histogram.n_bins, cfg.histogram.lo_percentile, cfg.histogram.hi_percentile)?;
    let all_images: Vec<RasterImage> = temperature.into_iter().chain(moisture).collect();
    let histograms = DailyHistograms::from_images(&all_images, &hcfg, cfg.histogram.normalize)?;

    let dir = ensure_dir(&cfg.features_dir())?;
    dataset::write_split(&dir.join(dataset::SPLIT_FILE), &split)?;
    dataset::write_station_features(
        &dir.join(dataset::STATION_FILE),
        &StationFeatures { dates: all.sample_dates.clone(), targets: lag_y.clone(), values: all.values.clone() },
    )?;
    dataset::write_histograms(&dir.join(dataset::HISTOGRAM_FILE), &histograms)?;
    write_json(&dir.join(dataset::HISTOGRAM_CONFIG_FILE), &hcfg)?;

    let mut transform = WeightStore::new(None);
    let p = lag_x.n_features();
    let k = pca.n_components();
    transform.push("scaler.min", vec![p], scaler.min.iter().copied())?;
    transform.push("scaler.max", vec![p], scaler.max.iter().copied())?;
    transform.push("pca.mean", vec![p], pca.mean.iter().copied())?;
    transform.push("pca.components", vec![p, k], pca.components.iter().copied())?;
    transform.push("pca.explained_variance_ratio", vec![k], pca.explained_variance_ratio.iter().copied())?;
    transform.push("output_scaler.min", vec![k], post.min.iter().copied())?;
    transform.push("output_scaler.max", vec![k], post.max.iter().copied())?;
    transform.write(&dir.join(dataset::TRANSFORM_FILE))?;

    let imp_path = dir.join(dataset::IMPORTANCE_FILE);
    let mut w = csv::Writer::from_path(&imp_path).map_err(|e| dataset::csv_err(&imp_path, e))?;
    w.write_record(["feature", "importance"]).map_err(|e| dataset::csv_err(&imp_path, e))?;
    for (name, score) in &ranking {
        w.write_record([name.clone(), score.to_string()]).map_err(|e| dataset::csv_err(&imp_path, e))?;
    }
    w.flush().map_err(|e| io_err(&imp_path, e))?;

    let summary = PreprocessSummary {
        lag_samples: lag_x.n_samples(),
        aligned_samples: n,
        train_samples: n_train,
        test_samples: n - n_train,
        first_test_date: split.dates[n_train],
        pca_components: k,
        explained_variance_ratio: pca.explained_variance_ratio.to_vec(),
        top_features: ranking.into_iter().take(10).collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!("preprocess: {n} aligned samples, {n_train} train");
    Ok(summary)
}

// ---------------------------------------------------------------- train

fn model_path(cfg: &PipelineConfig, kind: ModelKind, member: Option<usize>) -> PathBuf {
    let stem = match member {
        Some(i) => format!("{kind}_m{i}"),
        None => kind.to_string(),
    };
    cfg.models_dir().join(format!("{stem}.json"))
}

fn members(cfg: &PipelineConfig, kind: ModelKind) -> Vec<Option<usize>> {
    if kind.is_satellite() {
        (0..cfg.ensemble_members).map(Some).collect()
    } else {
        vec![None]
    }
}

fn inputs(cfg: &PipelineConfig, data: &Prepared, kind: ModelKind, part: Part) -> Result<ndarray::Array3<f64>> {
    let (dates, _) = data.split.part(part);
    if kind.is_satellite() {
        data.satellite_tensor(dates, cfg.histogram.window, cfg.lag.horizon_days)
    } else {
        data.station_tensor(dates, cfg.station_window)
    }
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub model: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
}

pub fn cmd_train(cfg: &PipelineConfig, kinds: &[ModelKind]) -> Result<Vec<TrainSummary>> {
    let data = Prepared::load(cfg)?;
    let dir = ensure_dir(&cfg.models_dir())?;
    let (_, y) = data.split.part(Part::Train);
    let mut out = Vec::new();
    for &kind in kinds {
        let x = inputs(cfg, &data, kind, Part::Train)?;
        let (_, t, f) = x.dim();
        for member in members(cfg, kind) {
            let seed = cfg.seed + member.unwrap_or(0) as u64;
            let spec = ModelSpec { input_shape: [t, f], seed, arch: cfg.models.architecture(kind) };
            let mut model = build_model(&spec)?;
            let tcfg = strawcast_nn::TrainConfig { seed, ..cfg.train.clone() };
            let report = train(&mut model, &x, y, &tcfg)?;
            let path = model_path(cfg, kind, member);
            save_weights(&model, &path)?;
            report.write_csv(&path.with_extension("train.csv"))?;
            let name = path.file_stem().expect("model file").to_string_lossy().into_owned();
            log::info!("train {name}: {} epochs, best {} ({:.1}s)", report.stopped_epoch, report.best_epoch, report.wall_seconds);
            out.push(TrainSummary {
                model: name,
                epochs: report.stopped_epoch,
                best_epoch: report.best_epoch,
                best_val_loss: report.val_loss.iter().cloned().fold(f64::INFINITY, f64::min),
                wall_seconds: report.wall_seconds,
            });
        }
    }
    let _ = dir;
    Ok(out)
}

// ---------------------------------------------------------------- forecast

/// Writes per-model forecasts on the test split, then the SIM, station and final ensembles.
pub fn cmd_forecast(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let data = Prepared::load(cfg)?;
    let (dates, truth) = data.split.part(Part::Test);
    let dir = ensure_dir(&cfg.forecasts_dir())?;
    let mut written = Vec::new();
    let mut by_kind: Vec<(ModelKind, ForecastSeries)> = Vec::new();

    for kind in ModelKind::ALL {
        let paths: Vec<PathBuf> = members(cfg, kind).into_iter().map(|m| model_path(cfg, kind, m)).collect();
        let present: Vec<&PathBuf> = paths.iter().filter(|p| p.exists()).collect();
        if present.is_empty() {
            continue;
        }
        let x = inputs(cfg, &data, kind, Part::Test)?;
        let mut series = Vec::new();
        for path in present {
            let model = load_model(path)?;
            if model.kind() != kind {
                return Err(CliError::Data(format!("{} holds a {} model", path.display(), model.kind())));
            }
            let pred = predict(&model, &x)?;
            let f = ForecastSeries::new(dates.to_vec(), pred, Some(truth.to_vec()))?;
            let out = dir.join(format!("{}.csv", path.file_stem().expect("model file").to_string_lossy()));
            write_forecast_csv(&out, &f)?;
            written.push(out);
            series.push(f);
        }
        let combined = if kind.is_satellite() {
            let ens = average_ensemble(&series)?;
            // the ensemble matching the target also gets the generic name the table reads
            let stem = if kind == cfg.sim_kind() { SIM_ENS.to_string() } else { format!("{kind}_ens") };
            let out = dir.join(format!("{stem}.csv"));
            write_forecast_csv(&out, &ens)?;
            written.push(out);
            ens
        } else {
            series.remove(0)
        };
        by_kind.push((kind, combined));
    }
    if by_kind.is_empty() {
        return Err(CliError::MissingUpstream { path: cfg.models_dir(), producer: "train" });
    }
    let get = |k: ModelKind| by_kind.iter().find(|(kind, _)| *kind == k).map(|(_, f)| f.clone());
    let station = match (get(ModelKind::AttCnnLstm), get(ModelKind::SeriesnetGru)) {
        (Some(a), Some(b)) => Some(average_ensemble(&[a, b])?),
        _ => None,
    };
    if let Some(s) = &station {
        let out = dir.join(format!("{STATION_ENS}.csv"));
        write_forecast_csv(&out, s)?;
        written.push(out);
    }
    let sim = get(cfg.sim_kind()).or_else(|| by_kind.iter().find(|(k, _)| k.is_satellite()).map(|(_, f)| f.clone()));
    if let (Some(s), Some(m)) = (station, sim) {
        let out = dir.join(format!("{FINAL_ENS}.csv"));
        write_forecast_csv(&out, &average_ensemble(&[s, m])?)?;
        written.push(out);
    }
    Ok(written)
}

// ---------------------------------------------------------------- evaluate

/// Forecast files in table order: headline columns first, then the station components.
pub const TABLE_ROWS: [(&str, &str); 6] = [
    ("lstm_baseline", "LSTM"),
    (SIM_ENS, "SIM_CNN-LSTM_Ens"),
    (STATION_ENS, "ATT-CNN-LSTM-SeriesNet_Ens"),
    (FINAL_ENS, "Voting Ensemble"),
    ("att_cnn_lstm", "ATT-CNN-LSTM"),
    ("seriesnet_gru", "SeriesNet-GRU"),
];

/// Scores the given forecast files, or the standard set when none are given.
pub fn cmd_evaluate(cfg: &PipelineConfig, forecasts: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let mut rows = Vec::new();
    if forecasts.is_empty() {
        let dir = cfg.forecasts_dir();
        for (stem, label) in TABLE_ROWS {
            let path = dir.join(format!("{stem}.csv"));
            if path.exists() {
                rows.push(MetricsReport::from_forecast(label, &read_forecast_csv(&path)?)?);
            }
        }
        if rows.is_empty() {
            return Err(CliError::MissingUpstream { path: dir, producer: "forecast" });
        }
    } else {
        for path in forecasts {
            require(path, "forecast")?;
            let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            rows.push(MetricsReport::from_forecast(label, &read_forecast_csv(path)?)?);
        }
    }
    let out = ensure_dir(cfg.output_dir())?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    write_json(&out.join("metrics.json"), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- report

pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let fdir = cfg.forecasts_dir();
    let mut lines = Vec::new();
    for (stem, label) in [(STATION_ENS, "ATT-CNN-LSTM-SeriesNet_Ens"), (SIM_ENS, "SIM_CNN-LSTM_Ens"), (FINAL_ENS, "Voting Ensemble")] {
        let path = fdir.join(format!("{stem}.csv"));
        if path.exists() {
            lines.push((label.to_string(), read_forecast_csv(&path)?));
        }
    }
    if lines.is_empty() {
        for (stem, label) in TABLE_ROWS {
            let path = fdir.join(format!("{stem}.csv"));
            if path.exists() {
                lines.push((label.to_string(), read_forecast_csv(&path)?));
            }
        }
    }
    if lines.is_empty() {
        return Err(CliError::MissingUpstream { path: fdir, producer: "forecast" });
    }
    let dir = ensure_dir(&cfg.reports_dir())?;
    let mut written = Vec::new();
    let what = cfg.target_kind.to_string();
    let all = dir.join(format!("forecast_vs_true_{what}.svg"));
    plot::forecast_plot(&all, &format!("Forecasted vs. true {what} values"), &lines)?;
    written.push(all);
    for (label, f) in &lines {
        let slug: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
        let path = dir.join(format!("{slug}.svg"));
        plot::forecast_plot(&path, &format!("{label}: forecasted vs. true {what}"), std::slice::from_ref(&(label.clone(), f.clone())))?;
        written.push(path);
    }
    let rows = cmd_evaluate(cfg, &[])?;
    let table = dir.join("metrics.md");
    fs::write(&table, metrics_table(&rows)).map_err(|e| io_err(&table, e))?;
    written.push(table);
    Ok(written)
}

/// Markdown table with scores as rows and models as columns.
pub fn metrics_table(rows: &[MetricsReport]) -> String {
    let mut s = String::from("| Score |");
    for r in rows {
        s += &format!(" {} |", r.model);
    }
    s += "\n|---|";
    s += &"---|".repeat(rows.len());
    s += "\n";
    let fields: [(&str, fn(&MetricsReport) -> f64); 4] =
        [("MAE", |r| r.mae), ("RMSE", |r| r.rmse), ("R²", |r| r.r2), ("AGM", |r| r.agm)];
    for (name, get) in fields {
        s += &format!("| {name} |");
        for r in rows {
            s += &format!(" {:.4} |", get(r));
        }
        s += "\n";
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 2, 1).unwrap() + chrono::Days::new(n)
    }

    #[test]
    fn station_windows_need_consecutive_rows() {
        let dates: Vec<NaiveDate> = [0, 1, 2, 3, 10, 11, 12].into_iter().map(day).collect();
        let ready = station_ready(&dates, 3);
        assert_eq!(ready.into_iter().collect::<Vec<_>>(), vec![day(2), day(3), day(12)]);
    }

    #[test]
    fn satellite_windows_shift_by_horizon() {
        let days: BTreeSet<NaiveDate> = [0, 1, 2, 4, 5].into_iter().map(day).collect();
        let ready = satellite_ready(&days, 2, 10);
        assert_eq!(ready.into_iter().collect::<Vec<_>>(), vec![day(11), day(12), day(15)]);
    }

    #[test]
    fn table_layout() {
        let r = MetricsReport { model: "LSTM".into(), mae: 1.0, rmse: 2.0, r2: 0.5, agm: 0.75 };
        let t = metrics_table(&[r]);
        assert!(t.starts_with("| Score | LSTM |"));
        assert!(t.contains("| AGM | 0.7500 |"));
    }
}
