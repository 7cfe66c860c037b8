//! Cross-module flows: synthetic data through the station and raster paths,
//! and forecasts through ensembling and scoring.

use chrono::NaiveDate;
use strawcast_core::histogram::{build_cube, derive_bin_edges, flatten_cube, DailyHistograms};
use strawcast_core::importance::{rank_feature_importance, LinearRegressor, Regressor};
use strawcast_core::lag::{build_lag_matrix_blocks, chronological_split};
use strawcast_core::metrics::{
    average_ensemble, read_forecast_csv, read_metrics_csv, write_forecast_csv, write_metrics_csv, ForecastSeries,
    MetricsReport,
};
use strawcast_core::pca::{fit_pca, pca_transform};
use strawcast_core::raster::{apply_mask, fill_moisture_gaps, read_raster_dir, write_raster};
use strawcast_core::scaler::{apply_scaler, fit_scaler};
use strawcast_core::station::{load_station_csv, write_station_csv};
use strawcast_core::synth::{gen_raster_series, gen_station_data, LagProfile};
use strawcast_core::{Band, LagConfig, SynthConfig, TargetKind};

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_days: 400,
        lag_days: 20,
        horizon_days: 5,
        seasonal_amplitude: 0.0,
        temperature_profile: LagProfile::Exponential { scale: 8.0, tau: 4.0 },
        moisture_profile: LagProfile::Exponential { scale: 400.0, tau: 3.0 },
        ..SynthConfig::default()
    }
}

fn r2(pred: &[f64], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn noiseless_planted_signal_is_linear_in_the_lag_features() {
    let cfg = small_synth();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("station.csv");
    write_station_csv(&path, &gen_station_data(&cfg).unwrap()).unwrap();
    let records = load_station_csv(&path, TargetKind::Yield).unwrap();

    let lag = LagConfig { lag_days: 20, horizon_days: 5, n_params: 2 };
    let (x, y) = build_lag_matrix_blocks(&records, &lag).unwrap();
    assert_eq!(x.n_features(), 40);
    assert_eq!(x.n_samples(), 400 - 20 - 5 + 1);

    let ((xtr, ytr), (xte, yte)) = chronological_split(&x, &y, 0.8).unwrap();
    assert!(xtr.sample_dates.last() < xte.sample_dates.first());
    let scaler = fit_scaler(&xtr).unwrap();
    let (str_, ste) = (apply_scaler(&scaler, &xtr).unwrap(), apply_scaler(&scaler, &xte).unwrap());
    // a full-rank projection loses nothing a linear model needs
    let pca = fit_pca(&str_, 40).unwrap();
    let (ptr, pte) = (pca_transform(&pca, &str_).unwrap(), pca_transform(&pca, &ste).unwrap());

    let model = LinearRegressor::fit(&ptr.values, &ytr).unwrap();
    let pred = model.predict(&pte.values).unwrap();
    assert!(r2(&pred, &yte) > 0.999, "test R² {}", r2(&pred, &yte));

    let ranking = rank_feature_importance(&ptr, &ytr, &model, 3, 1).unwrap();
    assert_eq!(ranking.len(), 40);
    assert!(ranking.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn raster_path_tracks_the_station_readings() {
    let cfg = SynthConfig { n_days: 60, lag_days: 5, horizon_days: 2, ..SynthConfig::default() };
    let records = gen_station_data(&cfg).unwrap();
    let rasters = gen_raster_series(&cfg, &records).unwrap();

    let dir = tempfile::tempdir().unwrap();
    for img in rasters.temperature.iter().chain(&rasters.moisture) {
        write_raster(&dir.path().join(format!("{}_{}.json", img.band, img.date)), img).unwrap();
    }
    let (mut temp, mut moist) = (Vec::new(), Vec::new());
    for img in read_raster_dir(dir.path()).unwrap() {
        let masked = apply_mask(&img, &rasters.mask).unwrap();
        match img.band {
            Band::SurfaceTemperature => temp.push(masked),
            Band::Moisture => moist.push(masked),
        }
    }
    assert_eq!(temp.len(), 60);
    assert_eq!(moist.len(), 20);
    // images on days 0, 3, …, 57 each cover one day either side: day -1 gains
    // an image, day 59 stays empty
    let moist = fill_moisture_gaps(&moist).unwrap();
    assert_eq!(moist.len(), 60);
    assert_eq!(moist[0].date, records[0].date.pred_opt().unwrap());

    let all: Vec<_> = temp.into_iter().chain(moist).collect();
    let edges = derive_bin_edges(&all, 16, 1.0, 99.0).unwrap();
    let hist = DailyHistograms::from_images(&all, &edges, true).unwrap();
    assert_eq!(hist.complete_days().len(), 59);

    // the bin-centre mean of each day's temperature histogram follows the station reading
    let e = &edges.edges[&Band::SurfaceTemperature];
    let centres: Vec<f64> = e.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for r in &records[..59] {
        let h = &hist.bands[&Band::SurfaceTemperature][&r.date];
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        est.push(h.iter().zip(&centres).map(|(p, c)| p * c).sum::<f64>());
        truth.push(r.soil_temperature);
    }
    let (me, mt) = (est.iter().sum::<f64>() / 59.0, truth.iter().sum::<f64>() / 59.0);
    let cov: f64 = est.iter().zip(&truth).map(|(a, b)| (a - me) * (b - mt)).sum();
    let ve: f64 = est.iter().map(|a| (a - me).powi(2)).sum();
    let vt: f64 = truth.iter().map(|b| (b - mt).powi(2)).sum();
    assert!(cov / (ve * vt).sqrt() > 0.95);

    let end = records[58].date;
    let cube = build_cube(&hist, end, 10).unwrap();
    assert_eq!(flatten_cube(&cube).dim(), (10, 32));
}

#[test]
fn forecasts_round_trip_through_ensemble_and_scoring() {
    let dates: Vec<NaiveDate> = (0..30).map(|i| NaiveDate::from_ymd_opt(2019, 6, 1).unwrap() + chrono::Days::new(i)).collect();
    let truth: Vec<f64> = (0..30).map(|i| 100.0 + (i as f64 * 0.4).sin() * 10.0).collect();
    let a = ForecastSeries::new(dates.clone(), truth.iter().map(|t| t + 3.0).collect(), Some(truth.clone())).unwrap();
    let b = ForecastSeries::new(dates, truth.iter().map(|t| t - 1.0).collect(), Some(truth)).unwrap();
    let ens = average_ensemble(&[a.clone(), b.clone()]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ens.csv");
    write_forecast_csv(&p, &ens).unwrap();
    let back = read_forecast_csv(&p).unwrap();
    assert_eq!(back, ens);

    let reports: Vec<MetricsReport> =
        [("a", &a), ("b", &b), ("ens", &back)].iter().map(|(n, f)| MetricsReport::from_forecast(*n, f).unwrap()).collect();
    // the mean of +3 and -1 offsets is a constant +1, the same error as `b`
    assert!((reports[2].mae - 1.0).abs() < 1e-9);
    assert!((reports[2].rmse - 1.0).abs() < 1e-9);
    assert!(reports[2].agm < reports[0].agm);
    assert!((reports[2].agm - reports[1].agm).abs() < 1e-12);

    let m = dir.path().join("metrics.csv");
    write_metrics_csv(&m, &reports).unwrap();
    assert!(std::fs::read_to_string(&m).unwrap().starts_with("model,mae,rmse,r2,agm\n"));
    assert_eq!(read_metrics_csv(&m).unwrap().len(), 3);
}
