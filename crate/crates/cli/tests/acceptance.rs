//! Acceptance checks, one PASS/FAIL line each. With `ACCEPTANCE_STRICT` set,
//! any failure makes the exit status non-zero.
//!
//! The end-to-end checks drive the `strawcast` binary over the desk config
//! (`configs/desk.json`) for five seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use strawcast_core::histogram::compute_histogram;
use strawcast_core::lag::build_lag_matrix;
use strawcast_core::metrics::{average_ensemble, mae, read_forecast_csv, rmse};
use strawcast_core::{
    metrics, Band, DailyRecord, DataError, ForecastSeries, HistogramConfig, LagConfig, MetricsReport, PcaModel,
    RasterImage, TargetKind,
};
use strawcast_nn::layers::{additive_attention, additive_attention_backward, causal_conv, AttentionParams};
use strawcast_nn::{load_model, predict, save_weights, ModelKind};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Synthetic-data seed paired with model seed `s`.
const SYNTH_SEED_OFFSET: u64 = 7;
const MIN_R2: f64 = 0.6;
const BUDGET: Duration = Duration::from_secs(600);

/// Forecast file checked for each model kind; SIM kinds are scored as their ensembles.
const KIND_FILES: [(ModelKind, &str); 5] = [
    (ModelKind::LstmBaseline, "lstm_baseline"),
    (ModelKind::AttCnnLstm, "att_cnn_lstm"),
    (ModelKind::SeriesnetGru, "seriesnet_gru"),
    (ModelKind::SimCnnLstmYield, "sim_ens"),
    (ModelKind::SimCnnLstmPrice, "sim_cnn_lstm_price_ens"),
];

struct Ledger {
    failed: usize,
}

impl Ledger {
    fn check(&mut self, id: u32, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL [{id}] {name}: {detail}");
            }
        }
    }
}

fn agm_arithmetic() -> Result<String, String> {
    // (MAE, RMSE, R², printed AGM) per column of the two results tables
    let yields = [
        (53.1, 70.8, 0.780, 13.6),
        (42.5, 62.2, 0.83, 9.0),
        (39.1, 55.2, 0.866, 6.3),
        (40.7, 58.8, 0.848, 7.5),
        (37.0, 54.6, 0.869, 6.0),
    ];
    let prices = [
        (0.268, 0.341, 0.609, 0.119),
        (0.21, 0.27, 0.72, 0.07),
        (0.227, 0.292, 0.712, 0.0748),
        (0.214, 0.263, 0.766, 0.0557),
        (0.208, 0.264, 0.764, 0.0555),
    ];
    let mut misses = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for (table, rows, tol) in [("yield", &yields, 0.15), ("price", &prices, 0.002)] {
        for (col, &(m, r, r2, printed)) in rows.iter().enumerate() {
            let err = (metrics::agm(m, r, r2) - printed).abs();
            if table == "yield" {
                worst.0 = worst.0.max(err);
            } else {
                worst.1 = worst.1.max(err);
            }
            if err > tol {
                misses.push(format!(
                    "{table} column {} gives {:.4} vs printed {printed} (|Δ| {err:.4} > {tol})",
                    col + 1,
                    metrics::agm(m, r, r2)
                ));
            }
        }
    }
    let summary = format!("max |Δ| yield {:.4}, price {:.4}", worst.0, worst.1);
    if misses.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", misses.join("; ")))
    }
}

fn attention_gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-2.0..2.0));
    let l = additive_attention(&x, &AttentionParams::zeros(3, 4)).map_err(|e| e.to_string())?;
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    if l.rows().into_iter().any(|row| row != mean) {
        return Err("zero-parameter output differs from the column mean".into());
    }

    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (t, d, d_a) = (rng.random_range(1..=6), rng.random_range(1..=4), rng.random_range(1..=4));
        let mut u = |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0));
        let x = u((t, d));
        let upstream = u((t, d));
        let p = AttentionParams {
            w_t: u((d, d_a)),
            w_x: u((d, d_a)),
            b_t: u((1, d_a)).row(0).to_owned(),
            w_a: u((1, d_a)).row(0).to_owned(),
            b_a: u((1, 1))[[0, 0]],
        };
        let loss = |x: &Array2<f64>, p: &AttentionParams| (additive_attention(x, p).unwrap() * &upstream).sum();
        let (gx, gp) = additive_attention_backward(&x, &p, &upstream).map_err(|e| e.to_string())?;

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.as_slice_mut().unwrap()[i] += h;
            b.as_slice_mut().unwrap()[i] -= h;
            numeric.push((loss(&a, &p) - loss(&b, &p)) / (2.0 * h));
            analytic.push(gx.as_slice().unwrap()[i]);
        }
        type Field = fn(&mut AttentionParams) -> &mut [f64];
        let fields: [(Field, &[f64]); 5] = [
            (|q| q.w_t.as_slice_mut().unwrap(), gp.w_t.as_slice().unwrap()),
            (|q| q.w_x.as_slice_mut().unwrap(), gp.w_x.as_slice().unwrap()),
            (|q| q.b_t.as_slice_mut().unwrap(), gp.b_t.as_slice().unwrap()),
            (|q| q.w_a.as_slice_mut().unwrap(), gp.w_a.as_slice().unwrap()),
            (|q| std::slice::from_mut(&mut q.b_a), std::slice::from_ref(&gp.b_a)),
        ];
        for (field, grad) in fields {
            for (i, &g) in grad.iter().enumerate() {
                let (mut a, mut b) = (p.clone(), p.clone());
                field(&mut a)[i] += h;
                field(&mut b)[i] -= h;
                numeric.push((loss(&x, &a) - loss(&x, &b)) / (2.0 * h));
                analytic.push(g);
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst = worst.max(diff / norm.max(1e-12));
    }
    if worst < 1e-4 {
        Ok(format!("column mean exact; worst relative FD error {worst:.2e} over 20 instances"))
    } else {
        Err(format!("worst relative FD error {worst:.2e}"))
    }
}

fn causality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    for dilation in [1, 2, 4, 8] {
        for k in [2, 3] {
            for _ in 0..10 {
                let (t, c, f) = (rng.random_range(2..40), rng.random_range(1..4), rng.random_range(1..4));
                let x = Array2::from_shape_fn((t, c), |_| rng.random_range(-1.0..1.0));
                let kernel = Array3::from_shape_fn((k, c, f), |_| rng.random_range(-1.0..1.0));
                let base = causal_conv(&x, &kernel, dilation).map_err(|e| e.to_string())?;
                let step = rng.random_range(1..t);
                let mut bumped = x.clone();
                bumped.row_mut(step).mapv_inplace(|v| v + rng.random_range(-5.0..5.0));
                let out = causal_conv(&bumped, &kernel, dilation).map_err(|e| e.to_string())?;
                for s in 0..step {
                    if out.row(s) != base.row(s) {
                        return Err(format!("d={dilation} k={k}: step {s} changed after perturbing step {step}"));
                    }
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} perturbations, no earlier step changed"))
}

fn histogram_conservation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let date = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let band = if i % 2 == 0 { Band::SurfaceTemperature } else { Band::Moisture };
        let mask_rate = rng.random_range(0.0..0.9);
        let mut pixels: Vec<f32> = (0..w * h).map(|_| rng.random_range(-0.5f32..1.5)).collect();
        let nodata = RasterImage::new(1, 1, band, date, vec![0.0]).unwrap().nodata;
        for p in pixels.iter_mut() {
            if rng.random_bool(mask_rate) {
                *p = nodata;
            }
        }
        pixels[rng.random_range(0..w * h)] = rng.random_range(0.0f32..1.0);
        let img = RasterImage::new(w, h, band, date, pixels.clone()).unwrap();
        let cfg = HistogramConfig::uniform(rng.random_range(1..=40), &[(band, 0.0, 1.0)]).map_err(|e| e.to_string())?;

        let counts = compute_histogram(&img, &cfg, false).map_err(|e| e.to_string())?;
        if counts.iter().sum::<f64>() != img.valid_count() as f64 {
            return Err(format!("image {i}: bins sum to {}, {} pixels unmasked", counts.iter().sum::<f64>(), img.valid_count()));
        }
        let norm = compute_histogram(&img, &cfg, true).map_err(|e| e.to_string())?;
        worst = worst.max((norm.iter().sum::<f64>() - 1.0).abs());

        pixels.shuffle(&mut rng);
        let shuffled = RasterImage::new(w, h, band, date, pixels).unwrap();
        if compute_histogram(&shuffled, &cfg, false).unwrap() != counts || compute_histogram(&shuffled, &cfg, true).unwrap() != norm {
            return Err(format!("image {i}: histogram changed under pixel shuffle"));
        }
    }
    if worst <= 1e-9 {
        Ok(format!("200 images; counts exact, shuffle-invariant, worst |Σ−1| {worst:.1e}"))
    } else {
        Err(format!("normalized histogram sums off by {worst:.1e}"))
    }
}

fn pca_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (rows, cols) = (rng.random_range(4..=12), rng.random_range(2..=6));
        let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-3.0..3.0));
        let k = cols.min(rows - 1);
        let pca = PcaModel::fit(&x, k).map_err(|e| e.to_string())?;
        let z = pca.transform(&x).map_err(|e| e.to_string())?;

        let centered = &x - &x.mean_axis(ndarray::Axis(0)).unwrap();
        let m = DMatrix::from_row_iterator(rows, cols, centered.iter().cloned());
        let cov = m.transpose() * &m / (rows - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().sum();
        for (c, &idx) in order.iter().take(k).enumerate() {
            let proj = &m * eig.eigenvectors.column(idx);
            let ours = z.column(c);
            let sign = if proj.iter().zip(ours.iter()).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in proj.iter().zip(ours.iter()) {
                worst = worst.max((sign * a - b).abs());
            }
            let ratio = eig.eigenvalues[idx] / total;
            if (ratio - pca.explained_variance_ratio[c]).abs() > 1e-8 {
                return Err(format!("matrix {i}: component {c} ratio {} vs oracle {ratio}", pca.explained_variance_ratio[c]));
            }
        }
    }
    if worst > 1e-8 {
        return Err(format!("projections differ from the oracle by {worst:.2e}"));
    }
    let u: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
    let v: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let rank1 = Array2::from_shape_fn((9, 5), |(i, j)| u[i] * v[j]);
    let first = PcaModel::fit(&rank1, 3).map_err(|e| e.to_string())?.explained_variance_ratio[0];
    if (first - 1.0).abs() > 1e-9 {
        return Err(format!("rank-1 first ratio {first}"));
    }
    Ok(format!("50 matrices, worst projection gap {worst:.1e}; rank-1 first ratio {first}"))
}

fn lag_oracle() -> Result<String, String> {
    let start = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
    let mut cases = 0;
    for len in 1..=50usize {
        let records: Vec<DailyRecord> = (0..len)
            .map(|i| DailyRecord {
                date: start + chrono::Days::new(i as u64),
                soil_temperature: 1000.0 + i as f64,
                soil_moisture: 2000.0 + i as f64,
                target: i as f64,
                target_kind: TargetKind::Yield,
            })
            .collect();
        for lag in 1..=10 {
            for horizon in 1..=5 {
                for n_params in 1..=2 {
                    cases += 1;
                    let cfg = LagConfig { lag_days: lag, horizon_days: horizon, n_params };
                    let mut rows = Vec::new();
                    for t in 0..len {
                        if t + 1 >= lag && t + horizon < len {
                            let mut row = Vec::new();
                            for p in 0..n_params {
                                let base = if p == 0 { 1000.0 } else { 2000.0 };
                                row.extend((t + 1 - lag..=t).map(|s| base + s as f64));
                            }
                            rows.push((row, (t + horizon) as f64, records[t + horizon].date));
                        }
                    }
                    let tag = format!("L={len} lag={lag} h={horizon} p={n_params}");
                    match build_lag_matrix(&records, &cfg) {
                        Err(DataError::SeriesTooShort { .. }) if rows.is_empty() => {}
                        Err(e) => return Err(format!("{tag}: {e}")),
                        Ok((x, y)) => {
                            if x.n_samples() != rows.len() {
                                return Err(format!("{tag}: {} samples, brute force {}", x.n_samples(), rows.len()));
                            }
                            for (s, (row, target, date)) in rows.iter().enumerate() {
                                if x.values.row(s).to_vec() != *row || y[s] != *target || x.sample_dates[s] != *date {
                                    return Err(format!("{tag}: sample {s} differs"));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{cases} configurations match brute force"))
}

fn ensemble_bounds() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    for draw in 0..1000 {
        let (n, m) = (rng.random_range(2..=30), rng.random_range(2..=6));
        let dates: Vec<NaiveDate> = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let members: Vec<ForecastSeries> = (0..m)
            .map(|_| {
                let (bias, spread) = (rng.random_range(-3.0..3.0), rng.random_range(0.0..4.0));
                let pred = truth.iter().map(|t| t + bias + spread * rng.random_range(-1.0..1.0)).collect();
                ForecastSeries::new(dates.clone(), pred, Some(truth.clone())).unwrap()
            })
            .collect();
        let ens = average_ensemble(&members).map_err(|e| e.to_string())?;
        let max_of = |f: fn(&ForecastSeries) -> strawcast_core::Result<f64>| {
            members.iter().map(|s| f(s).unwrap()).fold(f64::NEG_INFINITY, f64::max)
        };
        let (e_mae, e_rmse) = (mae(&ens).unwrap(), rmse(&ens).unwrap());
        if e_mae > max_of(mae) || e_rmse > max_of(rmse) {
            return Err(format!("draw {draw}: ensemble mae {e_mae}, rmse {e_rmse} exceed the worst member"));
        }
    }
    Ok("1000 draws, ensemble never worse than its worst member".into())
}

fn desk_config() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    serde_json::from_str(&std::fs::read_to_string(&path).expect("desk config exists")).expect("desk config parses")
}

fn strawcast(config: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_strawcast"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`strawcast {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

struct Run {
    dir: PathBuf,
    /// Metrics of every forecast file, keyed by stem.
    metrics: BTreeMap<String, MetricsReport>,
}

/// Synthesizes, preprocesses, trains every kind, forecasts and scores one seed.
fn run_seed(root: &Path, seed: u64, tag: &str) -> Result<Run, String> {
    let dir = root.join(format!("{tag}_{seed}"));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut cfg = desk_config();
    cfg["seed"] = seed.into();
    cfg["paths"] = serde_json::json!({ "output_dir": "run" });
    cfg["synth"]["seed"] = (seed + SYNTH_SEED_OFFSET).into();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).map_err(|e| e.to_string())?;

    let kinds: Vec<&str> = KIND_FILES.iter().map(|(k, _)| k.as_str()).collect();
    strawcast(&path, &["synth"])?;
    strawcast(&path, &["preprocess"])?;
    strawcast(&path, &[&["train"], kinds.as_slice()].concat())?;
    strawcast(&path, &["forecast"])?;
    strawcast(&path, &["evaluate"])?;

    let run = dir.join("run");
    let mut metrics = BTreeMap::new();
    for entry in std::fs::read_dir(run.join("forecasts")).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
        let f = read_forecast_csv(&p).map_err(|e| e.to_string())?;
        metrics.insert(stem.clone(), MetricsReport::from_forecast(stem, &f).map_err(|e| e.to_string())?);
    }
    Ok(Run { dir: run, metrics })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn end_to_end(runs: &[Run], elapsed: Duration) -> Result<String, String> {
    let mut parts = Vec::new();
    let mut short = Vec::new();
    for (kind, stem) in KIND_FILES {
        let r2s: Vec<f64> = runs.iter().map(|r| r.metrics[stem].r2).collect();
        let (med, min) = (median(r2s.clone()), r2s.iter().cloned().fold(f64::INFINITY, f64::min));
        parts.push(format!("{kind} median {med:.3} (min {min:.3})"));
        if med < MIN_R2 {
            short.push(kind.as_str());
        }
    }
    let mut detail = format!("test R² over {} seeds: {}; {:.0} s", runs.len(), parts.join(", "), elapsed.as_secs_f64());
    if elapsed > BUDGET {
        short.push("runtime");
        detail.push_str(&format!(" exceeds {} s", BUDGET.as_secs()));
    }
    if short.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; below target: {}", short.join(", ")))
    }
}

/// Reported only: the voting ensemble against its better component, by median AGM.
fn ensemble_claim(runs: &[Run]) -> String {
    let final_agm = median(runs.iter().map(|r| r.metrics["final_ens"].agm).collect());
    let best_agm = median(runs.iter().map(|r| r.metrics["station_ens"].agm.min(r.metrics["sim_ens"].agm)).collect());
    let verdict = if final_agm <= best_agm { "holds" } else { "does not hold" };
    format!("median final-ensemble AGM {final_agm:.3} vs median best-component AGM {best_agm:.3}: claim {verdict}")
}

fn determinism(first: &Run, again: &Run) -> Result<String, String> {
    if first.metrics.keys().ne(again.metrics.keys()) {
        return Err("reruns produced different forecast files".into());
    }
    let mut worst = 0.0f64;
    for (stem, a) in &first.metrics {
        let b = &again.metrics[stem];
        for (x, y) in [(a.mae, b.mae), (a.rmse, b.rmse), (a.r2, b.r2), (a.agm, b.agm)] {
            worst = worst.max((x - y).abs());
        }
    }
    let detail = format!("{} forecast files, worst metric gap {worst:.1e}", first.metrics.len());
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Reloads every trained model, saves it again and checks predictions bit for bit.
fn persistence(run: &Run, scratch: &Path) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut seen = std::collections::BTreeSet::new();
    let mut files = 0;
    for entry in std::fs::read_dir(run.dir.join("models")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let model = load_model(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let [t, f] = model.spec.input_shape;
        let x = Array3::from_shape_fn((4, t, f), |_| rng.random_range(0.0..1.0));
        let copy = scratch.join(path.file_name().unwrap());
        save_weights(&model, &copy).map_err(|e| e.to_string())?;
        let back = load_model(&copy).map_err(|e| e.to_string())?;
        let same_params = model.params().iter().zip(back.params()).all(|(a, b)| a.value == b.value);
        let (p, q) = (predict(&model, &x).unwrap(), predict(&back, &x).unwrap());
        if !same_params || p.iter().zip(&q).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(format!("{} changed across save and load", path.display()));
        }
        seen.insert(model.kind());
        files += 1;
    }
    let missing: Vec<&str> = ModelKind::ALL.iter().filter(|k| !seen.contains(k)).map(|k| k.as_str()).collect();
    if missing.is_empty() {
        Ok(format!("{files} trained models across all {} kinds", ModelKind::ALL.len()))
    } else {
        Err(format!("no trained model of kind {}", missing.join(", ")))
    }
}

fn main() {
    let mut ledger = Ledger { failed: 0 };
    ledger.check(1, "AGM arithmetic", agm_arithmetic());
    ledger.check(2, "attention correctness", attention_gradients());
    ledger.check(3, "causal convolution", causality());
    ledger.check(4, "histogram conservation", histogram_conservation());
    ledger.check(5, "PCA oracle", pca_oracle());
    ledger.check(6, "lag builder oracle", lag_oracle());
    ledger.check(7, "ensemble bounds", ensemble_bounds());

    let root = tempfile::tempdir().expect("scratch dir");
    let started = Instant::now();
    let runs: Result<Vec<Run>, String> = SEEDS.iter().map(|&s| run_seed(root.path(), s, "e2e")).collect();
    let elapsed = started.elapsed();
    match runs {
        Ok(runs) => {
            ledger.check(8, "end-to-end synthetic", end_to_end(&runs, elapsed));
            println!("NOTE [8] {}", ensemble_claim(&runs));
            let again = run_seed(root.path(), SEEDS[0], "rerun");
            ledger.check(9, "determinism (seed 0 rerun)", again.and_then(|a| determinism(&runs[0], &a)));
            let scratch = root.path().join("persist");
            std::fs::create_dir_all(&scratch).expect("scratch dir");
            ledger.check(10, "persistence", persistence(&runs[0], &scratch));
        }
        Err(e) => {
            for (id, name) in [(8, "end-to-end synthetic"), (9, "determinism"), (10, "persistence")] {
                ledger.check(id, name, Err(e.clone()));
            }
        }
    }

    println!("{} of 10 criteria failed", ledger.failed);
    // criterion 1 fails on the published figures, so a failing exit would stop
    // `cargo test --workspace` before the other crates; opt in to it
    if ledger.failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
