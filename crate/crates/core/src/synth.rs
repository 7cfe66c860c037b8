//! Synthetic station and raster data with a planted, learnable target.
//!
//! Soil temperature and moisture are an annual sinusoid plus an AR(1)
//! anomaly. The target `horizon` days after day `t` is
//!
//! ```text
//! base + Σ_j w_T[j]·temp(t−j) + Σ_j w_M[j]·moist(t−j) + A·sin(2πt/P) + noise
//! ```
//!
//! with `j = 0` the most recent day. A burn-in prefix keeps every emitted
//! record on the formula.

use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::raster::{LandMask, RasterImage};
use crate::station::{DailyRecord, TargetKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LagProfile {
    /// `scale · exp(−j/tau)`, normalized so the weights sum to `scale`.
    Exponential { scale: f64, tau: f64 },
    Explicit { weights: Vec<f64> },
}

impl LagProfile {
    pub fn weights(&self, lag: usize) -> Result<Vec<f64>> {
        match self {
            LagProfile::Exponential { scale, tau } => {
                if !(*tau > 0.0) {
                    return Err(DataError::InvalidParameter(format!("tau must be > 0, got {tau}")));
                }
                let raw: Vec<f64> = (0..lag).map(|j| (-(j as f64) / tau).exp()).collect();
                let total: f64 = raw.iter().sum();
                Ok(raw.into_iter().map(|w| scale * w / total).collect())
            }
            LagProfile::Explicit { weights } => {
                if weights.len() != lag {
                    return Err(DataError::InvalidParameter(format!(
                        "lag profile has {} weights, lag is {lag}",
                        weights.len()
                    )));
                }
                Ok(weights.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub lag_days: usize,
    pub horizon_days: usize,
    pub target_kind: TargetKind,
    pub base_level: f64,
    pub temperature_profile: LagProfile,
    pub moisture_profile: LagProfile,
    pub seasonal_amplitude: f64,
    pub seasonal_period: f64,
    pub noise_std: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub temperature_spread: f64,
    pub moisture_spread: f64,
    /// Probability that a pixel belongs to cropland.
    pub mask_keep_fraction: f64,
    pub moisture_cadence_days: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_days: 1200,
            start_date: NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date"),
            lag_days: crate::lag::DEFAULT_LAG_DAYS,
            horizon_days: crate::lag::DEFAULT_HORIZON_DAYS,
            target_kind: TargetKind::Yield,
            base_level: 200.0,
            temperature_profile: LagProfile::Exponential { scale: 8.0, tau: 12.0 },
            moisture_profile: LagProfile::Exponential { scale: 400.0, tau: 8.0 },
            seasonal_amplitude: 30.0,
            seasonal_period: 365.0,
            noise_std: 0.0,
            image_width: 16,
            image_height: 16,
            temperature_spread: 1.5,
            moisture_spread: 0.03,
            mask_keep_fraction: 0.6,
            moisture_cadence_days: 3,
        }
    }
}

impl SynthConfig {
    /// Price-like defaults: the yield signal scaled down to dollars.
    pub fn price() -> Self {
        Self {
            target_kind: TargetKind::Price,
            base_level: 2.0,
            temperature_profile: LagProfile::Exponential { scale: 0.08, tau: 12.0 },
            moisture_profile: LagProfile::Exponential { scale: 4.0, tau: 8.0 },
            seasonal_amplitude: 0.3,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_days <= self.lag_days + self.horizon_days {
            return Err(DataError::InvalidParameter(format!(
                "n_days ({}) must exceed lag + horizon ({})",
                self.n_days,
                self.lag_days + self.horizon_days
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(DataError::InvalidParameter("noise_std must be >= 0".into()));
        }
        if self.lag_days == 0 || self.horizon_days == 0 || self.moisture_cadence_days == 0 {
            return Err(DataError::InvalidParameter("lag, horizon and cadence must be >= 1".into()));
        }
        Ok(())
    }

    fn burn_in(&self) -> usize {
        self.lag_days - 1 + self.horizon_days
    }

    /// Sets `noise_std` so that signal variance / noise variance ≈ `snr`.
    pub fn with_snr(mut self, snr: f64) -> Result<Self> {
        let clean = Self { noise_std: 0.0, ..self.clone() };
        let targets: Vec<f64> = gen_station_data(&clean)?.iter().map(|r| r.target).collect();
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / targets.len() as f64;
        self.noise_std = (var / snr).sqrt();
        Ok(self)
    }
}

/// Covariates over burn-in + emitted days.
struct Covariates {
    temp: Vec<f64>,
    moist: Vec<f64>,
}

fn gen_covariates(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Covariates {
    let total = cfg.burn_in() + cfg.n_days;
    let (mut a_t, mut a_m) = (0.0f64, 0.0f64);
    let mut temp = Vec::with_capacity(total);
    let mut moist = Vec::with_capacity(total);
    for i in 0..total {
        let phase = 2.0 * PI * (i as f64 - cfg.burn_in() as f64) / cfg.seasonal_period;
        let e_t: f64 = StandardNormal.sample(rng);
        let e_m: f64 = StandardNormal.sample(rng);
        a_t = 0.9 * a_t + 1.0 * e_t;
        a_m = 0.9 * a_m + 0.015 * e_m;
        let t = 16.0 + 6.0 * (phase - PI / 2.0).sin() + a_t;
        let m = (0.25 + 0.08 * (phase + 1.0).sin() + a_m).max(0.01);
        // readings are f32-representable so rasters can reproduce them exactly
        temp.push(t as f32 as f64);
        moist.push(m as f32 as f64);
    }
    Covariates { temp, moist }
}

/// Noise-free planted target for input day index `t` of the covariate arrays.
pub fn planted_signal(temp: &[f64], moist: &[f64], t: usize, w_t: &[f64], w_m: &[f64], cfg: &SynthConfig) -> f64 {
    let mut v = cfg.base_level;
    for (j, w) in w_t.iter().enumerate() {
        v += w * temp[t - j];
    }
    for (j, w) in w_m.iter().enumerate() {
        v += w * moist[t - j];
    }
    let day = t as f64 - cfg.burn_in() as f64;
    v + cfg.seasonal_amplitude * (2.0 * PI * day / cfg.seasonal_period).sin()
}

pub fn gen_station_data(cfg: &SynthConfig) -> Result<Vec<DailyRecord>> {
    cfg.validate()?;
    let w_t = cfg.temperature_profile.weights(cfg.lag_days)?;
    let w_m = cfg.moisture_profile.weights(cfg.lag_days)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cov = gen_covariates(cfg, &mut rng);
    let burn = cfg.burn_in();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_a015e);
    let mut out = Vec::with_capacity(cfg.n_days);
    for d in 0..cfg.n_days {
        let idx = burn + d;
        let t = idx - cfg.horizon_days;
        let noise: f64 = StandardNormal.sample(&mut noise_rng);
        let target = planted_signal(&cov.temp, &cov.moist, t, &w_t, &w_m, cfg) + cfg.noise_std * noise;
        out.push(DailyRecord {
            date: cfg.start_date + chrono::Days::new(d as u64),
            soil_temperature: cov.temp[idx],
            soil_moisture: cov.moist[idx],
            target: target.max(0.0),
            target_kind: cfg.target_kind,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SynthRasters {
    pub temperature: Vec<RasterImage>,
    /// Emitted every `moisture_cadence_days`, starting on the first day.
    pub moisture: Vec<RasterImage>,
    pub mask: LandMask,
}

fn synth_image(
    cfg: &SynthConfig,
    mask: &LandMask,
    band: crate::raster::Band,
    date: NaiveDate,
    reading: f64,
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> RasterImage {
    let n = cfg.image_width * cfg.image_height;
    let dev: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let kept = mask.kept().max(1) as f64;
    let mean_dev = dev.iter().zip(&mask.keep).filter(|(_, &k)| k).map(|(d, _)| d).sum::<f64>() / kept;
    let pixels = dev
        .iter()
        .zip(&mask.keep)
        .map(|(d, &k)| if k { (reading + spread * (d - mean_dev)) as f32 } else { 0.0 })
        .collect();
    RasterImage::new(cfg.image_width, cfg.image_height, band, date, pixels).expect("dimensions checked")
}

/// Rasters whose unmasked pixels average to the station reading of their day.
/// Pixels outside the generated land mask read 0.
pub fn gen_raster_series(cfg: &SynthConfig, station: &[DailyRecord]) -> Result<SynthRasters> {
    if cfg.image_width < 8 || cfg.image_height < 8 {
        return Err(DataError::InvalidParameter(format!(
            "synthetic images must be at least 8x8, got {}x{}",
            cfg.image_width, cfg.image_height
        )));
    }
    if station.is_empty() {
        return Err(DataError::Empty("station series"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x4a57e4));
    let n = cfg.image_width * cfg.image_height;
    let mut keep: Vec<bool> = (0..n).map(|_| rng.random_bool(cfg.mask_keep_fraction.clamp(0.0, 1.0))).collect();
    if !keep.iter().any(|&k| k) {
        keep[0] = true;
    }
    let mask = LandMask::new(cfg.image_width, cfg.image_height, keep)?;
    let mut temperature = Vec::with_capacity(station.len());
    let mut moisture = Vec::new();
    for (i, rec) in station.iter().enumerate() {
        use crate::raster::Band;
        temperature.push(synth_image(
            cfg,
            &mask,
            Band::SurfaceTemperature,
            rec.date,
            rec.soil_temperature,
            cfg.temperature_spread,
            &mut rng,
        ));
        if i % cfg.moisture_cadence_days == 0 {
            moisture.push(synth_image(cfg, &mask, Band::Moisture, rec.date, rec.soil_moisture, cfg.moisture_spread, &mut rng));
        }
    }
    Ok(SynthRasters { temperature, moisture, mask })
}
