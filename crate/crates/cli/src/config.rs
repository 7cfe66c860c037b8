//! The pipeline config document. Every field has a named default, so `{}` is
//! a complete config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strawcast_core::histogram::{DEFAULT_BINS, DEFAULT_CUBE_WINDOW, DEFAULT_HI_PERCENTILE, DEFAULT_LO_PERCENTILE};
use strawcast_core::lag::DEFAULT_TRAIN_FRACTION;
use strawcast_core::pca::DEFAULT_COMPONENTS;
use strawcast_core::{LagConfig, SynthConfig, TargetKind};
use strawcast_nn::model::{AttCnnLstmLayers, LstmBaselineLayers, SeriesnetGruLayers, SimCnnLstmLayers};
use strawcast_nn::{Architecture, ModelKind, TrainConfig};

use crate::error::{CliError, Result};

pub const DEFAULT_ENSEMBLE_MEMBERS: usize = 5;
/// Consecutive lag-feature rows fed to the station models as one sequence.
pub const DEFAULT_STATION_WINDOW: usize = 140;
pub const DEFAULT_OUTPUT_DIR: &str = "out";
pub const DEFAULT_IMPORTANCE_TRIALS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Defaults to `<output_dir>/data/station.csv`.
    pub station_csv: Option<PathBuf>,
    /// Defaults to `<output_dir>/data/rasters`.
    pub raster_dir: Option<PathBuf>,
    /// Defaults to `<raster_dir>/mask.json`.
    pub mask: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { station_csv: None, raster_dir: None, mask: None, output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSettings {
    pub n_bins: usize,
    pub lo_percentile: f64,
    pub hi_percentile: f64,
    /// Days of histograms per satellite sample.
    pub window: usize,
    pub normalize: bool,
}

impl Default for HistogramSettings {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            lo_percentile: DEFAULT_LO_PERCENTILE,
            hi_percentile: DEFAULT_HI_PERCENTILE,
            window: DEFAULT_CUBE_WINDOW,
            normalize: true,
        }
    }
}

/// Layer hyperparameters per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub att_cnn_lstm: AttCnnLstmLayers,
    pub seriesnet_gru: SeriesnetGruLayers,
    pub sim_cnn_lstm_yield: SimCnnLstmLayers,
    pub sim_cnn_lstm_price: SimCnnLstmLayers,
    pub lstm_baseline: LstmBaselineLayers,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            att_cnn_lstm: AttCnnLstmLayers::default(),
            seriesnet_gru: SeriesnetGruLayers::default(),
            sim_cnn_lstm_yield: SimCnnLstmLayers::yield_default(),
            sim_cnn_lstm_price: SimCnnLstmLayers::price_default(),
            lstm_baseline: LstmBaselineLayers::default(),
        }
    }
}

impl ModelSettings {
    pub fn architecture(&self, kind: ModelKind) -> Architecture {
        match kind {
            ModelKind::AttCnnLstm => Architecture::AttCnnLstm(self.att_cnn_lstm.clone()),
            ModelKind::SeriesnetGru => Architecture::SeriesnetGru(self.seriesnet_gru.clone()),
            ModelKind::SimCnnLstmYield => Architecture::SimCnnLstmYield(self.sim_cnn_lstm_yield.clone()),
            ModelKind::SimCnnLstmPrice => Architecture::SimCnnLstmPrice(self.sim_cnn_lstm_price.clone()),
            ModelKind::LstmBaseline => Architecture::LstmBaseline(self.lstm_baseline.clone()),
        }
    }
}

fn default_target() -> TargetKind {
    TargetKind::Yield
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds model initialization and training; SIM member `i` uses `seed + i`.
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_kind: TargetKind,
    pub paths: PathsConfig,
    pub lag: LagConfig,
    pub pca_components: usize,
    pub train_fraction: f64,
    pub station_window: usize,
    pub histogram: HistogramSettings,
    pub train: TrainConfig,
    pub ensemble_members: usize,
    pub importance_trials: usize,
    pub models: ModelSettings,
    /// Generator settings for `synth`; `None` picks the defaults for `target_kind`.
    pub synth: Option<SynthConfig>,
    /// When set, `synth` derives its noise level from this signal-to-noise ratio.
    pub synth_snr: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            target_kind: default_target(),
            paths: PathsConfig::default(),
            lag: LagConfig::default(),
            pca_components: DEFAULT_COMPONENTS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            station_window: DEFAULT_STATION_WINDOW,
            histogram: HistogramSettings::default(),
            train: TrainConfig::default(),
            ensemble_members: DEFAULT_ENSEMBLE_MEMBERS,
            importance_trials: DEFAULT_IMPORTANCE_TRIALS,
            models: ModelSettings::default(),
            synth: None,
            synth_snr: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.paths.output_dir);
        for p in [&mut cfg.paths.station_csv, &mut cfg.paths.raster_dir, &mut cfg.paths.mask].into_iter().flatten() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.lag.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.pca_components == 0 {
            return bad("pca_components must be positive".into());
        }
        if self.station_window == 0 || self.histogram.window == 0 || self.histogram.n_bins == 0 {
            return bad("station_window, histogram.window and histogram.n_bins must be positive".into());
        }
        if self.ensemble_members == 0 {
            return bad("ensemble_members must be positive".into());
        }
        if self.importance_trials == 0 {
            return bad("importance_trials must be positive".into());
        }
        if matches!(self.synth_snr, Some(s) if !(s > 0.0)) {
            return bad("synth_snr must be positive".into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output_dir
    }

    pub fn station_csv(&self) -> PathBuf {
        self.paths.station_csv.clone().unwrap_or_else(|| self.output_dir().join("data").join("station.csv"))
    }

    pub fn raster_dir(&self) -> PathBuf {
        self.paths.raster_dir.clone().unwrap_or_else(|| self.output_dir().join("data").join("rasters"))
    }

    pub fn mask_path(&self) -> PathBuf {
        self.paths.mask.clone().unwrap_or_else(|| self.raster_dir().join("mask.json"))
    }

    pub fn features_dir(&self) -> PathBuf {
        self.output_dir().join("features")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir().join("models")
    }

    pub fn forecasts_dir(&self) -> PathBuf {
        self.output_dir().join("forecasts")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir().join("reports")
    }

    pub fn synth_config(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_else(|| match self.target_kind {
            TargetKind::Yield => SynthConfig::default(),
            TargetKind::Price => SynthConfig::price(),
        })
    }

    /// The satellite-branch model matching the target.
    pub fn sim_kind(&self) -> ModelKind {
        match self.target_kind {
            TargetKind::Yield => ModelKind::SimCnnLstmYield,
            TargetKind::Price => ModelKind::SimCnnLstmPrice,
        }
    }

    /// Kinds trained when none are named: baseline, both station models and the SIM ensemble.
    pub fn default_kinds(&self) -> Vec<ModelKind> {
        vec![ModelKind::LstmBaseline, ModelKind::AttCnnLstm, ModelKind::SeriesnetGru, self.sim_kind()]
    }
}
