//! Data side of the strawberry yield/price forecaster.
//!
//! - [`station`]: daily soil readings and their CSV form
//! - [`lag`]: lag windows and chronological splits
//! - [`scaler`], [`pca`]: normalization and principal-component projection
//! - [`importance`]: permutation feature ranking
//! - [`raster`], [`histogram`]: satellite rasters reduced to histogram cubes
//! - [`metrics`]: voting ensembles, MAE/RMSE/R² and the aggregated measure
//! - [`synth`]: planted-signal data for end-to-end checks

pub mod error;
pub mod histogram;
pub mod importance;
pub mod lag;
pub mod metrics;
pub mod pca;
pub mod raster;
pub mod scaler;
pub mod station;
pub mod synth;

pub use error::{DataError, Result};
pub use histogram::{DailyHistograms, HistogramConfig, HistogramCube};
pub use lag::{FeatureMatrix, LagConfig};
pub use metrics::{ForecastSeries, MetricsReport};
pub use pca::PcaModel;
pub use raster::{Band, LandMask, RasterImage};
pub use scaler::Scaler;
pub use station::{DailyRecord, TargetKind};
pub use synth::SynthConfig;
